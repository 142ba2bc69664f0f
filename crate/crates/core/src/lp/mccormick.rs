use serde::{Deserialize, Serialize};

use super::model::{LinearProgram, Relation};
use super::LpError;

/// `coef * x_i * x_j` added to the left-hand side of `row`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BilinearTerm {
    pub row: usize,
    pub coef: f64,
    pub i: usize,
    pub j: usize,
}

/// A linear program whose rows may carry bilinear terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BilinearProgram {
    pub lp: LinearProgram,
    pub terms: Vec<BilinearTerm>,
    /// Branching priority per variable; higher is split first.
    pub priority: Vec<f64>,
}

impl BilinearProgram {
    pub fn new(lp: LinearProgram) -> BilinearProgram {
        let n = lp.n_vars();
        BilinearProgram { lp, terms: Vec::new(), priority: vec![0.0; n] }
    }

    pub fn add_term(&mut self, row: usize, coef: f64, i: usize, j: usize) {
        if coef != 0.0 {
            self.terms.push(BilinearTerm { row, coef, i, j });
        }
    }

    /// Distinct unordered variable pairs, in first-appearance order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for t in &self.terms {
            let key = (t.i.min(t.j), t.i.max(t.j));
            if !out.contains(&key) {
                out.push(key);
            }
        }
        out
    }

    /// Variables appearing in some product.
    pub fn bilinear_vars(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.terms.iter().flat_map(|t| [t.i, t.j]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Left-hand side of every row with products evaluated exactly.
    pub fn row_activities(&self, x: &[f64]) -> Vec<f64> {
        let mut act: Vec<f64> = self.lp.rows.iter().map(|r| r.activity(x)).collect();
        for t in &self.terms {
            act[t.row] += t.coef * x[t.i] * x[t.j];
        }
        act
    }

    /// Largest violation of rows (exact products) and variable bounds.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let act = self.row_activities(x);
        let rows = self.lp.rows.iter().zip(&act).map(|(r, a)| match r.relation {
            Relation::Le => (a - r.rhs).max(0.0),
            Relation::Ge => (r.rhs - a).max(0.0),
            Relation::Eq => (a - r.rhs).abs(),
        });
        let bounds = self.lp.vars.iter().zip(x).map(|(v, xv)| (v.lower - xv).max(xv - v.upper).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    /// The linear program obtained by fixing some variables; products with a
    /// fixed factor become linear in the other one.
    pub fn fix(&self, fixed: &[Option<f64>]) -> LinearProgram {
        let mut lp = self.lp.clone();
        for (j, f) in fixed.iter().enumerate() {
            if let Some(v) = f {
                lp.vars[j].lower = *v;
                lp.vars[j].upper = *v;
            }
        }
        for t in &self.terms {
            let row = &mut lp.rows[t.row];
            match (fixed[t.i], fixed[t.j]) {
                (Some(a), Some(b)) => row.rhs -= t.coef * a * b,
                (Some(a), None) => push_coef(&mut row.coefs, t.j, t.coef * a),
                (None, Some(b)) => push_coef(&mut row.coefs, t.i, t.coef * b),
                (None, None) => panic!("product of two free variables in fix()"),
            }
        }
        lp
    }
}

fn push_coef(coefs: &mut Vec<(usize, f64)>, j: usize, a: f64) {
    match coefs.iter_mut().find(|(k, _)| *k == j) {
        Some(e) => e.1 += a,
        None => coefs.push((j, a)),
    }
}

/// Relaxation of a bilinear program over `boxes`, with the auxiliary
/// variable index of each pair from [`BilinearProgram::pairs`].
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub lp: LinearProgram,
    pub aux: Vec<usize>,
    pub pairs: Vec<(usize, usize)>,
}

/// Replaces each product by an auxiliary `w` bounded by the four McCormick
/// inequalities over `boxes`. The variable bounds of the result are `boxes`.
pub fn mccormick_relax(bp: &BilinearProgram, boxes: &[(f64, f64)]) -> Result<Relaxation, LpError> {
    let mut lp = bp.lp.clone();
    for (v, (l, u)) in lp.vars.iter_mut().zip(boxes) {
        v.lower = *l;
        v.upper = *u;
    }
    let pairs = bp.pairs();
    let mut aux = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let (xl, xu) = boxes[i];
        let (yl, yu) = boxes[j];
        for (k, l, u) in [(i, xl, xu), (j, yl, yu)] {
            if !(l.is_finite() && u.is_finite()) {
                return Err(LpError::UnboundedBox { var: k, name: bp.lp.vars[k].name.clone() });
            }
        }
        let corners = [xl * yl, xl * yu, xu * yl, xu * yu];
        let wl = corners.iter().copied().fold(f64::INFINITY, f64::min);
        let wu = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let name = format!("w[{},{}]", bp.lp.vars[i].name, bp.lp.vars[j].name);
        let w = lp.add_var(name.clone(), wl, wu);
        aux.push(w);
        // w >= xl y + x yl - xl yl,  w >= xu y + x yu - xu yu
        // w <= xu y + x yl - xu yl,  w <= xl y + x yu - xl yu
        let rows = [
            (xl, yl, Relation::Ge),
            (xu, yu, Relation::Ge),
            (xu, yl, Relation::Le),
            (xl, yu, Relation::Le),
        ];
        for (k, (a, b, rel)) in rows.into_iter().enumerate() {
            let coefs = if i == j { vec![(w, 1.0), (i, -(a + b))] } else { vec![(w, 1.0), (j, -a), (i, -b)] };
            lp.add_row(format!("mc{k}:{name}"), coefs, rel, -a * b);
        }
    }
    for t in &bp.terms {
        let key = (t.i.min(t.j), t.i.max(t.j));
        let k = pairs.iter().position(|p| *p == key).expect("pair listed");
        push_coef(&mut lp.rows[t.row].coefs, aux[k], t.coef);
    }
    Ok(Relaxation { lp, aux, pairs })
}

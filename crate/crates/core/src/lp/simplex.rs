//! Dense bounded-variable primal simplex with two phases.
//!
//! Every row gets a slack `s` with `a x + s = b`; the slack bounds encode the
//! relation (`<=`: `s >= 0`, `>=`: `s <= 0`, `=`: `s = 0`). Rows whose initial
//! residual cannot be absorbed by the slack get an artificial column.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::model::{LinearProgram, Relation, Sense};
use super::LpError;

const PIVOT_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const HARRIS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum PivotRule {
    /// Largest reduced cost, with Bland's rule after a run of degenerate pivots.
    #[default]
    Dantzig,
    /// Smallest eligible index throughout.
    Bland,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// Solution of an LP together with the data needed to re-check duality.
///
/// Duals and reduced costs are derivatives of the objective: `duals[r]` is
/// `d obj / d rhs[r]`, `reduced_costs[j]` is `c_j - a_j^T duals`.
#[derive(Debug, Clone)]
pub struct DualCertificate {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub iterations: usize,
    pub problem: LinearProgram,
}

impl DualCertificate {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Dual objective `b^T y + sum_j d_j * bound_j`, or `None` when the duals
    /// have the wrong sign for their row relation or point at an infinite bound.
    pub fn dual_objective(&self) -> Option<f64> {
        let lp = &self.problem;
        let sign = if lp.sense == Sense::Max { 1.0 } else { -1.0 };
        let tol = 1e-7;
        let mut d = lp.objective.clone();
        let mut total = 0.0;
        for (r, row) in lp.rows.iter().enumerate() {
            let y = self.duals[r];
            let ok = match row.relation {
                Relation::Le => sign * y >= -tol,
                Relation::Ge => sign * y <= tol,
                Relation::Eq => true,
            };
            if !ok || !y.is_finite() {
                return None;
            }
            total += row.rhs * y;
            for (j, a) in &row.coefs {
                d[*j] -= a * y;
            }
        }
        for (j, v) in lp.vars.iter().enumerate() {
            let dj = d[j];
            let bound = if sign * dj > tol {
                v.upper
            } else if sign * dj < -tol {
                v.lower
            } else {
                self.x[j]
            };
            if !bound.is_finite() {
                return None;
            }
            total += dj * bound;
        }
        Some(total)
    }

    /// Largest product of a row dual with its row slack, and of a reduced cost
    /// with the distance to the nearer finite bound.
    pub fn complementarity_residual(&self) -> f64 {
        let lp = &self.problem;
        let mut worst: f64 = 0.0;
        for (r, row) in lp.rows.iter().enumerate() {
            worst = worst.max((self.duals[r] * (row.rhs - row.activity(&self.x))).abs());
        }
        for (j, v) in lp.vars.iter().enumerate() {
            let gap = (self.x[j] - v.lower).abs().min((v.upper - self.x[j]).abs());
            if gap.is_finite() {
                worst = worst.max((self.reduced_costs[j] * gap).abs());
            } else if self.reduced_costs[j] != 0.0 {
                worst = worst.max(self.reduced_costs[j].abs());
            }
        }
        worst
    }
}

/// True iff the certificate is optimal and its primal and dual objectives
/// agree to `1e-6 (1 + |obj|)`.
pub fn verify_strong_duality(cert: &DualCertificate) -> bool {
    if !cert.is_optimal() {
        return false;
    }
    match cert.dual_objective() {
        Some(dual) => (dual - cert.objective).abs() <= 1e-6 * (1.0 + cert.objective.abs()),
        None => false,
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<DualCertificate, LpError> {
    solve_lp_with(lp, PivotRule::Dantzig)
}

pub fn solve_lp_with(lp: &LinearProgram, rule: PivotRule) -> Result<DualCertificate, LpError> {
    lp.validate()?;
    let mut tab = Tableau::new(lp);
    let n_struct = lp.n_vars();
    let mut iterations = 0;

    if tab.n_art > 0 {
        let mut cost = vec![0.0; tab.ncols];
        for c in cost.iter_mut().skip(tab.ncols - tab.n_art) {
            *c = -1.0;
        }
        tab.set_cost(cost);
        tab.run(rule, n_struct, &mut iterations)?;
        let infeas: f64 = (tab.ncols - tab.n_art..tab.ncols).map(|k| tab.x[k].abs()).sum();
        if infeas > FEAS_TOL * (1.0 + tab.rhs_scale) {
            return Ok(tab.certificate(lp, LpStatus::Infeasible, iterations, None));
        }
        for k in tab.ncols - tab.n_art..tab.ncols {
            tab.lo[k] = 0.0;
            tab.hi[k] = 0.0;
            if tab.pos[k].is_none() {
                tab.x[k] = 0.0;
            }
        }
    }

    let sign = if lp.sense == Sense::Max { 1.0 } else { -1.0 };
    let mut cost = vec![0.0; tab.ncols];
    for (j, c) in lp.objective.iter().enumerate() {
        cost[j] = sign * c;
    }
    tab.set_cost(cost);
    let mut retries = 0;
    loop {
        if let Phase::Unbounded = tab.run(rule, n_struct, &mut iterations)? {
            return Ok(tab.certificate(lp, LpStatus::Unbounded, iterations, None));
        }
        let y = tab.refine()?;
        if tab.is_clean() || retries >= 3 {
            return Ok(tab.certificate(lp, LpStatus::Optimal, iterations, Some(y)));
        }
        retries += 1;
        tab.rebuild()?;
    }
}

enum Phase {
    Optimal,
    Unbounded,
}

struct Tableau {
    m: usize,
    n_struct: usize,
    n_art: usize,
    ncols: usize,
    /// Original columns `[A | I | art]`, dense, row-major.
    a: Vec<f64>,
    b: Vec<f64>,
    /// Current `B^-1 [A | I | art]`.
    t: Vec<f64>,
    d: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    head: Vec<usize>,
    pos: Vec<Option<usize>>,
    rhs_scale: f64,
}

impl Tableau {
    fn new(lp: &LinearProgram) -> Tableau {
        let m = lp.n_rows();
        let n = lp.n_vars();
        let mut lo: Vec<f64> = lp.vars.iter().map(|v| v.lower).collect();
        let mut hi: Vec<f64> = lp.vars.iter().map(|v| v.upper).collect();
        let mut x: Vec<f64> = lp
            .vars
            .iter()
            .map(|v| {
                if v.lower.is_finite() {
                    v.lower
                } else if v.upper.is_finite() {
                    v.upper
                } else {
                    0.0
                }
            })
            .collect();
        for row in &lp.rows {
            let (l, h) = match row.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
        }
        // Slack values absorbing the residual; rows whose slack cannot take
        // it get an artificial with sign matching the leftover.
        let mut art_rows = Vec::new();
        let mut slack_val = Vec::with_capacity(m);
        for (r, row) in lp.rows.iter().enumerate() {
            let resid = row.rhs - row.activity(&x);
            let s = resid.clamp(lo[n + r], hi[n + r]);
            slack_val.push(s);
            if (resid - s).abs() > 0.0 {
                art_rows.push((r, (resid - s).signum(), (resid - s).abs()));
            }
        }
        x.extend(slack_val);
        let n_art = art_rows.len();
        let ncols = n + m + n_art;
        let mut a = vec![0.0; m * ncols];
        for (r, row) in lp.rows.iter().enumerate() {
            for (j, v) in &row.coefs {
                a[r * ncols + j] = *v;
            }
            a[r * ncols + n + r] = 1.0;
        }
        let mut head: Vec<usize> = (n..n + m).collect();
        for (k, (r, sigma, val)) in art_rows.iter().enumerate() {
            let col = n + m + k;
            a[r * ncols + col] = *sigma;
            lo.push(0.0);
            hi.push(f64::INFINITY);
            x.push(*val);
            head[*r] = col;
        }
        let mut t = a.clone();
        for (r, sigma, _) in &art_rows {
            // Basis column is sigma e_r; its inverse scales the row by sigma.
            for v in &mut t[r * ncols..(r + 1) * ncols] {
                *v *= sigma;
            }
        }
        let mut pos = vec![None; ncols];
        for (r, h) in head.iter().enumerate() {
            pos[*h] = Some(r);
        }
        let b: Vec<f64> = lp.rows.iter().map(|r| r.rhs).collect();
        let rhs_scale = b.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        Tableau { m, n_struct: n, n_art, ncols, a, b, t, d: vec![0.0; ncols], cost: vec![0.0; ncols], lo, hi, x, head, pos, rhs_scale }
    }

    fn set_cost(&mut self, cost: Vec<f64>) {
        self.cost = cost;
        self.d = self.cost.clone();
        for r in 0..self.m {
            let cb = self.cost[self.head[r]];
            if cb != 0.0 {
                let row = &self.t[r * self.ncols..(r + 1) * self.ncols];
                for (dk, tk) in self.d.iter_mut().zip(row) {
                    *dk -= cb * tk;
                }
            }
        }
    }

    fn entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.ncols {
            if self.pos[j].is_some() || self.lo[j] == self.hi[j] {
                continue;
            }
            let dj = self.d[j];
            let dir = if dj > OPT_TOL && self.x[j] < self.hi[j] {
                1.0
            } else if dj < -OPT_TOL && self.x[j] > self.lo[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(k, _)| dj.abs() > self.d[k].abs()) {
                best = Some((j, dir));
            }
        }
        best
    }

    fn run(&mut self, rule: PivotRule, n_struct: usize, iterations: &mut usize) -> Result<Phase, LpError> {
        let limit = 20_000 + 50 * (self.m + self.ncols);
        let degen_limit = (5 * n_struct).max(10);
        let mut degenerate = 0;
        loop {
            let bland = rule == PivotRule::Bland || degenerate > degen_limit;
            let Some((j, dir)) = self.entering(bland) else {
                return Ok(Phase::Optimal);
            };
            *iterations += 1;
            if *iterations > limit {
                return Err(LpError::CyclingGuard { iterations: *iterations });
            }

            let flip = self.hi[j] - self.lo[j];
            let (step, leave) = self.ratio_test(j, dir, bland);
            if flip <= step {
                if !flip.is_finite() {
                    return Ok(Phase::Unbounded);
                }
                self.shift(j, dir * flip);
                self.x[j] = if dir > 0.0 { self.hi[j] } else { self.lo[j] };
                degenerate = 0;
                continue;
            }
            let (r, rate) = leave.expect("finite step has a blocking row");
            self.shift(j, dir * step);
            let out = self.head[r];
            self.x[out] = if rate < 0.0 { self.lo[out] } else { self.hi[out] };
            self.pivot(r, j);
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
        }
    }

    /// Two-pass ratio test: the smallest step with bounds relaxed by
    /// `HARRIS_TOL`, then among rows blocking within it the one with a large
    /// pivot (lowest basic index under Bland).
    fn ratio_test(&self, j: usize, dir: f64, bland: bool) -> (f64, Option<(usize, f64)>) {
        let mut relaxed = f64::INFINITY;
        let mut blocking = Vec::new();
        for i in 0..self.m {
            let alpha = self.t[i * self.ncols + j];
            if alpha.abs() < PIVOT_TOL {
                continue;
            }
            let b = self.head[i];
            let rate = -dir * alpha;
            let room = if rate < 0.0 { self.x[b] - self.lo[b] } else { self.hi[b] - self.x[b] };
            if !room.is_finite() {
                continue;
            }
            let room = room.max(0.0);
            relaxed = relaxed.min((room + HARRIS_TOL) / rate.abs());
            blocking.push((i, rate, room / rate.abs()));
        }
        let within: Vec<_> = blocking.into_iter().filter(|(_, _, ratio)| *ratio <= relaxed).collect();
        let big = within.iter().map(|(i, _, _)| self.t[i * self.ncols + j].abs()).fold(0.0, f64::max);
        let mut leave: Option<(usize, f64, f64)> = None;
        for (i, rate, ratio) in within {
            let alpha = self.t[i * self.ncols + j].abs();
            let better = match leave {
                None => true,
                Some((r, _, _)) if bland => {
                    alpha >= 0.1 * big && (self.t[r * self.ncols + j].abs() < 0.1 * big || self.head[i] < self.head[r])
                }
                Some((r, _, _)) => alpha > self.t[r * self.ncols + j].abs(),
            };
            if better {
                leave = Some((i, rate, ratio));
            }
        }
        match leave {
            Some((i, rate, ratio)) => (ratio, Some((i, rate))),
            None => (f64::INFINITY, None),
        }
    }

    /// Moves nonbasic `j` by `delta` and the basic variables with it.
    fn shift(&mut self, j: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        self.x[j] += delta;
        for i in 0..self.m {
            let alpha = self.t[i * self.ncols + j];
            if alpha != 0.0 {
                self.x[self.head[i]] -= delta * alpha;
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let nc = self.ncols;
        let p = self.t[r * nc + j];
        let nz: Vec<usize> = (0..nc).filter(|&k| self.t[r * nc + k] != 0.0).collect();
        for &k in &nz {
            self.t[r * nc + k] /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * nc);
        let (prow, after) = rest.split_at_mut(nc);
        for row in before.chunks_mut(nc).chain(after.chunks_mut(nc)) {
            let f = row[j];
            if f != 0.0 {
                for &k in &nz {
                    row[k] -= f * prow[k];
                }
                row[j] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for &k in &nz {
                self.d[k] -= f * prow[k];
            }
            self.d[j] = 0.0;
        }
        let out = self.head[r];
        self.pos[out] = None;
        self.pos[j] = Some(r);
        self.head[r] = j;
    }

    fn basis_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |i, c| self.a[i * self.ncols + self.head[c]])
    }

    /// Recomputes basic values and duals from the original data; returns `y`
    /// with `B^T y = c_B` and resets the reduced costs from it.
    fn refine(&mut self) -> Result<Vec<f64>, LpError> {
        if self.m == 0 {
            self.d = self.cost.clone();
            return Ok(Vec::new());
        }
        let lu = self.basis_matrix().lu();
        let mut rhs = DVector::from_vec(self.b.clone());
        for k in 0..self.ncols {
            if self.pos[k].is_none() && self.x[k] != 0.0 {
                for i in 0..self.m {
                    rhs[i] -= self.a[i * self.ncols + k] * self.x[k];
                }
            }
        }
        let xb = lu.solve(&rhs).ok_or_else(|| LpError::NumericBreakdown("singular basis".into()))?;
        let cb = DVector::from_iterator(self.m, self.head.iter().map(|h| self.cost[*h]));
        let y = self
            .basis_matrix()
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| LpError::NumericBreakdown("singular basis transpose".into()))?;
        if xb.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(LpError::NumericBreakdown("non-finite basic solution".into()));
        }
        for (i, h) in self.head.iter().enumerate() {
            self.x[*h] = xb[i];
        }
        for k in 0..self.ncols {
            let mut dk = self.cost[k];
            for i in 0..self.m {
                dk -= self.a[i * self.ncols + k] * y[i];
            }
            self.d[k] = if self.pos[k].is_some() { 0.0 } else { dk };
        }
        Ok(y.iter().copied().collect())
    }

    fn is_clean(&self) -> bool {
        let primal = self.head.iter().all(|h| {
            let tol = 1e-7 * (1.0 + self.x[*h].abs());
            self.x[*h] >= self.lo[*h] - tol && self.x[*h] <= self.hi[*h] + tol
        });
        primal && self.entering(false).is_none_or(|(j, _)| self.d[j].abs() < 1e-7)
    }

    /// Recomputes the tableau from scratch for the current basis.
    fn rebuild(&mut self) -> Result<(), LpError> {
        let lu = self.basis_matrix().lu();
        let full = DMatrix::from_row_slice(self.m, self.ncols, &self.a);
        let t = lu.solve(&full).ok_or_else(|| LpError::NumericBreakdown("singular basis".into()))?;
        for i in 0..self.m {
            for k in 0..self.ncols {
                self.t[i * self.ncols + k] = t[(i, k)];
            }
        }
        // Clamp basics that drifted outside their bounds by rounding.
        for h in &self.head {
            self.x[*h] = self.x[*h].clamp(self.lo[*h], self.hi[*h]);
        }
        let cost = std::mem::take(&mut self.cost);
        self.set_cost(cost);
        Ok(())
    }

    fn certificate(&self, lp: &LinearProgram, status: LpStatus, iterations: usize, y: Option<Vec<f64>>) -> DualCertificate {
        let sign = if lp.sense == Sense::Max { 1.0 } else { -1.0 };
        // Basic values can sit a rounding error past a bound; report them on it.
        let x: Vec<f64> = self.x[..self.n_struct].iter().zip(&lp.vars).map(|(v, var)| v.clamp(var.lower, var.upper)).collect();
        let duals: Vec<f64> = y.map(|y| y.iter().map(|v| sign * v).collect()).unwrap_or_else(|| vec![0.0; self.m]);
        let mut reduced_costs = lp.objective.clone();
        for (r, row) in lp.rows.iter().enumerate() {
            for (j, a) in &row.coefs {
                reduced_costs[*j] -= a * duals[r];
            }
        }
        let objective = match status {
            LpStatus::Unbounded => sign * f64::INFINITY,
            _ => lp.objective_value(&x),
        };
        DualCertificate { status, x, objective, duals, reduced_costs, iterations, problem: lp.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::model::{LinearProgram, Relation, Sense};

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn single_bound_row() {
        let mut lp = LinearProgram::new(Sense::Max);
        let x = lp.add_var("x", 0.0, f64::INFINITY);
        lp.set_objective(x, 1.0);
        lp.add_row("cap", vec![(x, 1.0)], Relation::Le, 5.0);
        let cert = solve_lp(&lp).unwrap();
        assert_eq!(cert.status, LpStatus::Optimal);
        assert!(approx(cert.objective, 5.0));
        assert!(approx(cert.duals[0], 1.0));
        assert!(verify_strong_duality(&cert));
    }

    #[test]
    fn conflicting_rows_are_infeasible() {
        let mut lp = LinearProgram::new(Sense::Max);
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        lp.set_objective(x, 1.0);
        lp.add_row("hi", vec![(x, 1.0)], Relation::Le, 1.0);
        lp.add_row("lo", vec![(x, 1.0)], Relation::Ge, 2.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn open_direction_is_unbounded() {
        let mut lp = LinearProgram::new(Sense::Min);
        let x = lp.add_var("x", f64::NEG_INFINITY, 3.0);
        let y = lp.add_var("y", 0.0, f64::INFINITY);
        lp.set_objective(x, 1.0);
        lp.add_row("r", vec![(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn min_problem_duals_are_objective_derivatives() {
        // min 2x + 3y  s.t. x + y >= 4, x <= 3  ->  x = 3, y = 1, obj 9.
        let mut lp = LinearProgram::new(Sense::Min);
        let x = lp.add_var("x", 0.0, f64::INFINITY);
        let y = lp.add_var("y", 0.0, f64::INFINITY);
        lp.set_objective(x, 2.0);
        lp.set_objective(y, 3.0);
        lp.add_row("demand", vec![(x, 1.0), (y, 1.0)], Relation::Ge, 4.0);
        lp.add_row("cap", vec![(x, 1.0)], Relation::Le, 3.0);
        let cert = solve_lp(&lp).unwrap();
        assert!(approx(cert.objective, 9.0));
        assert!(approx(cert.duals[0], 3.0));
        assert!(approx(cert.duals[1], -1.0));
        assert!(verify_strong_duality(&cert));
        assert!(cert.complementarity_residual() < 1e-8);
    }

    #[test]
    fn equality_rows_and_free_variables() {
        // max x - y  s.t. x + y = 2, x - 2y >= -1, x free, y in [0, 5].
        let mut lp = LinearProgram::new(Sense::Max);
        let x = lp.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        let y = lp.add_var("y", 0.0, 5.0);
        lp.set_objective(x, 1.0);
        lp.set_objective(y, -1.0);
        lp.add_row("sum", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 2.0);
        lp.add_row("mix", vec![(x, 1.0), (y, -2.0)], Relation::Ge, -1.0);
        let cert = solve_lp(&lp).unwrap();
        assert!(approx(cert.objective, 2.0));
        assert!(approx(cert.x[0], 2.0) && approx(cert.x[1], 0.0));
        assert!(verify_strong_duality(&cert));
    }

    #[test]
    fn perturbed_duals_fail_verification() {
        let mut lp = LinearProgram::new(Sense::Max);
        let x = lp.add_var("x", 0.0, 10.0);
        let y = lp.add_var("y", 0.0, 10.0);
        lp.set_objective(x, 3.0);
        lp.set_objective(y, 2.0);
        lp.add_row("a", vec![(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
        lp.add_row("b", vec![(x, 1.0), (y, 3.0)], Relation::Le, 6.0);
        let mut cert = solve_lp(&lp).unwrap();
        assert!(verify_strong_duality(&cert));
        cert.duals[0] += 0.5;
        assert!(!verify_strong_duality(&cert));
    }

    #[test]
    fn degenerate_lp_agrees_across_pivot_rules() {
        // Several rows through the optimal vertex (1, 1).
        let mut lp = LinearProgram::new(Sense::Max);
        let x = lp.add_var("x", 0.0, f64::INFINITY);
        let y = lp.add_var("y", 0.0, f64::INFINITY);
        lp.set_objective(x, 1.0);
        lp.set_objective(y, 1.0);
        lp.add_row("a", vec![(x, 1.0), (y, 1.0)], Relation::Le, 2.0);
        lp.add_row("b", vec![(x, 2.0), (y, 1.0)], Relation::Le, 3.0);
        lp.add_row("c", vec![(x, 1.0), (y, 2.0)], Relation::Le, 3.0);
        lp.add_row("d", vec![(x, 1.0)], Relation::Le, 1.0);
        let a = solve_lp_with(&lp, PivotRule::Dantzig).unwrap();
        let b = solve_lp_with(&lp, PivotRule::Bland).unwrap();
        assert!(approx(a.objective, 2.0) && approx(b.objective, 2.0));
        assert!(verify_strong_duality(&a) && verify_strong_duality(&b));
    }

    #[test]
    fn no_rows_moves_to_bounds() {
        let mut lp = LinearProgram::new(Sense::Min);
        let x = lp.add_var("x", -2.0, 3.0);
        let y = lp.add_var("y", -1.0, 4.0);
        lp.set_objective(x, 1.0);
        lp.set_objective(y, -1.0);
        let cert = solve_lp(&lp).unwrap();
        assert_eq!(cert.x, vec![-2.0, 4.0]);
        assert!(verify_strong_duality(&cert));
    }

    #[test]
    fn malformed_input_is_an_error() {
        let mut lp = LinearProgram::new(Sense::Min);
        let x = lp.add_var("x", 0.0, 1.0);
        lp.set_objective(x, f64::NAN);
        assert!(matches!(solve_lp(&lp), Err(LpError::Malformed(_))));
    }
}

//! Spatial branch-and-bound over McCormick relaxations, best-first.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::mccormick::{mccormick_relax, BilinearProgram};
use super::model::Sense;
use super::simplex::{solve_lp_with, LpStatus, PivotRule};
use super::LpError;

/// Row and bound tolerance for accepting an incumbent.
pub const INCUMBENT_TOL: f64 = 1e-6;

/// Proposes full candidate points at a node from its relaxation solution.
pub trait IncumbentHeuristic {
    fn propose(&self, bp: &BilinearProgram, relaxed: &[f64], boxes: &[(f64, f64)]) -> Vec<Vec<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub struct BnbOptions {
    /// Relative optimality gap.
    pub eps: f64,
    pub node_limit: usize,
    /// Known bound on the objective; the search stops once it is reached.
    pub objective_cap: Option<f64>,
    pub rule: PivotRule,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions { eps: 1e-4, node_limit: 5_000, objective_cap: None, rule: PivotRule::Dantzig }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnbStatus {
    Optimal,
    /// Node limit reached; the incumbent may be suboptimal.
    NodeLimit,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct BnbResult {
    pub status: BnbStatus,
    pub x: Option<Vec<f64>>,
    /// Incumbent objective, in the program's own sense.
    pub objective: f64,
    /// Proven bound on the optimum, in the program's own sense.
    pub bound: f64,
    pub root_bound: f64,
    pub nodes: usize,
}

impl BnbResult {
    pub fn gap(&self) -> f64 {
        (self.bound - self.objective).abs()
    }
}

struct Node {
    bound: f64,
    id: usize,
    boxes: Vec<(f64, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then_with(|| other.id.cmp(&self.id))
    }
}

/// Fixes the higher-priority factor of every product at the relaxation value
/// and solves the remaining LP.
pub fn fix_and_solve(bp: &BilinearProgram, relaxed: &[f64], boxes: &[(f64, f64)], rule: PivotRule) -> Option<Vec<f64>> {
    let mut fixed = vec![None; bp.lp.n_vars()];
    for t in &bp.terms {
        if fixed[t.i].is_some() || fixed[t.j].is_some() {
            continue;
        }
        let k = if bp.priority[t.j] > bp.priority[t.i] { t.j } else { t.i };
        fixed[k] = Some(relaxed[k].clamp(boxes[k].0, boxes[k].1));
    }
    let mut lp = bp.fix(&fixed);
    for (j, (l, u)) in boxes.iter().enumerate() {
        if fixed[j].is_none() {
            lp.vars[j].lower = *l;
            lp.vars[j].upper = *u;
        }
    }
    let cert = solve_lp_with(&lp, rule).ok()?;
    (cert.status == LpStatus::Optimal).then_some(cert.x)
}

pub fn spatial_branch_and_bound(bp: &BilinearProgram, opts: BnbOptions) -> Result<BnbResult, LpError> {
    spatial_branch_and_bound_with(bp, opts, &[])
}

pub fn spatial_branch_and_bound_with(
    bp: &BilinearProgram,
    opts: BnbOptions,
    heuristics: &[&dyn IncumbentHeuristic],
) -> Result<BnbResult, LpError> {
    bp.lp.validate()?;
    let sign = if bp.lp.sense == Sense::Max { 1.0 } else { -1.0 };
    let n = bp.lp.n_vars();
    let original: Vec<(f64, f64)> = bp.lp.vars.iter().map(|v| (v.lower, v.upper)).collect();
    let close = |bound: f64, inc: f64| bound <= inc + opts.eps * (1.0 + inc.abs());

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let offer = |x: Vec<f64>, incumbent: &mut Option<(f64, Vec<f64>)>| {
        if x.len() != n || bp.max_violation(&x) > INCUMBENT_TOL {
            return;
        }
        let val = sign * bp.lp.objective_value(&x);
        if incumbent.as_ref().is_none_or(|(best, _)| val > *best + 1e-12) {
            *incumbent = Some((val, x));
        }
    };
    let cap = opts.objective_cap.map(|c| sign * c);
    let at_cap = |inc: &Option<(f64, Vec<f64>)>| match (cap, inc) {
        (Some(c), Some((v, _))) => close(c, *v),
        _ => false,
    };

    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::INFINITY, id: 0, boxes: original.clone() });
    let mut next_id = 1;
    let mut nodes = 0;
    let mut root_bound = f64::NEG_INFINITY;
    let mut open_bound = f64::NEG_INFINITY;
    let mut status = BnbStatus::Optimal;

    while let Some(node) = heap.pop() {
        let inc = incumbent.as_ref().map(|(v, _)| *v).unwrap_or(f64::NEG_INFINITY);
        if close(node.bound, inc) || at_cap(&incumbent) {
            open_bound = open_bound.max(node.bound);
            break;
        }
        if nodes >= opts.node_limit {
            status = BnbStatus::NodeLimit;
            open_bound = open_bound.max(node.bound);
            break;
        }
        nodes += 1;

        let relax = mccormick_relax(bp, &node.boxes)?;
        let cert = solve_lp_with(&relax.lp, opts.rule)?;
        match cert.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                return Err(LpError::Malformed("relaxation is unbounded; bound the objective variables".into()))
            }
            LpStatus::Optimal => {}
        }
        let bound = (sign * cert.objective).min(node.bound);
        if nodes == 1 {
            root_bound = bound;
        }
        let point: Vec<f64> = cert.x[..n].to_vec();
        offer(point.clone(), &mut incumbent);
        if !bp.terms.is_empty() {
            if let Some(x) = fix_and_solve(bp, &point, &node.boxes, opts.rule) {
                offer(x, &mut incumbent);
            }
            for h in heuristics {
                for x in h.propose(bp, &point, &node.boxes) {
                    offer(x, &mut incumbent);
                }
            }
        }
        let inc = incumbent.as_ref().map(|(v, _)| *v).unwrap_or(f64::NEG_INFINITY);
        if close(bound, inc) || at_cap(&incumbent) {
            continue;
        }

        // Product with the largest envelope violation.
        let mut pick: Option<(usize, f64)> = None;
        for (k, &(i, j)) in relax.pairs.iter().enumerate() {
            let weight = bp
                .terms
                .iter()
                .filter(|t| (t.i.min(t.j), t.i.max(t.j)) == (i, j))
                .fold(0.0_f64, |m, t| m.max(t.coef.abs()));
            let viol = weight * (cert.x[relax.aux[k]] - cert.x[i] * cert.x[j]).abs();
            if viol > 1e-10 && pick.is_none_or(|(_, v)| viol > v) {
                pick = Some((k, viol));
            }
        }
        let Some((k, _)) = pick else {
            continue;
        };
        let (i, j) = relax.pairs[k];
        let width = |v: usize| node.boxes[v].1 - node.boxes[v].0;
        let rel = |v: usize| {
            let w0 = original[v].1 - original[v].0;
            if w0 > 0.0 {
                width(v) / w0
            } else {
                0.0
            }
        };
        let score = |v: usize| if width(v) <= 1e-12 { f64::NEG_INFINITY } else { bp.priority[v] * 1e6 + rel(v) };
        let var = if score(j) > score(i) { j } else { i };
        if width(var) <= 1e-12 {
            continue;
        }
        let (l, u) = node.boxes[var];
        let split = cert.x[var].clamp(l + 0.25 * (u - l), l + 0.75 * (u - l));
        for (cl, cu) in [(l, split), (split, u)] {
            let mut boxes = node.boxes.clone();
            boxes[var] = (cl, cu);
            heap.push(Node { bound, id: next_id, boxes });
            next_id += 1;
        }
    }
    if status == BnbStatus::NodeLimit {
        for node in heap.iter() {
            open_bound = open_bound.max(node.bound);
        }
    }

    let (objective, x) = match incumbent {
        Some((v, x)) => (v, Some(x)),
        None => (f64::NEG_INFINITY, None),
    };
    if x.is_none() && status == BnbStatus::Optimal {
        status = BnbStatus::Infeasible;
    }
    let mut bound = open_bound.max(objective);
    if let Some(c) = cap {
        bound = bound.min(c).max(objective);
    }
    if root_bound == f64::NEG_INFINITY {
        root_bound = bound;
    }
    Ok(BnbResult { status, x, objective: sign * objective, bound: sign * bound, root_bound: sign * root_bound, nodes })
}

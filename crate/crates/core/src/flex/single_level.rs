//! Strong-duality single-level program over a set of followers.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use super::follower::{build_follower, FollowerProblem, FollowerSolution, Param, ParamValues, SetpointHandling, VarKind};
use super::scenario::{Activation, Scenario};
use super::worst_case::bisect;
use super::{setpoint_box, FlexContext, FlexError, UpperDecision};
use crate::feeder::ModeKind;
use crate::lp::{
    spatial_branch_and_bound_with, BilinearProgram, BnbOptions, BnbStatus, IncumbentHeuristic, LinearProgram, Relation, Sense,
};

/// Box on follower magnitudes so their products have finite envelopes.
const MAGNITUDE_BOX: (f64, f64) = (0.0, 2.0);

#[derive(Debug, Clone)]
pub struct FollowerBlock {
    pub follower: FollowerProblem,
    /// Single-level index of every follower variable.
    pub x: Vec<usize>,
    /// Dual of every follower row.
    pub lambda: Vec<usize>,
    pub mu_upper: Vec<Option<usize>>,
    pub mu_lower: Vec<Option<usize>>,
    pub sd_row: usize,
}

#[derive(Debug, Clone)]
pub struct SingleLevel {
    pub bp: BilinearProgram,
    pub blocks: Vec<FollowerBlock>,
    pub dp_plus: usize,
    pub dp_minus: usize,
    pub setpoints: Vec<usize>,
    pub dual_box: f64,
}

impl SingleLevel {
    pub fn param_var(&self, p: Param) -> usize {
        match p {
            Param::DpPlus => self.dp_plus,
            Param::DpMinus => self.dp_minus,
            Param::Setpoint(g) => self.setpoints[g],
        }
    }

    pub fn params_at(&self, x: &[f64]) -> ParamValues {
        ParamValues { dp_plus: x[self.dp_plus], dp_minus: x[self.dp_minus], setpoints: self.setpoints.iter().map(|j| x[*j]).collect() }
    }

    /// Dual minus primal objective of every follower at a single-level point.
    pub fn duality_gaps(&self, x: &[f64]) -> Vec<(Scenario, f64, f64)> {
        let params = self.params_at(x);
        self.blocks
            .iter()
            .map(|b| {
                let f = &b.follower;
                let primal: f64 = f.objective.iter().map(|(j, c)| c * x[b.x[*j]]).sum();
                let mut dual = 0.0;
                for (r, row) in f.rows.iter().enumerate() {
                    let rhs = row.rhs + row.rhs_params.iter().map(|(p, a)| a * params.get(*p)).sum::<f64>();
                    dual += rhs * x[b.lambda[r]];
                }
                for (j, v) in f.vars.iter().enumerate() {
                    if let Some(m) = b.mu_upper[j] {
                        dual += v.upper * x[m];
                    }
                    if let Some(m) = b.mu_lower[j] {
                        dual -= v.lower * x[m];
                    }
                }
                (f.scenario, primal, dual - primal)
            })
            .collect()
    }

    /// Full single-level point from follower solutions at `params`, or
    /// `None` if a dual leaves the dual box.
    fn point_from(&self, params: &ParamValues, sols: &[FollowerSolution]) -> Option<Vec<f64>> {
        let mut x = vec![0.0; self.bp.lp.n_vars()];
        x[self.dp_plus] = params.dp_plus;
        x[self.dp_minus] = params.dp_minus;
        for (g, j) in self.setpoints.iter().enumerate() {
            x[*j] = params.setpoints[g];
        }
        for (b, sol) in self.blocks.iter().zip(sols) {
            for (j, v) in b.x.iter().enumerate() {
                x[*v] = sol.cert.x[j];
            }
            for (r, l) in b.lambda.iter().enumerate() {
                let y = sol.cert.duals[r];
                if y.abs() > self.dual_box {
                    return None;
                }
                x[*l] = y;
            }
            for (j, d) in sol.cert.reduced_costs.iter().enumerate() {
                if let (true, Some(m)) = (*d > 0.0, b.mu_upper[j]) {
                    x[m] = *d;
                }
                if let (true, Some(m)) = (*d < 0.0, b.mu_lower[j]) {
                    x[m] = -*d;
                }
            }
        }
        Some(x)
    }
}

/// Setpoint boxes in per unit.
pub(crate) fn setpoint_boxes(ctx: &FlexContext) -> Vec<(f64, f64)> {
    let base = ctx.base();
    ctx.model
        .inverters
        .iter()
        .map(|g| {
            let (l, h) = setpoint_box(g);
            match ctx.mode {
                ModeKind::ConstantPf => (l, h),
                _ => (l / base, h / base),
            }
        })
        .collect()
}

/// Builds `max dp+ - dp-` subject to, for every follower, primal
/// feasibility, dual feasibility, a strong-duality row and the voltage band
/// on its optimal magnitude.
///
/// Follower duals are boxed by `dual_box` so that products with upper-level
/// values have finite envelopes.
pub fn assemble_single_level(ctx: &FlexContext, scenarios: &[Scenario], dual_box: f64) -> Result<SingleLevel, FlexError> {
    if scenarios.is_empty() {
        return Err(FlexError::InvalidConfig("single-level problem needs at least one follower".into()));
    }
    let mut lp = LinearProgram::new(Sense::Max);
    let (lo, hi) = ctx.available;
    let dp_plus = lp.add_var("dp+", 0.0, hi);
    let dp_minus = lp.add_var("dp-", lo, 0.0);
    lp.set_objective(dp_plus, 1.0);
    lp.set_objective(dp_minus, -1.0);
    let boxes = setpoint_boxes(ctx);
    let setpoints: Vec<usize> = boxes.iter().enumerate().map(|(g, (l, h))| lp.add_var(format!("sp[{g}]"), *l, *h)).collect();
    let pv = |p: Param| match p {
        Param::DpPlus => dp_plus,
        Param::DpMinus => dp_minus,
        Param::Setpoint(g) => setpoints[g],
    };

    let mut terms: Vec<(usize, f64, usize, usize)> = Vec::new();
    let mut blocks = Vec::new();
    for s in scenarios {
        let f = build_follower(ctx, *s, SetpointHandling::Upper)?;
        let tag = s.to_string();
        let x: Vec<usize> = f
            .vars
            .iter()
            .map(|v| {
                let (l, u) = match v.kind {
                    VarKind::Vm(_) => (v.lower.max(MAGNITUDE_BOX.0), v.upper.min(MAGNITUDE_BOX.1)),
                    _ => (v.lower, v.upper),
                };
                lp.add_var(format!("{}@{tag}", v.name), l, u)
            })
            .collect();

        // Primal rows; parameters on the right-hand side move to the left.
        for row in &f.rows {
            let mut coefs: Vec<(usize, f64)> = row.coefs.iter().map(|c| (x[c.var], c.value)).collect();
            coefs.extend(row.rhs_params.iter().map(|(p, a)| (pv(*p), -a)));
            let r = lp.add_row(format!("{}@{tag}", row.name), coefs, row.relation, row.rhs);
            for c in &row.coefs {
                if let Some((p, a)) = c.param {
                    terms.push((r, a, pv(p), x[c.var]));
                }
            }
        }

        let lambda: Vec<usize> = f
            .rows
            .iter()
            .map(|row| {
                let (l, u) = match row.relation {
                    Relation::Le => (0.0, dual_box),
                    Relation::Ge => (-dual_box, 0.0),
                    Relation::Eq => (-dual_box, dual_box),
                };
                lp.add_var(format!("lam[{}]@{tag}", row.name), l, u)
            })
            .collect();
        let mut mu_upper = Vec::new();
        let mut mu_lower = Vec::new();
        for v in &f.vars {
            mu_upper.push(v.upper.is_finite().then(|| lp.add_var(format!("mu+[{}]@{tag}", v.name), 0.0, f64::INFINITY)));
            mu_lower.push(v.lower.is_finite().then(|| lp.add_var(format!("mu-[{}]@{tag}", v.name), 0.0, f64::INFINITY)));
        }

        // Dual rows: A(theta)^T lambda + mu+ - mu- = c.
        type Entry = (usize, f64, Option<(Param, f64)>);
        let mut columns: Vec<Vec<Entry>> = vec![Vec::new(); f.vars.len()];
        for (r, row) in f.rows.iter().enumerate() {
            for c in &row.coefs {
                columns[c.var].push((r, c.value, c.param));
            }
        }
        let mut cost = vec![0.0; f.vars.len()];
        for (j, c) in &f.objective {
            cost[*j] += c;
        }
        for (j, col) in columns.iter().enumerate() {
            let mut coefs: Vec<(usize, f64)> = col.iter().map(|(r, a, _)| (lambda[*r], *a)).collect();
            coefs.extend(mu_upper[j].map(|m| (m, 1.0)));
            coefs.extend(mu_lower[j].map(|m| (m, -1.0)));
            let d = lp.add_row(format!("dual[{}]@{tag}", f.vars[j].name), coefs, Relation::Eq, cost[j]);
            for (r, _, param) in col {
                if let Some((p, a)) = param {
                    terms.push((d, *a, pv(*p), lambda[*r]));
                }
            }
        }

        // c^T x >= b(theta)^T lambda + u^T mu+ - l^T mu-.
        let mut coefs: Vec<(usize, f64)> = f.objective.iter().map(|(j, c)| (x[*j], *c)).collect();
        for (r, row) in f.rows.iter().enumerate() {
            coefs.push((lambda[r], -row.rhs));
        }
        for (j, v) in f.vars.iter().enumerate() {
            coefs.extend(mu_upper[j].map(|m| (m, -v.upper)));
            coefs.extend(mu_lower[j].map(|m| (m, v.lower)));
        }
        let sd_row = lp.add_row(format!("strong_duality@{tag}"), coefs, Relation::Ge, 0.0);
        for (r, row) in f.rows.iter().enumerate() {
            for (p, a) in &row.rhs_params {
                terms.push((sd_row, -a, pv(*p), lambda[r]));
            }
        }

        let t = x[f.target];
        lp.add_row(format!("vmin@{tag}"), vec![(t, 1.0)], Relation::Ge, ctx.config.v_min);
        lp.add_row(format!("vmax@{tag}"), vec![(t, 1.0)], Relation::Le, ctx.config.v_max);
        blocks.push(FollowerBlock { follower: f, x, lambda, mu_upper, mu_lower, sd_row });
    }

    let mut bp = BilinearProgram::new(lp);
    for (r, a, i, j) in terms {
        bp.add_term(r, a, i, j);
    }
    bp.priority[dp_plus] = 2.0;
    bp.priority[dp_minus] = 2.0;
    for j in &setpoints {
        bp.priority[*j] = 1.0;
    }
    Ok(SingleLevel { bp, blocks, dp_plus, dp_minus, setpoints, dual_box })
}

/// Builds incumbents by fixing setpoints, pushing each aggregate bound as
/// far as the selected followers allow, and reading primal and dual values
/// off the follower certificates.
struct IdealHeuristic<'a> {
    ctx: &'a FlexContext,
    sl: &'a SingleLevel,
    calls: Cell<usize>,
    dual_box_hit: Cell<bool>,
}

impl IdealHeuristic<'_> {
    fn solve_all(&self, params: &ParamValues, act: Option<Activation>) -> Result<Vec<FollowerSolution>, FlexError> {
        self.sl
            .blocks
            .iter()
            .filter(|b| act.is_none_or(|a| b.follower.scenario.activation == a))
            .map(|b| b.follower.solve(params))
            .collect()
    }

    fn in_band(&self, sols: &[FollowerSolution]) -> bool {
        sols.iter().all(|s| s.magnitude >= self.ctx.config.v_min && s.magnitude <= self.ctx.config.v_max)
    }

    fn evaluate(&self, setpoints: Vec<f64>) -> Option<Vec<f64>> {
        let (lo, hi) = self.ctx.available;
        let tol = self.ctx.config.bisect_tol * hi.abs().max(lo.abs()).max(1e-12);
        let mut params = ParamValues { dp_plus: 0.0, dp_minus: 0.0, setpoints };
        for (act, full) in [(Activation::Positive, hi), (Activation::Negative, lo)] {
            let base = params.clone();
            let with = |dp: f64| {
                let mut p = base.clone();
                match act {
                    Activation::Positive => p.dp_plus = dp,
                    Activation::Negative => p.dp_minus = dp,
                }
                p
            };
            let res = bisect(full, tol, |dp| self.solve_all(&with(dp), Some(act)), |s| self.in_band(s)).ok()??;
            params = with(res.0);
        }
        let sols = self.solve_all(&params, None).ok()?;
        let point = self.sl.point_from(&params, &sols);
        if point.is_none() {
            self.dual_box_hit.set(true);
        }
        point
    }
}

impl IncumbentHeuristic for IdealHeuristic<'_> {
    fn propose(&self, bp: &BilinearProgram, relaxed: &[f64], _boxes: &[(f64, f64)]) -> Vec<Vec<f64>> {
        let first = self.calls.get() == 0;
        self.calls.set(self.calls.get() + 1);
        let boxes = setpoint_boxes(self.ctx);
        let clamp = |g: usize, v: f64| v.clamp(boxes[g].0, boxes[g].1);
        let mut candidates: Vec<Vec<f64>> = vec![self.sl.setpoints.iter().enumerate().map(|(g, j)| clamp(g, relaxed[*j])).collect()];
        if first {
            let ts: &[f64] = match self.ctx.mode {
                ModeKind::VoltVar => &[0.0, 0.25, 0.5, 0.75, 1.0],
                _ => &[0.0, 0.25, -0.25, 0.5, -0.5, 0.75, -0.75, 1.0, -1.0],
            };
            for t in ts {
                candidates.push(boxes.iter().map(|(_, h)| t * h).collect());
            }
        }
        let cap = self.ctx.available.1 - self.ctx.available.0;
        let mut out = Vec::new();
        for c in candidates {
            if let Some(x) = self.evaluate(c) {
                let reached = bp.lp.objective_value(&x) >= cap * (1.0 - 1e-9);
                out.push(x);
                if reached {
                    break;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealSolution {
    pub decision: UpperDecision,
    pub followers: Vec<Scenario>,
    pub objective_kw: f64,
    pub bound_kw: f64,
    pub root_bound_kw: f64,
    pub status: BnbStatus,
    pub nodes: usize,
    pub dual_box: f64,
    pub bilinear_pairs: usize,
    /// Per follower: primal objective and dual-minus-primal gap.
    pub gaps: Vec<(Scenario, f64, f64)>,
}

/// Solves the single-level problem over `scenarios` by spatial
/// branch-and-bound, doubling the dual box while duals press against it.
pub fn solve_ideal(ctx: &FlexContext, scenarios: &[Scenario]) -> Result<IdealSolution, FlexError> {
    let base = ctx.base();
    let mut dual_box = ctx.config.dual_box;
    let mut attempt = 0;
    loop {
        let sl = assemble_single_level(ctx, scenarios, dual_box)?;
        let heur = IdealHeuristic { ctx, sl: &sl, calls: Cell::new(0), dual_box_hit: Cell::new(false) };
        let opts = BnbOptions {
            eps: ctx.config.bnb_eps,
            node_limit: ctx.config.node_limit,
            objective_cap: Some(ctx.available.1 - ctx.available.0),
            ..Default::default()
        };
        let res = spatial_branch_and_bound_with(&sl.bp, opts, &[&heur])?;
        let at_box = res.x.as_ref().is_some_and(|x| {
            sl.blocks.iter().flat_map(|b| &b.lambda).any(|l| x[*l].abs() >= dual_box * (1.0 - 1e-9))
        });
        let retry = (res.x.is_none() || at_box || heur.dual_box_hit.get()) && attempt < ctx.config.dual_escalations;
        if retry && !(res.x.is_some() && res.objective >= ctx.available.1 - ctx.available.0 - 1e-12) {
            dual_box *= 2.0;
            attempt += 1;
            continue;
        }
        let x = res.x.ok_or(FlexError::IdealInfeasible)?;
        let boxes = setpoint_boxes(ctx);
        let setpoints = sl
            .setpoints
            .iter()
            .enumerate()
            .map(|(g, j)| {
                let v = x[*j].clamp(boxes[g].0, boxes[g].1);
                if ctx.mode == ModeKind::ConstantPf {
                    v
                } else {
                    v * base
                }
            })
            .collect();
        let decision = UpperDecision {
            mode: ctx.mode,
            dp_minus_kw: x[sl.dp_minus].min(0.0) * base,
            dp_plus_kw: x[sl.dp_plus].max(0.0) * base,
            setpoints,
        };
        return Ok(IdealSolution {
            decision,
            followers: scenarios.to_vec(),
            objective_kw: res.objective * base,
            bound_kw: res.bound * base,
            root_bound_kw: res.root_bound * base,
            status: res.status,
            nodes: res.nodes,
            dual_box,
            bilinear_pairs: sl.bp.pairs().len(),
            gaps: sl.duality_gaps(&x),
        });
    }
}

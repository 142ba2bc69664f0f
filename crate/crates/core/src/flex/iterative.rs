use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::follower::{build_follower, FollowerSolution, SetpointHandling};
use super::scenario::{Activation, Scenario};
use super::single_level::solve_ideal;
use super::worst_case::{worst_case_limits, WorstCaseTable};
use super::{setpoint_box, Direction, FlexContext, FlexError, UpperDecision};
use crate::feeder::ModeKind;
use crate::lp::BnbStatus;
use crate::powerflow::NetworkSolver;

pub const RESULT_SCHEMA: &str = "flexgrid.result.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub scenario: Scenario,
    pub label: String,
    pub magnitude: f64,
    /// Distance outside the band, p.u.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub followers: Vec<Scenario>,
    pub dp_minus_kw: f64,
    pub dp_plus_kw: f64,
    pub bound_kw: f64,
    pub bnb_status: BnbStatus,
    pub bnb_nodes: usize,
    pub bilinear_pairs: usize,
    pub violations: Vec<Violation>,
    pub added: Vec<Scenario>,
    #[serde(skip)]
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetpointRecord {
    pub inverter: usize,
    pub label: String,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub scenario: Scenario,
    pub primal: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeRecord {
    pub scenario: Scenario,
    pub label: String,
    pub linear: f64,
    pub nonlinear: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlexibilityResult {
    pub schema: String,
    pub mode: ModeKind,
    pub v_min: f64,
    pub v_max: f64,
    pub direction: Direction,
    pub dp_minus_mw: f64,
    pub dp_plus_mw: f64,
    pub available_mw: (f64, f64),
    pub worst_case_mw: (f64, f64),
    pub decision: UpperDecision,
    pub setpoints: Vec<SetpointRecord>,
    pub iterations: usize,
    pub converged: bool,
    /// The iteration cap was hit and the worst-case range is reported.
    pub fallback: bool,
    pub active_followers: Vec<Scenario>,
    pub log: Vec<IterationRecord>,
    pub worst_case: WorstCaseTable,
    pub duality: Vec<ScenarioRecord>,
    pub magnitudes: Vec<MagnitudeRecord>,
    #[serde(skip)]
    pub seconds: f64,
}

impl FlexibilityResult {
    pub fn max_linearization_error(&self) -> f64 {
        self.magnitudes.iter().filter_map(|m| m.nonlinear.map(|v| (v - m.linear).abs())).fold(0.0, f64::max)
    }
}

/// Solves every admitted follower at a fixed decision.
pub fn solve_followers(ctx: &FlexContext, decision: &UpperDecision) -> Result<Vec<FollowerSolution>, FlexError> {
    decision.validate(ctx)?;
    let params = decision.params(ctx);
    ctx.scenarios()
        .par_iter()
        .map(|s| build_follower(ctx, *s, SetpointHandling::Upper)?.solve(&params))
        .collect()
}

fn violations_of(ctx: &FlexContext, sols: &[FollowerSolution]) -> Vec<Violation> {
    let tol = ctx.config.feas_tol;
    sols.iter()
        .filter_map(|s| {
            let excess = (ctx.config.v_min - s.magnitude).max(s.magnitude - ctx.config.v_max);
            (excess > tol).then(|| Violation {
                scenario: s.scenario,
                label: ctx.model.index().label(s.scenario.node),
                magnitude: s.magnitude,
                excess,
            })
        })
        .collect()
}

/// Scenarios whose worst-case magnitude leaves the band by more than the
/// feasibility tolerance at a fixed decision.
pub fn feasibility_check(ctx: &FlexContext, decision: &UpperDecision) -> Result<Vec<Violation>, FlexError> {
    Ok(violations_of(ctx, &solve_followers(ctx, decision)?))
}

/// Linear magnitude of each follower optimum against Newton power flow at
/// the same injections.
pub fn linearization_report(ctx: &FlexContext, sols: &[FollowerSolution]) -> Result<Vec<MagnitudeRecord>, FlexError> {
    let solver = NetworkSolver::new(&ctx.model)?;
    let anchor = ctx.anchor.v.clone();
    sols.par_iter()
        .map(|s| {
            let f = build_follower(ctx, s.scenario, SetpointHandling::Upper)?;
            let (p, q) = f.injections_kw(ctx, &s.cert.x);
            let nonlinear = solver.solve(&p, &q, Some(&anchor), Default::default()).ok().map(|op| op.v[s.scenario.node].norm());
            Ok(MagnitudeRecord { scenario: s.scenario, label: ctx.model.index().label(s.scenario.node), linear: s.magnitude, nonlinear })
        })
        .collect()
}

pub(crate) fn setpoint_records(ctx: &FlexContext, decision: &UpperDecision) -> Vec<SetpointRecord> {
    let unit = match ctx.mode {
        ModeKind::ConstantPf => "ratio",
        _ => "kvar",
    };
    ctx.model
        .inverters
        .iter()
        .enumerate()
        .map(|(g, inv)| {
            let (lower, upper) = setpoint_box(inv);
            SetpointRecord {
                inverter: g,
                label: ctx.model.index().label(ctx.model.inverter_node(g)),
                value: decision.setpoints[g],
                lower,
                upper,
                unit: unit.into(),
            }
        })
        .collect()
}

/// Worst violator of each activation case not yet selected.
fn pick_additions(violations: &[Violation], selected: &[Scenario]) -> Vec<Scenario> {
    let mut out = Vec::new();
    for act in [Activation::Positive, Activation::Negative] {
        let mut best: Option<&Violation> = None;
        for v in violations.iter().filter(|v| v.scenario.activation == act && !selected.contains(&v.scenario)) {
            if best.is_none_or(|b| v.excess > b.excess) {
                best = Some(v);
            }
        }
        out.extend(best.map(|v| v.scenario));
    }
    out
}

/// Worst-case limits, then alternate between the single-level problem over
/// a growing follower set and a feasibility check over all followers.
pub fn run_iterative(ctx: &FlexContext) -> Result<FlexibilityResult, FlexError> {
    let start = Instant::now();
    let base = ctx.base();
    let worst = worst_case_limits(ctx)?;
    let cap = ctx.config.max_iterations.unwrap_or(4 * ctx.n()).max(1);
    let mut selected: Vec<Scenario> = worst.seeds.clone();
    let mut log = Vec::new();
    let mut accepted: Option<(UpperDecision, Vec<FollowerSolution>, Vec<ScenarioRecord>)> = None;

    for iteration in 1..=cap {
        let t0 = Instant::now();
        let ideal = solve_ideal(ctx, &selected)?;
        let sols = solve_followers(ctx, &ideal.decision)?;
        let violations = violations_of(ctx, &sols);
        let added = pick_additions(&violations, &selected);
        log.push(IterationRecord {
            iteration,
            followers: selected.clone(),
            dp_minus_kw: ideal.decision.dp_minus_kw,
            dp_plus_kw: ideal.decision.dp_plus_kw,
            bound_kw: ideal.bound_kw,
            bnb_status: ideal.status,
            bnb_nodes: ideal.nodes,
            bilinear_pairs: ideal.bilinear_pairs,
            violations: violations.clone(),
            added: added.clone(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        if violations.is_empty() {
            let duality = ideal.gaps.iter().map(|(s, p, g)| ScenarioRecord { scenario: *s, primal: *p, gap: *g }).collect();
            accepted = Some((ideal.decision, sols, duality));
            break;
        }
        if added.is_empty() {
            // Every violator is already selected: tolerance stacking only.
            break;
        }
        selected.extend(added);
    }

    let iterations = log.len();
    let (decision, sols, duality, converged) = match accepted {
        Some((d, s, g)) => (d, s, g, true),
        None => {
            let mut d = UpperDecision::zero(&ctx.model, ctx.mode);
            d.dp_minus_kw = worst.range_kw.0;
            d.dp_plus_kw = worst.range_kw.1;
            let sols = solve_followers(ctx, &d)?;
            (d, sols, Vec::new(), false)
        }
    };
    let magnitudes = linearization_report(ctx, &sols)?;
    Ok(FlexibilityResult {
        schema: RESULT_SCHEMA.into(),
        mode: ctx.mode,
        v_min: ctx.config.v_min,
        v_max: ctx.config.v_max,
        direction: ctx.config.direction,
        dp_minus_mw: decision.dp_minus_kw / 1000.0,
        dp_plus_mw: decision.dp_plus_kw / 1000.0,
        available_mw: (ctx.available.0 * base / 1000.0, ctx.available.1 * base / 1000.0),
        worst_case_mw: (worst.range_kw.0 / 1000.0, worst.range_kw.1 / 1000.0),
        setpoints: setpoint_records(ctx, &decision),
        decision,
        iterations,
        converged,
        fallback: !converged,
        active_followers: selected,
        log,
        worst_case: worst,
        duality,
        magnitudes,
        seconds: start.elapsed().as_secs_f64(),
    })
}

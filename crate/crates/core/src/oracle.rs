//! Brute-force nonlinear checks of solver output.
//!
//! Device deviations are enumerated on a grid, projected onto the aggregate
//! bound, screened with the exact quadratic capability and evaluated with
//! Newton power flow. Volt-var reactive power is found by fixed-point
//! iteration on the nonlinear magnitudes.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feeder::{FeederModel, InverterControl, ModeKind};
use crate::flex::{
    build_follower, fix_worst_case_setpoints, setpoint_box, Activation, Extremum, FlexContext, FlexError, Scenario,
    SetpointHandling, UpperDecision, VarKind,
};
use crate::powerflow::{NetworkSolver, NewtonOptions, PfError};

/// Largest number of flexible devices the grid search accepts.
pub const MAX_DEVICES: usize = 4;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("{0} flexible devices exceed the grid-search limit of {MAX_DEVICES}")]
    TooManyDevices(usize),
    #[error("grid needs at least 2 points per device, got {0}")]
    GridTooCoarse(usize),
    #[error("no grid point could be evaluated")]
    NothingEvaluated,
    #[error(transparent)]
    PowerFlow(#[from] PfError),
    #[error(transparent)]
    Flex(#[from] FlexError),
}

/// How inverter setpoints are chosen during enumeration.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleSetpoints {
    /// Native units per inverter.
    Fixed(Vec<f64>),
    /// Extreme setpoints for the extremum; constant-q output is enumerated.
    WorstCase,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub grid_points: usize,
    pub v_min: f64,
    pub v_max: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { grid_points: 11, v_min: 0.9, v_max: 1.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstVoltage {
    pub magnitude: f64,
    /// Deviation per load and inverter (kW) and inverter reactive output
    /// (kvar) at the extremum.
    pub dp_load_kw: Vec<f64>,
    pub dp_inverter_kw: Vec<f64>,
    pub q_inverter_kvar: Vec<f64>,
    pub evaluated: usize,
    pub diverged: usize,
    pub infeasible: usize,
}

#[derive(Debug, Clone, Copy)]
enum Axis {
    Load(usize),
    InverterP(usize),
    /// Fraction of the constant-q reactive band.
    InverterQ(usize),
}

struct Grid {
    axes: Vec<(Axis, f64, f64)>,
    points: usize,
}

impl Grid {
    fn len(&self) -> usize {
        self.points.pow(self.axes.len() as u32)
    }

    fn value(&self, mut idx: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.axes.len());
        for (_, lo, hi) in &self.axes {
            let i = idx % self.points;
            idx /= self.points;
            out.push(lo + (hi - lo) * i as f64 / (self.points - 1) as f64);
        }
        out
    }
}

fn deviation_range(lo: f64, hi: f64, activation: Activation, sign: f64) -> (f64, f64) {
    // sign = +1 for generation, -1 for load: positive activation raises
    // injections, so generation deviations are >= 0 and load ones <= 0.
    let up = (activation == Activation::Positive) == (sign > 0.0);
    if up {
        (lo.max(0.0), hi.max(0.0))
    } else {
        (lo.min(0.0), hi.min(0.0))
    }
}

fn build_grid(model: &FeederModel, scenario: Scenario, enumerate_q: bool, points: usize) -> Grid {
    let mut axes = Vec::new();
    for (l, spec) in model.loads.iter().enumerate() {
        let (lo, hi) = deviation_range(spec.p_min.max(0.0) - spec.p_kw, spec.p_max - spec.p_kw, scenario.activation, -1.0);
        if hi - lo > 1e-9 {
            axes.push((Axis::Load(l), lo, hi));
        }
    }
    for (g, spec) in model.inverters.iter().enumerate() {
        let (lo, hi) =
            deviation_range(spec.p_min.max(0.0) - spec.p_kw, spec.p_max.min(spec.s_kva) - spec.p_kw, scenario.activation, 1.0);
        if hi - lo > 1e-9 {
            axes.push((Axis::InverterP(g), lo, hi));
        }
        if enumerate_q {
            axes.push((Axis::InverterQ(g), -1.0, 1.0));
        }
    }
    Grid { axes, points }
}

/// Number of grid dimensions the oracle would enumerate.
pub fn device_count(model: &FeederModel, scenario: Scenario, setpoints: &OracleSetpoints) -> usize {
    let enumerate_q = matches!(setpoints, OracleSetpoints::WorstCase) && model.inverters.iter().any(|g| matches!(g.control, InverterControl::ConstantQ { .. }));
    build_grid(model, scenario, enumerate_q, 2).axes.len()
}

/// Nonlinear evaluation of one device configuration.
struct Evaluator<'a> {
    model: &'a FeederModel,
    solver: NetworkSolver,
    anchor_v: Vec<Complex64>,
    p0: Vec<f64>,
    q0: Vec<f64>,
    opts: OracleOptions,
}

enum Outcome {
    Magnitudes(Vec<f64>, Vec<f64>),
    Infeasible,
    Diverged,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a FeederModel, opts: OracleOptions) -> Result<Self, OracleError> {
        let solver = NetworkSolver::new(model)?;
        let (p0, mut q0) = model.current_injections_kw();
        for (g, inv) in model.inverters.iter().enumerate() {
            q0[model.inverter_node(g)] -= inv.q_kvar;
        }
        let anchor = solver.solve(&model.current_injections_kw().0, &model.current_injections_kw().1, None, NewtonOptions::default())?;
        Ok(Evaluator { model, solver, anchor_v: anchor.v, p0, q0, opts })
    }

    /// `setpoint[g]` is the power ratio, fixed kvar or maximum kvar by mode;
    /// `q_fraction[g]` is only used when constant-q output is enumerated.
    fn run(&self, dp_load: &[f64], dp_inv: &[f64], setpoint: &[f64], q_fraction: Option<&[f64]>) -> Outcome {
        let m = self.model;
        let mut p = self.p0.clone();
        let mut q = self.q0.clone();
        for (l, spec) in m.loads.iter().enumerate() {
            let k = m.load_node(l);
            p[k] -= dp_load[l];
            q[k] -= spec.q_ratio() * dp_load[l];
        }
        let mut q_inv = vec![0.0; m.inverters.len()];
        let mut voltvar = false;
        for (g, spec) in m.inverters.iter().enumerate() {
            let k = m.inverter_node(g);
            let pg = spec.p_kw + dp_inv[g];
            p[k] += dp_inv[g];
            q_inv[g] = match (spec.control, q_fraction) {
                (InverterControl::ConstantPf { .. }, _) => setpoint[g] * pg,
                (InverterControl::ConstantQ { gamma }, Some(f)) => f[g] * gamma * pg,
                (InverterControl::ConstantQ { gamma }, None) => {
                    if setpoint[g].abs() > gamma * pg + 1e-9 {
                        return Outcome::Infeasible;
                    }
                    setpoint[g]
                }
                (InverterControl::VoltVar, _) => {
                    voltvar = true;
                    self.voltvar_q(setpoint[g], self.anchor_v[k].norm())
                }
            };
        }
        let capability = |q_inv: &[f64]| {
            m.inverters.iter().enumerate().all(|(g, s)| {
                let pg = s.p_kw + dp_inv[g];
                pg * pg + q_inv[g] * q_inv[g] <= s.s_kva * s.s_kva * (1.0 + 1e-12)
            })
        };
        let mut init = self.anchor_v.clone();
        // Damped fixed-point iteration; the damping halves whenever the
        // update grows, since steep curves make the plain map expansive.
        let mut omega = 1.0;
        let mut last_change = f64::INFINITY;
        if !voltvar && !capability(&q_inv) {
            return Outcome::Infeasible;
        }
        for _ in 0..300 {
            let mut qq = q.clone();
            for (g, qi) in q_inv.iter().enumerate() {
                qq[m.inverter_node(g)] += qi;
            }
            let op = match self.solver.solve(&p, &qq, Some(&init), NewtonOptions::default()) {
                Ok(op) => op,
                Err(_) => return Outcome::Diverged,
            };
            let mags = op.magnitudes();
            if !voltvar {
                return Outcome::Magnitudes(mags, q_inv);
            }
            let next: Vec<f64> = m
                .inverters
                .iter()
                .enumerate()
                .map(|(g, spec)| match spec.control {
                    InverterControl::VoltVar => self.voltvar_q(setpoint[g], mags[m.inverter_node(g)]),
                    _ => q_inv[g],
                })
                .collect();
            let change = next.iter().zip(&q_inv).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if change <= 1e-9 * m.base_kva {
                if !capability(&q_inv) {
                    return Outcome::Infeasible;
                }
                return Outcome::Magnitudes(mags, q_inv);
            }
            if change > last_change {
                omega = (omega * 0.5_f64).max(1e-3);
            }
            last_change = change;
            for (qi, nx) in q_inv.iter_mut().zip(&next) {
                *qi += omega * (nx - *qi);
            }
            init = op.v;
        }
        Outcome::Diverged
    }

    fn voltvar_q(&self, qbar: f64, magnitude: f64) -> f64 {
        let dv = self.opts.v_max - self.opts.v_min;
        qbar - 2.0 * qbar * (magnitude - self.opts.v_min) / dv
    }
}

fn native_worst_setpoints(model: &FeederModel, extremum: Extremum) -> Vec<f64> {
    fix_worst_case_setpoints(model, extremum).into_iter().map(|v| v.unwrap_or(0.0)).collect()
}

/// Extremal magnitude of the scenario's target node over the device grid
/// with aggregate deviation bounded by `dp_bound_kw` (positive bound for
/// positive activation, negative for negative).
pub fn brute_force_worst_voltage(
    model: &FeederModel,
    scenario: Scenario,
    dp_bound_kw: f64,
    setpoints: &OracleSetpoints,
    opts: OracleOptions,
) -> Result<WorstVoltage, OracleError> {
    if opts.grid_points < 2 {
        return Err(OracleError::GridTooCoarse(opts.grid_points));
    }
    let enumerate_q = matches!(setpoints, OracleSetpoints::WorstCase);
    let grid = build_grid(model, scenario, enumerate_q && has_constant_q(model), opts.grid_points);
    let devices = grid.axes.len();
    if devices > MAX_DEVICES {
        return Err(OracleError::TooManyDevices(devices));
    }
    let fixed = match setpoints {
        OracleSetpoints::Fixed(v) => v.clone(),
        OracleSetpoints::WorstCase => native_worst_setpoints(model, scenario.extremum),
    };
    let eval = Evaluator::new(model, opts)?;
    let nl = model.loads.len();
    let ni = model.inverters.len();
    let q_enumerated = enumerate_q && has_constant_q(model);
    let bound = dp_bound_kw.abs();

    type Best = (f64, usize, Vec<f64>, Vec<f64>, Vec<f64>);
    struct Acc {
        best: Option<Best>,
        evaluated: usize,
        diverged: usize,
        infeasible: usize,
    }
    let sign = scenario.sign();
    let better = |a: &(f64, usize, Vec<f64>, Vec<f64>, Vec<f64>), b: &(f64, usize, Vec<f64>, Vec<f64>, Vec<f64>)| {
        sign * a.0 > sign * b.0 || (sign * a.0 == sign * b.0 && a.1 < b.1)
    };
    let acc = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let vals = grid.value(idx);
            let mut dl = vec![0.0; nl];
            let mut dg = vec![0.0; ni];
            let mut qf = vec![0.0; ni];
            for ((axis, _, _), v) in grid.axes.iter().zip(&vals) {
                match axis {
                    Axis::Load(l) => dl[*l] = *v,
                    Axis::InverterP(g) => dg[*g] = *v,
                    Axis::InverterQ(g) => qf[*g] = *v,
                }
            }
            // Project onto the aggregate bound by uniform scaling.
            let total: f64 = dg.iter().sum::<f64>() - dl.iter().sum::<f64>();
            if total.abs() > bound {
                let s = if total == 0.0 { 0.0 } else { bound / total.abs() };
                dl.iter_mut().for_each(|x| *x *= s);
                dg.iter_mut().for_each(|x| *x *= s);
            }
            let out = eval.run(&dl, &dg, &fixed, q_enumerated.then_some(qf.as_slice()));
            let mut a = Acc { best: None, evaluated: 0, diverged: 0, infeasible: 0 };
            match out {
                Outcome::Magnitudes(m, q) => {
                    a.evaluated = 1;
                    a.best = Some((m[scenario.node], idx, dl, dg, q));
                }
                Outcome::Diverged => a.diverged = 1,
                Outcome::Infeasible => a.infeasible = 1,
            }
            a
        })
        .reduce(
            || Acc { best: None, evaluated: 0, diverged: 0, infeasible: 0 },
            |x, y| {
                let best = match (x.best, y.best) {
                    (Some(a), Some(b)) => Some(if better(&b, &a) { b } else { a }),
                    (a, b) => a.or(b),
                };
                Acc { best, evaluated: x.evaluated + y.evaluated, diverged: x.diverged + y.diverged, infeasible: x.infeasible + y.infeasible }
            },
        );
    let (magnitude, _, dl, dg, q) = acc.best.ok_or(OracleError::NothingEvaluated)?;
    Ok(WorstVoltage {
        magnitude,
        dp_load_kw: dl,
        dp_inverter_kw: dg,
        q_inverter_kvar: q,
        evaluated: acc.evaluated,
        diverged: acc.diverged,
        infeasible: acc.infeasible,
    })
}

fn has_constant_q(model: &FeederModel) -> bool {
    model.inverters.iter().any(|g| matches!(g.control, InverterControl::ConstantQ { .. }))
}

/// Largest `|dp|` whose brute-force worst magnitude stays in the band, by
/// bisection to `tol_kw`.
pub fn brute_force_limit(
    model: &FeederModel,
    scenario: Scenario,
    full_kw: f64,
    setpoints: &OracleSetpoints,
    opts: OracleOptions,
    tol_kw: f64,
) -> Result<f64, OracleError> {
    let ok = |dp: f64| -> Result<bool, OracleError> {
        let w = brute_force_worst_voltage(model, scenario, dp, setpoints, opts)?;
        Ok(w.magnitude >= opts.v_min && w.magnitude <= opts.v_max)
    };
    if !ok(0.0)? {
        return Ok(0.0);
    }
    if ok(full_kw)? {
        return Ok(full_kw);
    }
    let (mut lo, mut hi) = (0.0_f64, full_kw);
    while (hi - lo).abs() > tol_kw {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleNode {
    pub scenario: Scenario,
    pub label: String,
    /// Follower optimum of the linear model.
    pub solver_magnitude: f64,
    /// Newton magnitude at the follower optimum.
    pub nonlinear_at_solver: Option<f64>,
    /// Brute-force extremum, or the follower-point value on large feeders.
    pub oracle_magnitude: f64,
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub mode: ModeKind,
    /// `grid` or `follower-points`.
    pub method: String,
    pub grid_points: usize,
    pub dp_minus_kw: f64,
    pub dp_plus_kw: f64,
    pub nodes: Vec<OracleNode>,
    pub max_violation: f64,
    pub max_linearization_error: f64,
    pub tolerance: f64,
    pub violations_pass: bool,
    pub error_pass: bool,
    pub pass: bool,
    pub evaluated: usize,
    pub diverged: usize,
    pub infeasible: usize,
}

/// Re-solves every admitted follower at a decision with exact capability,
/// exact magnitudes and Newton power flow.
///
/// Feeders with at most [`MAX_DEVICES`] flexible devices are searched on
/// the grid; larger ones are evaluated at the follower optima only.
pub fn verify_setpoints_nonlinear(
    ctx: &FlexContext,
    decision: &UpperDecision,
    grid_points: usize,
    tolerance: f64,
) -> Result<OracleReport, OracleError> {
    decision.validate(ctx)?;
    let model = &ctx.model;
    let opts = OracleOptions { grid_points, v_min: ctx.config.v_min, v_max: ctx.config.v_max };
    let params = decision.params(ctx);
    let fixed = OracleSetpoints::Fixed(decision.setpoints.clone());
    let scenarios = ctx.scenarios();
    let small = scenarios.iter().all(|s| device_count(model, *s, &fixed) <= MAX_DEVICES);
    let eval = Evaluator::new(model, opts)?;

    let mut nodes = Vec::new();
    let (mut evaluated, mut diverged, mut infeasible) = (0, 0, 0);
    let mut max_err: f64 = 0.0;
    for s in &scenarios {
        let f = build_follower(ctx, *s, SetpointHandling::Upper)?;
        let sol = f.solve(&params)?;
        // Device values at the follower optimum.
        let mut dl = vec![0.0; model.loads.len()];
        let mut dg = vec![0.0; model.inverters.len()];
        for (v, x) in f.vars.iter().zip(&sol.cert.x) {
            match v.kind {
                VarKind::DpL(l) => dl[l] = x * ctx.base(),
                VarKind::DpG(g) => dg[g] = x * ctx.base(),
                _ => {}
            }
        }
        let nonlinear_at_solver = match eval.run(&dl, &dg, &decision.setpoints, None) {
            Outcome::Magnitudes(m, _) => Some(m[s.node]),
            _ => None,
        };
        if let Some(nl) = nonlinear_at_solver {
            max_err = max_err.max((nl - sol.magnitude).abs());
        }
        let oracle_magnitude = if small {
            let bound = match s.activation {
                Activation::Positive => decision.dp_plus_kw,
                Activation::Negative => decision.dp_minus_kw,
            };
            let w = brute_force_worst_voltage(model, *s, bound, &fixed, opts)?;
            evaluated += w.evaluated;
            diverged += w.diverged;
            infeasible += w.infeasible;
            let cand = nonlinear_at_solver.unwrap_or(w.magnitude);
            if s.sign() > 0.0 {
                w.magnitude.max(cand)
            } else {
                w.magnitude.min(cand)
            }
        } else {
            evaluated += 1;
            nonlinear_at_solver.unwrap_or(sol.magnitude)
        };
        let violation = (ctx.config.v_min - oracle_magnitude).max(oracle_magnitude - ctx.config.v_max).max(0.0);
        nodes.push(OracleNode {
            scenario: *s,
            label: model.index().label(s.node),
            solver_magnitude: sol.magnitude,
            nonlinear_at_solver,
            oracle_magnitude,
            violation,
        });
    }
    let max_violation = nodes.iter().map(|n| n.violation).fold(0.0, f64::max);
    let violations_pass = max_violation <= tolerance;
    let error_pass = max_err <= tolerance;
    Ok(OracleReport {
        mode: ctx.mode,
        method: if small { "grid" } else { "follower-points" }.into(),
        grid_points,
        dp_minus_kw: decision.dp_minus_kw,
        dp_plus_kw: decision.dp_plus_kw,
        nodes,
        max_violation,
        max_linearization_error: max_err,
        tolerance,
        violations_pass,
        error_pass,
        pass: violations_pass && error_pass,
        evaluated,
        diverged,
        infeasible,
    })
}

/// Checks that every setpoint of a decision lies in its mode box.
pub fn setpoints_in_box(model: &FeederModel, decision: &UpperDecision) -> bool {
    decision.setpoints.len() == model.inverters.len()
        && model.inverters.iter().zip(&decision.setpoints).all(|(g, v)| {
            let (l, h) = setpoint_box(&g.with_mode(decision.mode));
            *v >= l - 1e-9 && *v <= h + 1e-9
        })
}

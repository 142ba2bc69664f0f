//! Worst-case and DSO-optimal aggregate flexibility.
//!
//! Every lower-level problem is an LP in per-unit quantities on the feeder
//! base; aggregate limits are converted back to kW at the boundary.

mod follower;
mod iterative;
mod scenario;
mod single_level;
mod worst_case;

pub use follower::{build_follower, FollowerProblem, FollowerSolution, Group, PCoef, PRow, Param, ParamValues, SetpointHandling, VarKind};
pub use iterative::{
    feasibility_check, linearization_report, run_iterative, FlexibilityResult, IterationRecord, MagnitudeRecord, ScenarioRecord,
    SetpointRecord, Violation, RESULT_SCHEMA,
};
pub use scenario::{Activation, Extremum, Scenario};
pub use single_level::{assemble_single_level, solve_ideal, IdealSolution, SingleLevel};
pub use worst_case::{worst_case_limits, NodeLimits, ScenarioLimit, WorstCaseTable};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feeder::{pf_ratio, FeederError, FeederModel, InverterControl, InverterSpec, ModeKind};
use crate::lp::LpError;
use crate::powerflow::{
    build_fixed_point_model, magnitude_taylor, solve_nonlinear_pf, LinearPfModel, MagnitudeTaylor, OperatingPoint, PfError,
};

#[derive(Debug, Error)]
pub enum FlexError {
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error(transparent)]
    PowerFlow(#[from] PfError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("anchor voltage at node {node} is {magnitude:.6} p.u., outside [{v_min}, {v_max}]")]
    AnchorViolation { node: String, magnitude: f64, v_min: f64, v_max: f64 },
    #[error("follower {scenario} is infeasible at the given decision")]
    FollowerInfeasible { scenario: String },
    #[error("follower {scenario} is unbounded")]
    FollowerUnbounded { scenario: String },
    #[error("invalid decision: {0}")]
    InvalidDecision(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("single-level problem has no feasible point")]
    IdealInfeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    Both,
    OvervoltageOnly,
    UndervoltageOnly,
}

impl Direction {
    pub fn admits(self, extremum: Extremum) -> bool {
        match self {
            Direction::Both => true,
            Direction::OvervoltageOnly => extremum == Extremum::Max,
            Direction::UndervoltageOnly => extremum == Extremum::Min,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "both" => Ok(Direction::Both),
            "overvoltage-only" => Ok(Direction::OvervoltageOnly),
            "undervoltage-only" => Ok(Direction::UndervoltageOnly),
            other => Err(format!("unknown direction `{other}`")),
        }
    }
}

/// Solver settings shared by every stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlexConfig {
    pub v_min: f64,
    pub v_max: f64,
    pub direction: Direction,
    /// Bisection tolerance relative to the available range.
    pub bisect_tol: f64,
    /// Voltage tolerance of the feasibility check, p.u.
    pub feas_tol: f64,
    /// Relative gap of the spatial branch-and-bound.
    pub bnb_eps: f64,
    pub node_limit: usize,
    /// Initial box on follower duals.
    pub dual_box: f64,
    pub dual_escalations: usize,
    /// Iteration cap; `None` means `4n`.
    pub max_iterations: Option<usize>,
}

impl Default for FlexConfig {
    fn default() -> Self {
        FlexConfig {
            v_min: 0.9,
            v_max: 1.1,
            direction: Direction::Both,
            bisect_tol: 1e-6,
            feas_tol: 1e-6,
            bnb_eps: 1e-4,
            node_limit: 400,
            dual_box: 1e3,
            dual_escalations: 3,
            max_iterations: None,
        }
    }
}

impl FlexConfig {
    pub fn validate(&self) -> Result<(), FlexError> {
        let positive = [self.bisect_tol, self.feas_tol, self.bnb_eps, self.dual_box];
        if !(self.v_min > 0.0 && self.v_min < self.v_max) {
            return Err(FlexError::InvalidConfig(format!("need 0 < vmin < vmax, got [{}, {}]", self.v_min, self.v_max)));
        }
        if positive.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(FlexError::InvalidConfig("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Everything a follower needs: the feeder in the study mode, its anchor,
/// linear model and settings.
#[derive(Debug, Clone)]
pub struct FlexContext {
    pub model: FeederModel,
    pub mode: ModeKind,
    pub anchor: OperatingPoint,
    pub lpf: LinearPfModel,
    pub taylor: MagnitudeTaylor,
    pub config: FlexConfig,
    /// Available aggregate range `(lower, upper)`, p.u.
    pub available: (f64, f64),
}

impl FlexContext {
    pub fn new(model: &FeederModel, mode: ModeKind, config: FlexConfig) -> Result<FlexContext, FlexError> {
        config.validate()?;
        let model = model.with_mode(mode);
        let (p, q) = model.current_injections_kw();
        let anchor = solve_nonlinear_pf(&model, &p, &q)?;
        let lpf = build_fixed_point_model(&model, &anchor)?;
        let taylor = magnitude_taylor(&anchor)?;
        let (lo, hi) = available_flexibility_bounds(&model);
        let available = (lo / model.base_kva, hi / model.base_kva);
        Ok(FlexContext { model, mode, anchor, lpf, taylor, config, available })
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn base(&self) -> f64 {
        self.model.base_kva
    }

    /// Errors when any anchor magnitude lies outside the voltage band.
    pub fn check_anchor(&self) -> Result<(), FlexError> {
        for (k, v) in self.anchor.v.iter().enumerate() {
            let m = v.norm();
            if m < self.config.v_min || m > self.config.v_max {
                return Err(FlexError::AnchorViolation {
                    node: self.model.index().label(k),
                    magnitude: m,
                    v_min: self.config.v_min,
                    v_max: self.config.v_max,
                });
            }
        }
        Ok(())
    }

    /// Scenarios admitted by the direction filter.
    pub fn scenarios(&self) -> Vec<Scenario> {
        Scenario::all(self.n()).into_iter().filter(|s| self.config.direction.admits(s.extremum)).collect()
    }
}

/// `(lower, upper)` available aggregate flexibility in kW.
///
/// Upper is `sum(p_max_G - p_G + p_max_L - p_L)`, lower the same with the
/// minimum limits.
pub fn available_flexibility_bounds(model: &FeederModel) -> (f64, f64) {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for g in &model.inverters {
        lo += g.p_min - g.p_kw;
        hi += g.p_max - g.p_kw;
    }
    for l in &model.loads {
        lo += l.p_min - l.p_kw;
        hi += l.p_max - l.p_kw;
    }
    (lo, hi)
}

/// Box of the DSO setpoint of one inverter, in native units: power ratio
/// for constant-pf, kvar for constant-q and volt-var.
pub fn setpoint_box(inv: &InverterSpec) -> (f64, f64) {
    match inv.control {
        InverterControl::ConstantPf { pf } => {
            let k = pf_ratio(pf);
            (-k, k)
        }
        InverterControl::ConstantQ { gamma } => (-gamma * inv.p_kw, gamma * inv.p_kw),
        InverterControl::VoltVar => (0.0, inv.s_kva),
    }
}

/// Worst-case fixed setpoints per inverter (native units); `None` for
/// constant-q, whose reactive power stays a follower variable.
///
/// Maximising: full reactive injection (constant-pf) or no support
/// (volt-var). Minimising: the opposite extreme.
pub fn fix_worst_case_setpoints(model: &FeederModel, extremum: Extremum) -> Vec<Option<f64>> {
    model
        .inverters
        .iter()
        .map(|g| {
            let (lo, hi) = setpoint_box(g);
            match (g.control, extremum) {
                (InverterControl::ConstantQ { .. }, _) => None,
                (InverterControl::ConstantPf { .. }, Extremum::Max) => Some(hi),
                (InverterControl::ConstantPf { .. }, Extremum::Min) => Some(lo),
                (InverterControl::VoltVar, Extremum::Max) => Some(lo),
                (InverterControl::VoltVar, Extremum::Min) => Some(hi),
            }
        })
        .collect()
}

/// Upper-level decision in physical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperDecision {
    pub mode: ModeKind,
    pub dp_minus_kw: f64,
    pub dp_plus_kw: f64,
    /// One setpoint per inverter: power ratio, or kvar.
    pub setpoints: Vec<f64>,
}

impl UpperDecision {
    /// The anchor-preserving decision with zero flexibility.
    pub fn zero(model: &FeederModel, mode: ModeKind) -> UpperDecision {
        let setpoints = model
            .inverters
            .iter()
            .map(|g| {
                let (lo, hi) = setpoint_box(&g.with_mode(mode));
                0.0_f64.clamp(lo, hi)
            })
            .collect();
        UpperDecision { mode, dp_minus_kw: 0.0, dp_plus_kw: 0.0, setpoints }
    }

    pub fn validate(&self, ctx: &FlexContext) -> Result<(), FlexError> {
        let (lo, hi) = available_flexibility_bounds(&ctx.model);
        let tol = 1e-6 * (1.0 + hi.abs().max(lo.abs()));
        if self.mode != ctx.mode {
            return Err(FlexError::InvalidDecision(format!("decision mode {} differs from study mode {}", self.mode, ctx.mode)));
        }
        if !(self.dp_minus_kw <= tol && self.dp_minus_kw >= lo - tol) {
            return Err(FlexError::InvalidDecision(format!("dp_minus {} kW outside [{lo}, 0]", self.dp_minus_kw)));
        }
        if !(self.dp_plus_kw >= -tol && self.dp_plus_kw <= hi + tol) {
            return Err(FlexError::InvalidDecision(format!("dp_plus {} kW outside [0, {hi}]", self.dp_plus_kw)));
        }
        if self.setpoints.len() != ctx.model.inverters.len() {
            return Err(FlexError::InvalidDecision(format!(
                "{} setpoints for {} inverters",
                self.setpoints.len(),
                ctx.model.inverters.len()
            )));
        }
        for (g, (inv, v)) in ctx.model.inverters.iter().zip(&self.setpoints).enumerate() {
            let (l, h) = setpoint_box(inv);
            let t = 1e-9 * (1.0 + l.abs().max(h.abs()));
            if !(v.is_finite() && *v >= l - t && *v <= h + t) {
                return Err(FlexError::InvalidDecision(format!("setpoint {v} of inverter {g} outside [{l}, {h}]")));
            }
        }
        Ok(())
    }

    /// Parameter values in per unit.
    pub fn params(&self, ctx: &FlexContext) -> ParamValues {
        let base = ctx.base();
        let setpoints = self
            .setpoints
            .iter()
            .map(|v| match ctx.mode {
                ModeKind::ConstantPf => *v,
                ModeKind::ConstantQ | ModeKind::VoltVar => v / base,
            })
            .collect();
        ParamValues { dp_plus: self.dp_plus_kw / base, dp_minus: self.dp_minus_kw / base, setpoints }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::parse_feeder;

    fn feeder(load_range: (f64, f64), inv_range: (f64, f64)) -> FeederModel {
        parse_feeder(&format!(
            r#"{{"buses":[{{"id":"s","phases":["a"]}},{{"id":"x","phases":["a"]}}],
                "segments":[{{"from":"s","to":"x","z":[[0.1,0.2],[0,0],[0,0],[0,0],[1,1],[0,0],[0,0],[0,0],[1,1]]}}],
                "slack":"s","base_kva":100.0,"base_kv":1.0,
                "loads":[{{"bus":"x","phase":"a","p_kw":4,"p_min":{},"p_max":{},"pf":0.95}}],
                "inverters":[{{"bus":"x","phase":"a","p_kw":3,"p_min":{},"p_max":{},"s_kva":10,"mode":"constant-pf"}}]}}"#,
            load_range.0, load_range.1, inv_range.0, inv_range.1
        ))
        .unwrap()
    }

    #[test]
    fn no_flexible_devices_give_zero_range() {
        assert_eq!(available_flexibility_bounds(&feeder((4.0, 4.0), (3.0, 3.0))), (0.0, 0.0));
    }

    #[test]
    fn single_load_contributes_its_band() {
        assert_eq!(available_flexibility_bounds(&feeder((2.0, 6.0), (3.0, 3.0))), (-2.0, 2.0));
    }

    #[test]
    fn worst_case_setpoints_follow_the_extremum() {
        let m = feeder((2.0, 6.0), (1.0, 5.0));
        let k = (1.0_f64 - 0.81).sqrt() / 0.9;
        let pf = m.with_mode(ModeKind::ConstantPf);
        assert!((fix_worst_case_setpoints(&pf, Extremum::Max)[0].unwrap() - k).abs() < 1e-15);
        assert!((fix_worst_case_setpoints(&pf, Extremum::Min)[0].unwrap() + k).abs() < 1e-15);
        let vv = m.with_mode(ModeKind::VoltVar);
        assert_eq!(fix_worst_case_setpoints(&vv, Extremum::Max)[0], Some(0.0));
        assert_eq!(fix_worst_case_setpoints(&vv, Extremum::Min)[0], Some(10.0));
        assert_eq!(fix_worst_case_setpoints(&m.with_mode(ModeKind::ConstantQ), Extremum::Max)[0], None);
    }

    #[test]
    fn direction_filter() {
        assert!(Direction::OvervoltageOnly.admits(Extremum::Max));
        assert!(!Direction::OvervoltageOnly.admits(Extremum::Min));
        assert!("undervoltage-only".parse::<Direction>().unwrap().admits(Extremum::Min));
    }

    #[test]
    fn config_rejects_inverted_band() {
        let c = FlexConfig { v_min: 1.1, v_max: 0.9, ..Default::default() };
        assert!(c.validate().is_err());
    }
}

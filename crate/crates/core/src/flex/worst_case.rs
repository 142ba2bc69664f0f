use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::follower::{build_follower, FollowerProblem, ParamValues, SetpointHandling};
use super::scenario::{Activation, Scenario};
use super::{fix_worst_case_setpoints, FlexContext, FlexError};
use crate::feeder::ModeKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioLimit {
    pub scenario: Scenario,
    /// Largest admissible `dp_plus` (positive) or smallest `dp_minus` (negative), kW.
    pub limit_kw: f64,
    /// Worst-case magnitude at the limit, p.u.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLimits {
    pub node: usize,
    pub label: String,
    pub upper_kw: f64,
    pub lower_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseTable {
    pub scenarios: Vec<ScenarioLimit>,
    pub nodes: Vec<NodeLimits>,
    /// `(max of lower limits, min of upper limits)`, kW.
    pub range_kw: (f64, f64),
    /// Scenarios attaining the range: positive first, then negative.
    pub seeds: Vec<Scenario>,
}

/// Worst-case setpoints in per unit.
pub(crate) fn worst_case_params(ctx: &FlexContext, scenario: Scenario, dp: f64) -> ParamValues {
    let base = ctx.base();
    let setpoints = fix_worst_case_setpoints(&ctx.model, scenario.extremum)
        .into_iter()
        .map(|v| match (v, ctx.mode) {
            (None, _) => 0.0,
            (Some(x), ModeKind::ConstantPf) => x,
            (Some(x), _) => x / base,
        })
        .collect();
    match scenario.activation {
        Activation::Positive => ParamValues { dp_plus: dp, dp_minus: 0.0, setpoints },
        Activation::Negative => ParamValues { dp_plus: 0.0, dp_minus: dp, setpoints },
    }
}

/// Largest `|dp|` in `[0, |full|]` keeping `admissible` true, assuming it
/// is true on an interval starting at zero. Returns `(dp, value at dp)`, or
/// `None` when zero is already inadmissible.
pub(crate) fn bisect<T>(
    full: f64,
    tol: f64,
    mut eval: impl FnMut(f64) -> Result<T, FlexError>,
    admissible: impl Fn(&T) -> bool,
) -> Result<Option<(f64, T)>, FlexError> {
    let at_zero = eval(0.0)?;
    if !admissible(&at_zero) {
        return Ok(None);
    }
    if full == 0.0 {
        return Ok(Some((0.0, at_zero)));
    }
    let at_full = eval(full)?;
    if admissible(&at_full) {
        return Ok(Some((full, at_full)));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut best = at_zero;
    let rel = tol / full.abs();
    while hi - lo > rel {
        let mid = 0.5 * (lo + hi);
        let v = eval(mid * full)?;
        if admissible(&v) {
            lo = mid;
            best = v;
        } else {
            hi = mid;
        }
    }
    Ok(Some((lo * full, best)))
}

fn scenario_limit(ctx: &FlexContext, f: &FollowerProblem) -> Result<ScenarioLimit, FlexError> {
    let s = f.scenario;
    let (lo, hi) = ctx.available;
    let full = match s.activation {
        Activation::Positive => hi,
        Activation::Negative => lo,
    };
    let tol = ctx.config.bisect_tol * hi.abs().max(lo.abs()).max(1e-12);
    let (v_min, v_max) = (ctx.config.v_min, ctx.config.v_max);
    let res = bisect(full, tol, |dp| f.solve(&worst_case_params(ctx, s, dp)).map(|sol| sol.magnitude), |m| {
        *m >= v_min && *m <= v_max
    })?;
    let (dp, magnitude) = match res {
        Some(r) => r,
        None => (0.0, f.solve(&worst_case_params(ctx, s, 0.0))?.magnitude),
    };
    Ok(ScenarioLimit { scenario: s, limit_kw: dp * ctx.base(), magnitude })
}

/// Per-scenario limits by bisection on the aggregate bound, with the
/// inverter setpoints at their worst case.
///
/// The follower optimum only moves outward as the bound grows, so the
/// admissible bounds form an interval starting at zero.
pub fn worst_case_limits(ctx: &FlexContext) -> Result<WorstCaseTable, FlexError> {
    ctx.check_anchor()?;
    let scenarios = ctx.scenarios();
    let limits: Vec<ScenarioLimit> = scenarios
        .par_iter()
        .map(|s| {
            let f = build_follower(ctx, *s, SetpointHandling::WorstCase)?;
            scenario_limit(ctx, &f)
        })
        .collect::<Result<_, _>>()?;

    let base = ctx.base();
    let (avail_lo, avail_hi) = (ctx.available.0 * base, ctx.available.1 * base);
    let mut nodes: Vec<NodeLimits> = (0..ctx.n())
        .map(|k| NodeLimits { node: k, label: ctx.model.index().label(k), upper_kw: avail_hi, lower_kw: avail_lo })
        .collect();
    for l in &limits {
        let node = &mut nodes[l.scenario.node];
        match l.scenario.activation {
            Activation::Positive => node.upper_kw = node.upper_kw.min(l.limit_kw),
            Activation::Negative => node.lower_kw = node.lower_kw.max(l.limit_kw),
        }
    }
    let pick = |act: Activation, better: fn(f64, f64) -> bool| {
        let mut best: Option<&ScenarioLimit> = None;
        for l in limits.iter().filter(|l| l.scenario.activation == act) {
            if best.is_none_or(|b| better(l.limit_kw, b.limit_kw)) {
                best = Some(l);
            }
        }
        best
    };
    let upper = pick(Activation::Positive, |a, b| a < b);
    let lower = pick(Activation::Negative, |a, b| a > b);
    let range_kw = (lower.map_or(0.0, |l| l.limit_kw), upper.map_or(0.0, |l| l.limit_kw));
    let seeds = upper.into_iter().chain(lower).map(|l| l.scenario).collect();
    Ok(WorstCaseTable { scenarios: limits, nodes, range_kw, seeds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::parse_feeder;
    use crate::flex::FlexConfig;

    fn feeder(p_range: (f64, f64)) -> crate::feeder::FeederModel {
        parse_feeder(&format!(
            r#"{{"buses":[{{"id":"s","phases":["a"]}},{{"id":"x","phases":["a"]}}],
                "segments":[{{"from":"s","to":"x","z":[[0.4,0.6],[0,0],[0,0],[0,0],[0.4,0.6],[0,0],[0,0],[0,0],[0.4,0.6]]}}],
                "slack":"s","base_kva":100.0,"base_kv":2.4,
                "loads":[{{"bus":"x","phase":"a","p_kw":60,"p_min":{},"p_max":{},"pf":0.95}}],
                "inverters":[{{"bus":"x","phase":"a","p_kw":30,"p_min":0,"p_max":60,"s_kva":80,"mode":"constant-pf"}}]}}"#,
            p_range.0, p_range.1
        ))
        .unwrap()
    }

    #[test]
    fn loose_band_returns_full_range() {
        let cfg = FlexConfig { v_min: 0.01, v_max: 2.0, ..Default::default() };
        for mode in ModeKind::ALL {
            let ctx = FlexContext::new(&feeder((20.0, 100.0)), mode, cfg).unwrap();
            let t = worst_case_limits(&ctx).unwrap();
            assert!((t.range_kw.0 + 70.0).abs() < 1e-9 && (t.range_kw.1 - 70.0).abs() < 1e-9, "{mode}: {:?}", t.range_kw);
            assert_eq!(t.nodes.len(), 1);
        }
    }

    #[test]
    fn bisection_finds_a_threshold() {
        // Crossing at 0.3 of a range of 2.
        let r = bisect(2.0, 1e-9, Ok, |x| *x <= 0.6).unwrap().unwrap();
        assert!((r.0 - 0.6).abs() < 1e-8 && r.0 <= 0.6);
        let neg = bisect(-2.0, 1e-9, Ok, |x| *x >= -0.5).unwrap().unwrap();
        assert!((neg.0 + 0.5).abs() < 1e-8);
        assert!(bisect(1.0, 1e-9, Ok, |x| *x > 0.5).unwrap().is_none());
    }

    #[test]
    fn tight_band_limits_the_range() {
        let ctx0 = FlexContext::new(&feeder((20.0, 100.0)), ModeKind::ConstantPf, FlexConfig::default()).unwrap();
        let m0 = ctx0.anchor.v[0].norm();
        let cfg = FlexConfig { v_min: m0 - 0.002, v_max: m0 + 0.002, ..Default::default() };
        let ctx = FlexContext::new(&feeder((20.0, 100.0)), ModeKind::ConstantQ, cfg).unwrap();
        let t = worst_case_limits(&ctx).unwrap();
        assert!(t.range_kw.1 < 70.0 && t.range_kw.0 > -70.0);
        assert!(t.range_kw.1 >= 0.0 && t.range_kw.0 <= 0.0);
        assert_eq!(t.seeds.len(), 2);
    }
}

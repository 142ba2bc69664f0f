#![allow(dead_code)]

use flexgrid::feeder::{parse_feeder, FeederModel};
use flexgrid::lp::{LinearProgram, Relation, Sense};
use flexgrid::powerflow::solve_nonlinear_pf;
use serde_json::json;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Best objective over all vertices of a boxed LP, `None` when infeasible.
///
/// A vertex is fixed by a set `R` of tight rows and a set `S` of free
/// variables with `|S| = |R|`; every other variable sits at a bound.
pub fn vertex_oracle(lp: &LinearProgram) -> Option<f64> {
    let n = lp.n_vars();
    let m = lp.n_rows();
    let sign = if lp.sense == Sense::Max { 1.0 } else { -1.0 };
    let eq_rows: Vec<usize> = (0..m).filter(|r| lp.rows[*r].relation == Relation::Eq).collect();
    let dense: Vec<Vec<f64>> = lp
        .rows
        .iter()
        .map(|r| {
            let mut v = vec![0.0; n];
            for (j, a) in &r.coefs {
                v[*j] += a;
            }
            v
        })
        .collect();
    let mut best: Option<f64> = None;
    for rmask in 0u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|r| rmask & (1 << r) != 0).collect();
        if eq_rows.iter().any(|r| !rows.contains(r)) || rows.len() > n {
            continue;
        }
        for smask in 0u32..(1 << n) {
            if smask.count_ones() as usize != rows.len() {
                continue;
            }
            let free: Vec<usize> = (0..n).filter(|j| smask & (1 << j) != 0).collect();
            let fixed: Vec<usize> = (0..n).filter(|j| smask & (1 << j) == 0).collect();
            for bmask in 0u32..(1 << fixed.len()) {
                let mut x = vec![0.0; n];
                for (k, j) in fixed.iter().enumerate() {
                    let v = &lp.vars[*j];
                    x[*j] = if bmask & (1 << k) != 0 { v.upper } else { v.lower };
                }
                if !rows.is_empty() {
                    let k = rows.len();
                    let a = DMatrix::from_fn(k, k, |i, c| dense[rows[i]][free[c]]);
                    let b = DVector::from_fn(k, |i, _| {
                        lp.rows[rows[i]].rhs - fixed.iter().map(|j| dense[rows[i]][*j] * x[*j]).sum::<f64>()
                    });
                    let Some(sol) = a.lu().solve(&b) else { continue };
                    for (c, j) in free.iter().enumerate() {
                        x[*j] = sol[c];
                    }
                }
                if lp.max_violation(&x) <= 1e-9 {
                    let val = sign * lp.objective_value(&x);
                    if best.is_none_or(|b| val > b) {
                        best = Some(val);
                    }
                }
            }
        }
    }
    best.map(|b| sign * b)
}

/// Random boxed LP with `n` variables and `m` rows of mixed relation.
pub fn random_lp(rng: &mut ChaCha8Rng, n: usize, m: usize) -> LinearProgram {
    let sense = if rng.gen_bool(0.5) { Sense::Max } else { Sense::Min };
    let mut lp = LinearProgram::new(sense);
    for j in 0..n {
        let lo = rng.gen_range(-3..=1) as f64;
        let hi = lo + rng.gen_range(1..=4) as f64;
        let x = lp.add_var(format!("x{j}"), lo, hi);
        lp.set_objective(x, rng.gen_range(-5.0..5.0));
    }
    for r in 0..m {
        let mut coefs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coefs.push((j, rng.gen_range(-4.0..4.0)));
            }
        }
        let relation = match rng.gen_range(0..10) {
            0 => Relation::Eq,
            1..=3 => Relation::Ge,
            _ => Relation::Le,
        };
        let rhs = rng.gen_range(-4.0..6.0);
        lp.add_row(format!("r{r}"), coefs, relation, rhs);
    }
    lp
}

pub fn ieee13_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/ieee13.json")
}

pub fn ieee13() -> FeederModel {
    flexgrid::feeder::load_feeder(ieee13_path()).expect("bundled feeder parses")
}

fn diag(r: f64, x: f64) -> serde_json::Value {
    json!([[r, x], [0, 0], [0, 0], [0, 0], [r, x], [0, 0], [0, 0], [0, 0], [r, x]])
}

/// Random single-phase radial feeder with 2 to 4 buses (slack included),
/// one inverter and one or two flexible loads. Returns the model and a
/// voltage band a few percent around the anchor extremes.
pub fn random_feeder(rng: &mut ChaCha8Rng) -> (FeederModel, (f64, f64)) {
    let buses = rng.gen_range(2..=4);
    let ids: Vec<String> = (0..buses).map(|i| format!("b{i}")).collect();
    let mut segments = Vec::new();
    for i in 1..buses {
        let parent = rng.gen_range(0..i);
        segments.push(json!({"from": ids[parent], "to": ids[i], "z": diag(rng.gen_range(0.8..2.5), rng.gen_range(1.0..3.0))}));
    }
    let node = |rng: &mut ChaCha8Rng| ids[rng.gen_range(1..buses)].clone();
    let n_loads = rng.gen_range(1..=2);
    let mut loads = Vec::new();
    let mut used = Vec::new();
    for _ in 0..n_loads {
        let bus = node(rng);
        if used.contains(&bus) {
            continue;
        }
        used.push(bus.clone());
        let p: f64 = rng.gen_range(20.0..60.0);
        let d = p * rng.gen_range(0.1..0.4);
        loads.push(json!({"bus": bus, "phase": "a", "p_kw": p, "p_min": p - d, "p_max": p + d, "pf": rng.gen_range(0.9..0.99)}));
    }
    let p: f64 = rng.gen_range(10.0..30.0);
    let s = rng.gen_range(50.0..80.0);
    let inverter = json!({
        "bus": node(rng), "phase": "a", "p_kw": p, "p_min": rng.gen_range(0.0..p),
        "p_max": rng.gen_range(p..s), "s_kva": s, "mode": "constant-pf"
    });
    let doc = json!({
        "buses": ids.iter().map(|b| json!({"id": b, "phases": ["a"]})).collect::<Vec<_>>(),
        "segments": segments, "slack": "b0", "base_kva": 100.0, "base_kv": 2.4,
        "loads": loads, "inverters": [inverter],
    });
    let model = parse_feeder(&doc.to_string()).expect("generated feeder is valid");
    let (p, q) = model.current_injections_kw();
    let mags = solve_nonlinear_pf(&model, &p, &q).expect("anchor converges").magnitudes();
    let lo = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mags.iter().cloned().fold(0.0, f64::max);
    let band = (lo - rng.gen_range(0.003..0.03), hi + rng.gen_range(0.003..0.03));
    (model, band)
}

pub struct LimitCheck {
    pub scenario: flexgrid::flex::Scenario,
    pub solver_kw: f64,
    pub oracle_kw: f64,
    /// Brute-force worst magnitude at the solver's limit.
    pub oracle_at_solver: f64,
    pub ok: bool,
}

/// Compares one worst-case limit against the brute-force oracle: the two
/// limits agree within `1e-3 * full`, or the oracle magnitude at the
/// solver's limit sits within 0.01 p.u. of the binding band edge (inside
/// the band when the solver reports the full range).
pub fn check_limit(ctx: &flexgrid::flex::FlexContext, limit: &flexgrid::flex::ScenarioLimit) -> LimitCheck {
    use flexgrid::flex::{Activation, Extremum};
    use flexgrid::oracle::{brute_force_limit, brute_force_worst_voltage, OracleOptions, OracleSetpoints};
    let s = limit.scenario;
    let base = ctx.base();
    let full = match s.activation {
        Activation::Positive => ctx.available.1 * base,
        Activation::Negative => ctx.available.0 * base,
    };
    let span = (ctx.available.0.abs().max(ctx.available.1.abs()) * base).max(1e-9);
    let opts = OracleOptions { grid_points: 11, v_min: ctx.config.v_min, v_max: ctx.config.v_max };
    let oracle_kw = brute_force_limit(&ctx.model, s, full, &OracleSetpoints::WorstCase, opts, 1e-4 * span).unwrap();
    let at = brute_force_worst_voltage(&ctx.model, s, limit.limit_kw, &OracleSetpoints::WorstCase, opts).unwrap().magnitude;
    let edge = match s.extremum {
        Extremum::Max => ctx.config.v_max,
        Extremum::Min => ctx.config.v_min,
    };
    let close = (limit.limit_kw - oracle_kw).abs() <= 1e-3 * span;
    let mapped = if (limit.limit_kw - full).abs() <= 1e-9 * span {
        at <= ctx.config.v_max + 0.01 && at >= ctx.config.v_min - 0.01
    } else {
        (at - edge).abs() <= 0.01
    };
    LimitCheck { scenario: s, solver_kw: limit.limit_kw, oracle_kw, oracle_at_solver: at, ok: close || mapped }
}

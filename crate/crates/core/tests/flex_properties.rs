mod common;

use flexgrid::feeder::{FeederModel, ModeKind};
use flexgrid::flex::{
    build_follower, feasibility_check, run_iterative, setpoint_box, worst_case_limits, Activation, FlexConfig,
    FlexContext, Group, Scenario, SetpointHandling, UpperDecision, VarKind,
};
use flexgrid::lp::verify_strong_duality;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::random_feeder;

fn context(seed: u64) -> (FlexContext, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, (v_min, v_max)) = random_feeder(&mut rng);
    let mode = ModeKind::ALL[rng.gen_range(0..3)];
    let cfg = FlexConfig { v_min, v_max, ..Default::default() };
    (FlexContext::new(&model, mode, cfg).unwrap(), rng)
}

fn random_decision(ctx: &FlexContext, rng: &mut ChaCha8Rng, scale: f64) -> UpperDecision {
    let base = ctx.base();
    let setpoints = ctx
        .model
        .inverters
        .iter()
        .map(|g| {
            let (lo, hi) = setpoint_box(g);
            rng.gen_range(lo..=hi)
        })
        .collect();
    UpperDecision {
        mode: ctx.mode,
        dp_minus_kw: ctx.available.0 * base * scale * rng.gen_range(0.0..=1.0),
        dp_plus_kw: ctx.available.1 * base * scale * rng.gen_range(0.0..=1.0),
        setpoints,
    }
}

fn random_scenario(ctx: &FlexContext, rng: &mut ChaCha8Rng) -> Scenario {
    Scenario::from_id(rng.gen_range(0..ctx.n()), rng.gen_range(1..=4)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn follower_optimum_grows_with_the_box(seed in any::<u64>()) {
        let (ctx, mut rng) = context(seed);
        let s = random_scenario(&ctx, &mut rng);
        let inner = random_decision(&ctx, &mut rng, 1.0);
        let mut outer = inner.clone();
        outer.dp_plus_kw += (ctx.available.1 * ctx.base() - inner.dp_plus_kw) * rng.gen_range(0.0..=1.0);
        outer.dp_minus_kw += (ctx.available.0 * ctx.base() - inner.dp_minus_kw) * rng.gen_range(0.0..=1.0);
        let f = build_follower(&ctx, s, SetpointHandling::Upper).unwrap();
        let a = f.solve(&inner.params(&ctx)).unwrap();
        let b = f.solve(&outer.params(&ctx)).unwrap();
        prop_assert!(b.cert.objective >= a.cert.objective - 1e-9, "{} < {}", b.cert.objective, a.cert.objective);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deviations_follow_the_activation_sign(seed in any::<u64>()) {
        let (ctx, mut rng) = context(seed);
        let d = random_decision(&ctx, &mut rng, 1.0);
        for s in ctx.scenarios() {
            let f = build_follower(&ctx, s, SetpointHandling::Upper).unwrap();
            let sol = f.solve(&d.params(&ctx)).unwrap();
            for (v, x) in f.vars.iter().zip(&sol.cert.x) {
                match (v.kind, s.activation) {
                    (VarKind::DpL(_), Activation::Positive) | (VarKind::DpG(_), Activation::Negative) => prop_assert!(*x <= 0.0),
                    (VarKind::DpL(_), Activation::Negative) | (VarKind::DpG(_), Activation::Positive) => prop_assert!(*x >= 0.0),
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn zero_box_pins_every_deviation(seed in any::<u64>()) {
        let (ctx, mut rng) = context(seed);
        let mut d = random_decision(&ctx, &mut rng, 0.0);
        d.dp_plus_kw = 0.0;
        d.dp_minus_kw = 0.0;
        for s in ctx.scenarios() {
            let f = build_follower(&ctx, s, SetpointHandling::Upper).unwrap();
            let sol = f.solve(&d.params(&ctx)).unwrap();
            for (v, x) in f.vars.iter().zip(&sol.cert.x) {
                if matches!(v.kind, VarKind::DpL(_) | VarKind::DpG(_)) {
                    prop_assert!(x.abs() <= 1e-12, "{} = {x}", v.name);
                }
            }
        }
    }

    #[test]
    fn capability_rows_contain_the_disc(seed in any::<u64>()) {
        let (ctx, mut rng) = context(seed);
        let f = build_follower(&ctx, random_scenario(&ctx, &mut rng), SetpointHandling::Upper).unwrap();
        let base = ctx.base();
        for (g, inv) in ctx.model.inverters.iter().enumerate() {
            let s = inv.s_kva / base;
            let pg = inv.p_kw / base;
            let qv = f.var(VarKind::QG(g)).unwrap();
            let pv = f.var(VarKind::DpG(g));
            let rows: Vec<_> = f.rows.iter().filter(|r| r.group == Group::Inverter && r.name.starts_with("cap")).collect();
            prop_assert_eq!(rows.len() % 2, 0);
            for _ in 0..400 {
                let r = s * rng.gen_range(0.0_f64..=1.0).sqrt();
                let th = rng.gen_range(-std::f64::consts::FRAC_PI_2..=std::f64::consts::FRAC_PI_2);
                let (p, q) = (r * th.cos(), r * th.sin());
                let mut x = vec![0.0; f.vars.len()];
                x[qv] = q;
                match pv {
                    Some(j) => x[j] = p - pg,
                    None => continue,
                }
                prop_assert!(q >= f.vars[qv].lower - 1e-12 && q <= f.vars[qv].upper + 1e-12);
                for row in rows.iter().filter(|r| r.coefs.iter().any(|c| c.var == qv)) {
                    let lhs: f64 = row.coefs.iter().map(|c| c.value * x[c.var]).sum();
                    prop_assert!(lhs <= row.rhs + 1e-12, "{}: {lhs} > {}", row.name, row.rhs);
                }
            }
        }
    }
}

#[test]
fn hundred_random_followers_close_the_duality_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for case in 0..100 {
        let (ctx, mut r) = context(rng.gen());
        let s = random_scenario(&ctx, &mut r);
        let d = random_decision(&ctx, &mut r, 1.0);
        let f = build_follower(&ctx, s, SetpointHandling::Upper).unwrap();
        let sol = f.solve(&d.params(&ctx)).unwrap();
        assert!(verify_strong_duality(&sol.cert), "case {case}");
        let dual = sol.cert.dual_objective().unwrap();
        assert!((dual - sol.cert.objective).abs() <= 1e-6 * (1.0 + sol.cert.objective.abs()), "case {case}");
    }
}

#[test]
fn zero_decision_has_no_violations() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let (ctx, _) = context(rng.gen());
        let d = UpperDecision::zero(&ctx.model, ctx.mode);
        assert!(feasibility_check(&ctx, &d).unwrap().is_empty());
    }
}

#[test]
fn oversized_range_reports_the_binding_node() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut seen = 0;
    for _ in 0..40 {
        let (ctx, _) = context(rng.gen());
        let t = worst_case_limits(&ctx).unwrap();
        let full = ctx.available.1 * ctx.base();
        // Constant-q worst cases choose q freely, which no fixed setpoint matches.
        if ctx.mode == ModeKind::ConstantQ || t.range_kw.1 >= full - 1e-6 {
            continue;
        }
        let (mode, model): (ModeKind, &FeederModel) = (ctx.mode, &ctx.model);
        let mut d = UpperDecision::zero(model, mode);
        for (g, sp) in flexgrid::flex::fix_worst_case_setpoints(model, t.seeds[0].extremum).into_iter().enumerate() {
            d.setpoints[g] = sp.unwrap_or(0.0);
        }
        d.dp_plus_kw = (t.range_kw.1 + 0.5 * (full - t.range_kw.1)).min(full);
        let v = feasibility_check(&ctx, &d).unwrap();
        assert!(v.iter().any(|x| x.scenario == t.seeds[0]), "{:?} not in {v:?}", t.seeds[0]);
        seen += 1;
    }
    assert!(seen >= 5, "only {seen} binding cases");
}

#[test]
fn worst_case_range_is_nested_in_the_ideal_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for case in 0..15 {
        let (model, (v_min, v_max)) = random_feeder(&mut rng);
        for mode in ModeKind::ALL {
            let ctx = FlexContext::new(&model, mode, FlexConfig { v_min, v_max, ..Default::default() }).unwrap();
            let r = run_iterative(&ctx).unwrap();
            assert!(r.dp_plus_mw >= r.worst_case_mw.1 - 1e-9, "case {case} {mode}");
            assert!(r.dp_minus_mw <= r.worst_case_mw.0 + 1e-9, "case {case} {mode}");
            // Adding followers never enlarges the ideal range.
            for w in r.log.windows(2) {
                let a = w[0].dp_plus_kw - w[0].dp_minus_kw;
                let b = w[1].dp_plus_kw - w[1].dp_minus_kw;
                assert!(b <= a + 1e-6, "case {case} {mode}: {a} -> {b}");
            }
            for g in &r.duality {
                assert!(g.gap.abs() <= 1e-6 * (1.0 + g.primal.abs()));
            }
        }
    }
}

//! Lower-level problems with upper-level values kept as symbolic parameters.

use std::collections::BTreeSet;
use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::scenario::{Activation, Scenario};
use super::{FlexContext, FlexError};
use crate::feeder::ModeKind;
use crate::lp::{solve_lp, DualCertificate, LinearProgram, LpStatus, Relation, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    DpPlus,
    DpMinus,
    /// Setpoint of inverter `g`.
    Setpoint(usize),
}

/// Upper-level values in per unit (power ratios stay dimensionless).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamValues {
    pub dp_plus: f64,
    pub dp_minus: f64,
    pub setpoints: Vec<f64>,
}

impl ParamValues {
    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::DpPlus => self.dp_plus,
            Param::DpMinus => self.dp_minus,
            Param::Setpoint(g) => self.setpoints.get(g).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Vd(usize),
    Vq(usize),
    Vm(usize),
    DpL(usize),
    QL(usize),
    DpG(usize),
    QG(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FVar {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    /// Magnitude, load reactive power and power flow rows.
    System,
    /// Capability and control-mode rows.
    Inverter,
    /// Activation and aggregate rows.
    Flex,
}

/// Coefficient `value + coef * param` on `var`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PCoef {
    pub var: usize,
    pub value: f64,
    pub param: Option<(Param, f64)>,
}

/// `sum coefs x  rel  rhs + sum coef * param`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRow {
    pub name: String,
    pub group: Group,
    pub coefs: Vec<PCoef>,
    pub relation: Relation,
    pub rhs: f64,
    pub rhs_params: Vec<(Param, f64)>,
}

/// Whether setpoints are upper-level parameters or worst-case values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetpointHandling {
    Upper,
    /// Constant-q reactive power becomes a free follower variable; other
    /// modes still read the setpoint slot, filled with the worst case.
    WorstCase,
}

/// A maximisation LP in per unit whose optimum is `sign * |v_k|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerProblem {
    pub scenario: Scenario,
    pub mode: ModeKind,
    pub handling: SetpointHandling,
    pub vars: Vec<FVar>,
    pub rows: Vec<PRow>,
    pub objective: Vec<(usize, f64)>,
    /// Magnitude variable of the target node.
    pub target: usize,
    pub base_kva: f64,
}

#[derive(Debug, Clone)]
pub struct FollowerSolution {
    pub scenario: Scenario,
    /// Worst-case magnitude of the target node, p.u.
    pub magnitude: f64,
    pub cert: DualCertificate,
}

impl FollowerProblem {
    pub fn var(&self, kind: VarKind) -> Option<usize> {
        self.vars.iter().position(|v| v.kind == kind)
    }

    pub fn params(&self) -> BTreeSet<(u8, usize)> {
        let key = |p: Param| match p {
            Param::DpPlus => (0, 0),
            Param::DpMinus => (1, 0),
            Param::Setpoint(g) => (2, g),
        };
        let mut out = BTreeSet::new();
        for r in &self.rows {
            out.extend(r.coefs.iter().filter_map(|c| c.param.map(|(p, _)| key(p))));
            out.extend(r.rhs_params.iter().map(|(p, _)| key(*p)));
        }
        out
    }

    /// The LP at fixed parameter values; variable and row indices match.
    pub fn instantiate(&self, params: &ParamValues) -> LinearProgram {
        let mut lp = LinearProgram::new(Sense::Max);
        for v in &self.vars {
            lp.add_var(v.name.clone(), v.lower, v.upper);
        }
        for (j, c) in &self.objective {
            lp.set_objective(*j, *c);
        }
        for r in &self.rows {
            let coefs = r
                .coefs
                .iter()
                .map(|c| (c.var, c.value + c.param.map_or(0.0, |(p, a)| a * params.get(p))))
                .collect();
            let rhs = r.rhs + r.rhs_params.iter().map(|(p, a)| a * params.get(*p)).sum::<f64>();
            lp.add_row(r.name.clone(), coefs, r.relation, rhs);
        }
        lp
    }

    pub fn solve(&self, params: &ParamValues) -> Result<FollowerSolution, FlexError> {
        let lp = self.instantiate(params);
        let cert = solve_lp(&lp)?;
        match cert.status {
            LpStatus::Optimal => Ok(FollowerSolution { scenario: self.scenario, magnitude: cert.x[self.target], cert }),
            LpStatus::Infeasible => Err(FlexError::FollowerInfeasible { scenario: self.scenario.to_string() }),
            LpStatus::Unbounded => Err(FlexError::FollowerUnbounded { scenario: self.scenario.to_string() }),
        }
    }

    /// Per-node injections in kW/kvar implied by a follower point.
    pub fn injections_kw(&self, ctx: &FlexContext, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let model = &ctx.model;
        let base = self.base_kva;
        let (mut p, mut q) = model.current_injections_kw();
        for (g, inv) in model.inverters.iter().enumerate() {
            q[model.inverter_node(g)] -= inv.q_kvar;
        }
        for (v, xv) in self.vars.iter().zip(x) {
            match v.kind {
                VarKind::DpG(g) => p[model.inverter_node(g)] += xv * base,
                VarKind::DpL(l) => p[model.load_node(l)] -= xv * base,
                VarKind::QG(g) => q[model.inverter_node(g)] += xv * base,
                VarKind::QL(l) => q[model.load_node(l)] += model.loads[l].q_kvar() - xv * base,
                _ => {}
            }
        }
        (p, q)
    }
}

/// Assembles the follower of `scenario` in the context's study mode.
pub fn build_follower(ctx: &FlexContext, scenario: Scenario, handling: SetpointHandling) -> Result<FollowerProblem, FlexError> {
    let model = &ctx.model;
    let n = ctx.n();
    if scenario.node >= n {
        return Err(FlexError::InvalidConfig(format!("scenario node {} out of range (n = {n})", scenario.node)));
    }
    let base = ctx.base();
    let label = |k: usize| model.index().label(k);
    let positive = scenario.activation == Activation::Positive;
    let mut vars: Vec<FVar> = Vec::new();
    let add = |vars: &mut Vec<FVar>, name: String, kind: VarKind, lower: f64, upper: f64| {
        vars.push(FVar { name, kind, lower, upper });
        vars.len() - 1
    };

    // Nodes whose magnitude is needed: the target and volt-var inverters.
    let mut observed = vec![scenario.node];
    if ctx.mode == ModeKind::VoltVar {
        observed.extend((0..model.inverters.len()).map(|g| model.inverter_node(g)));
    }
    observed.sort_unstable();
    observed.dedup();
    let mut vd = Vec::new();
    let mut vq = Vec::new();
    let mut vm = Vec::new();
    for &k in &observed {
        let inf = f64::INFINITY;
        vd.push(add(&mut vars, format!("vd[{}]", label(k)), VarKind::Vd(k), -inf, inf));
        vq.push(add(&mut vars, format!("vq[{}]", label(k)), VarKind::Vq(k), -inf, inf));
        vm.push(add(&mut vars, format!("vm[{}]", label(k)), VarKind::Vm(k), -inf, inf));
    }
    let vm_of = |k: usize| vm[observed.binary_search(&k).expect("observed node")];

    let clip = |lo: f64, hi: f64| if positive { (lo.min(0.0), hi.min(0.0)) } else { (lo.max(0.0), hi.max(0.0)) };
    // Loads: deviation and reactive power only when the deviation can move.
    let mut load_vars: Vec<Option<(usize, usize)>> = Vec::new();
    for (l, spec) in model.loads.iter().enumerate() {
        let lo = (spec.p_min.max(0.0) - spec.p_kw) / base;
        let hi = (spec.p_max - spec.p_kw) / base;
        let (lo, hi) = clip(lo, hi);
        if hi - lo > 1e-12 {
            let k = model.load_node(l);
            let dp = add(&mut vars, format!("dpL[{}]", label(k)), VarKind::DpL(l), lo, hi);
            let q = add(&mut vars, format!("qL[{}]", label(k)), VarKind::QL(l), f64::NEG_INFINITY, f64::INFINITY);
            load_vars.push(Some((dp, q)));
        } else {
            load_vars.push(None);
        }
    }
    let flip = |lo: f64, hi: f64| if positive { (lo.max(0.0), hi.max(0.0)) } else { (lo.min(0.0), hi.min(0.0)) };
    let mut inv_vars: Vec<(Option<usize>, usize)> = Vec::new();
    for (g, spec) in model.inverters.iter().enumerate() {
        let k = model.inverter_node(g);
        let lo = (spec.p_min.max(0.0) - spec.p_kw) / base;
        let hi = (spec.p_max.min(spec.s_kva) - spec.p_kw) / base;
        let (lo, hi) = flip(lo, hi);
        let dp = (hi - lo > 1e-12).then(|| add(&mut vars, format!("dpG[{}]", label(k)), VarKind::DpG(g), lo, hi));
        let s = spec.s_kva / base;
        let q = add(&mut vars, format!("qG[{}]", label(k)), VarKind::QG(g), -s, s);
        inv_vars.push((dp, q));
    }

    let mut rows: Vec<PRow> = Vec::new();
    let lin = |var: usize, value: f64| PCoef { var, value, param: None };

    // Injection terms: P and Q per node as (var, sign) lists, plus the
    // constant injection at the anchor.
    let mut p_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut q_terms: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut s0: Vec<Complex64> = ctx.anchor.p_kw.iter().map(|p| Complex64::new(p / base, 0.0)).collect();
    for (l, spec) in model.loads.iter().enumerate() {
        let k = model.load_node(l);
        match load_vars[l] {
            Some((dp, q)) => {
                p_terms[k].push((dp, -1.0));
                q_terms[k].push((q, -1.0));
            }
            // P - jQ with the constant load demand Q = -q_L.
            None => s0[k] += Complex64::new(0.0, spec.q_kvar() / base),
        }
    }
    for (g, _) in model.inverters.iter().enumerate() {
        let k = model.inverter_node(g);
        if let Some(dp) = inv_vars[g].0 {
            p_terms[k].push((dp, 1.0));
        }
        q_terms[k].push((inv_vars[g].1, 1.0));
    }

    for (o, &k) in observed.iter().enumerate() {
        let mut c0 = ctx.lpf.z1[k];
        for j in 0..n {
            c0 += ctx.lpf.z2[(k, j)] * s0[j];
        }
        let mut dcoefs = vec![lin(vd[o], 1.0)];
        let mut qcoefs = vec![lin(vq[o], 1.0)];
        for j in 0..n {
            let z = ctx.lpf.z2[(k, j)];
            for &(v, s) in &p_terms[j] {
                dcoefs.push(lin(v, -s * z.re));
                qcoefs.push(lin(v, -s * z.im));
            }
            for &(v, s) in &q_terms[j] {
                dcoefs.push(lin(v, -s * z.im));
                qcoefs.push(lin(v, s * z.re));
            }
        }
        rows.push(PRow { name: format!("pf_d[{}]", label(k)), group: Group::System, coefs: dcoefs, relation: Relation::Eq, rhs: c0.re, rhs_params: vec![] });
        rows.push(PRow { name: format!("pf_q[{}]", label(k)), group: Group::System, coefs: qcoefs, relation: Relation::Eq, rhs: c0.im, rhs_params: vec![] });
        let (cd, cq) = ctx.taylor.row(k);
        rows.push(PRow {
            name: format!("mag[{}]", label(k)),
            group: Group::System,
            coefs: vec![lin(vm[o], 1.0), lin(vd[o], -cd), lin(vq[o], -cq)],
            relation: Relation::Eq,
            rhs: 0.0,
            rhs_params: vec![],
        });
    }

    for (l, spec) in model.loads.iter().enumerate() {
        if let Some((dp, q)) = load_vars[l] {
            let kl = spec.q_ratio();
            rows.push(PRow {
                name: format!("qload[{}]", label(model.load_node(l))),
                group: Group::System,
                coefs: vec![lin(q, 1.0), lin(dp, -kl)],
                relation: Relation::Eq,
                rhs: kl * spec.p_kw / base,
                rhs_params: vec![],
            });
        }
    }

    let dv = ctx.config.v_max - ctx.config.v_min;
    for (g, spec) in model.inverters.iter().enumerate() {
        let k = model.inverter_node(g);
        let (dp, q) = inv_vars[g];
        let pg = spec.p_kw / base;
        let s = spec.s_kva / base;
        for (tag, sq) in [("cap+", 1.0), ("cap-", -1.0)] {
            let mut coefs = vec![lin(q, sq)];
            coefs.extend(dp.map(|d| lin(d, 1.0)));
            rows.push(PRow { name: format!("{tag}[{}]", label(k)), group: Group::Inverter, coefs, relation: Relation::Le, rhs: SQRT_2 * s - pg, rhs_params: vec![] });
        }
        let sp = Param::Setpoint(g);
        match ctx.mode {
            ModeKind::ConstantPf => {
                // q = gamma (p + dp)
                let mut coefs = vec![lin(q, 1.0)];
                coefs.extend(dp.map(|d| PCoef { var: d, value: 0.0, param: Some((sp, -1.0)) }));
                rows.push(PRow { name: format!("pf[{}]", label(k)), group: Group::Inverter, coefs, relation: Relation::Eq, rhs: 0.0, rhs_params: vec![(sp, pg)] });
            }
            ModeKind::ConstantQ => {
                let gamma = spec.params.gamma;
                if handling == SetpointHandling::Upper {
                    rows.push(PRow { name: format!("qset[{}]", label(k)), group: Group::Inverter, coefs: vec![lin(q, 1.0)], relation: Relation::Eq, rhs: 0.0, rhs_params: vec![(sp, 1.0)] });
                }
                // -gamma (p + dp) <= q <= gamma (p + dp)
                for (tag, sq) in [("qlo", -1.0), ("qhi", 1.0)] {
                    let mut coefs = vec![lin(q, sq)];
                    coefs.extend(dp.map(|d| lin(d, -gamma)));
                    rows.push(PRow { name: format!("{tag}[{}]", label(k)), group: Group::Inverter, coefs, relation: Relation::Le, rhs: gamma * pg, rhs_params: vec![] });
                }
            }
            ModeKind::VoltVar => {
                // q = qbar - 2 qbar (|v| - vmin) / dv
                rows.push(PRow {
                    name: format!("vv[{}]", label(k)),
                    group: Group::Inverter,
                    coefs: vec![lin(q, 1.0), PCoef { var: vm_of(k), value: 0.0, param: Some((sp, 2.0 / dv)) }],
                    relation: Relation::Eq,
                    rhs: 0.0,
                    rhs_params: vec![(sp, (ctx.config.v_max + ctx.config.v_min) / dv)],
                });
            }
        }
    }

    let mut agg: Vec<PCoef> = Vec::new();
    for v in load_vars.iter().flatten() {
        agg.push(lin(v.0, -1.0));
    }
    for (dp, _) in &inv_vars {
        agg.extend(dp.map(|d| lin(d, 1.0)));
    }
    if !agg.is_empty() {
        let (relation, param) = if positive { (Relation::Le, Param::DpPlus) } else { (Relation::Ge, Param::DpMinus) };
        rows.push(PRow { name: "aggregate".into(), group: Group::Flex, coefs: agg, relation, rhs: 0.0, rhs_params: vec![(param, 1.0)] });
    }

    let target = vm_of(scenario.node);
    Ok(FollowerProblem {
        scenario,
        mode: ctx.mode,
        handling,
        vars,
        rows,
        objective: vec![(target, scenario.sign())],
        target,
        base_kva: base,
    })
}

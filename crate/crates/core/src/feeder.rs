//! Feeder data model: buses, phase impedance segments, fixed-tap regulators,
//! loads and PV inverters, plus the single-phase node index.
//!
//! Feeders are read from a JSON document. All powers in the file are kW/kVA
//! per phase, impedances are ohms and `base_kv` is line-to-neutral.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default inverter power factor used when `mode_params.pf` is absent.
pub const DEFAULT_INVERTER_PF: f64 = 0.9;
/// Default inverter power ratio used when `mode_params.gamma` is absent.
pub const DEFAULT_INVERTER_GAMMA: f64 = 0.48;

const TAP_MIN: f64 = 0.9;
const TAP_MAX: f64 = 1.1;

#[derive(Debug, Error)]
pub enum FeederError {
    #[error("cannot read feeder file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation at {location}: {message}")]
    Schema { location: String, message: String },
    #[error("bus {0} is not connected to the slack bus")]
    Disconnected(String),
    #[error("{what} references missing {target}")]
    DanglingReference { what: String, target: String },
    #[error("segment {0} has a singular impedance matrix")]
    SingularImpedance(usize),
}

fn schema(location: impl Into<String>, message: impl Into<String>) -> FeederError {
    FeederError::Schema {
        location: location.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
    #[serde(rename = "c")]
    C,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::A, Phase::B, Phase::C];

    pub fn offset(self) -> usize {
        match self {
            Phase::A => 0,
            Phase::B => 1,
            Phase::C => 2,
        }
    }

    pub fn from_char(c: char) -> Option<Phase> {
        match c.to_ascii_lowercase() {
            'a' => Some(Phase::A),
            'b' => Some(Phase::B),
            'c' => Some(Phase::C),
            _ => None,
        }
    }

    /// Balanced substation phasor angle in degrees: 0, -120, +120.
    pub fn angle_deg(self) -> f64 {
        match self {
            Phase::A => 0.0,
            Phase::B => -120.0,
            Phase::C => 120.0,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Phase::A => 'a',
            Phase::B => 'b',
            Phase::C => 'c',
        };
        write!(f, "{c}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    /// Present phases, sorted a < b < c.
    pub phases: Vec<Phase>,
}

impl Bus {
    pub fn has_phase(&self, phase: Phase) -> bool {
        self.phases.contains(&phase)
    }
}

/// A line segment with a full 3x3 phase impedance matrix in ohms. Rows and
/// columns of phases absent at the receiving bus are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub from: String,
    pub to: String,
    pub z: [[Complex64; 3]; 3],
}

/// Ideal fixed-tap regulator at the sending end of a segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Regulator {
    pub segment: usize,
    pub taps: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSpec {
    pub bus: String,
    pub phase: Phase,
    pub p_kw: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub pf: f64,
}

impl LoadSpec {
    /// Reactive-to-active ratio of the constant power factor load.
    pub fn q_ratio(&self) -> f64 {
        pf_ratio(self.pf)
    }

    pub fn q_kvar(&self) -> f64 {
        self.q_ratio() * self.p_kw
    }

    pub fn is_flexible(&self) -> bool {
        self.p_max > self.p_min
    }
}

/// `sqrt(1 - pf^2) / pf`.
pub fn pf_ratio(pf: f64) -> f64 {
    (1.0 - pf * pf).max(0.0).sqrt() / pf
}

/// Reactive power control mode of a smart inverter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModeKind {
    #[serde(rename = "constant-pf")]
    ConstantPf,
    #[serde(rename = "constant-q")]
    ConstantQ,
    #[serde(rename = "volt-var")]
    VoltVar,
}

impl ModeKind {
    pub const ALL: [ModeKind; 3] = [ModeKind::ConstantPf, ModeKind::ConstantQ, ModeKind::VoltVar];

    pub fn as_str(self) -> &'static str {
        match self {
            ModeKind::ConstantPf => "constant-pf",
            ModeKind::ConstantQ => "constant-q",
            ModeKind::VoltVar => "volt-var",
        }
    }
}

impl fmt::Display for ModeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "constant-pf" => Ok(ModeKind::ConstantPf),
            "constant-q" => Ok(ModeKind::ConstantQ),
            "volt-var" => Ok(ModeKind::VoltVar),
            other => Err(format!(
                "unknown inverter mode `{other}` (expected constant-pf, constant-q or volt-var)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InverterControl {
    /// Power factor limit `pf_G` bounding the power ratio setpoint.
    ConstantPf { pf: f64 },
    /// Power ratio `gamma_G` bounding the reactive power setpoint.
    ConstantQ { gamma: f64 },
    VoltVar,
}

impl InverterControl {
    pub fn kind(&self) -> ModeKind {
        match self {
            InverterControl::ConstantPf { .. } => ModeKind::ConstantPf,
            InverterControl::ConstantQ { .. } => ModeKind::ConstantQ,
            InverterControl::VoltVar => ModeKind::VoltVar,
        }
    }
}

/// Mode parameters carried by every inverter so the study mode can be
/// switched without editing the feeder file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeParams {
    pub pf: f64,
    pub gamma: f64,
}

impl Default for ModeParams {
    fn default() -> Self {
        ModeParams {
            pf: DEFAULT_INVERTER_PF,
            gamma: DEFAULT_INVERTER_GAMMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverterSpec {
    pub bus: String,
    pub phase: Phase,
    pub p_kw: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub s_kva: f64,
    /// Reactive output at the current operating point.
    pub q_kvar: f64,
    pub control: InverterControl,
    pub params: ModeParams,
}

impl InverterSpec {
    pub fn with_mode(&self, mode: ModeKind) -> InverterSpec {
        let control = match mode {
            ModeKind::ConstantPf => InverterControl::ConstantPf { pf: self.params.pf },
            ModeKind::ConstantQ => InverterControl::ConstantQ {
                gamma: self.params.gamma,
            },
            ModeKind::VoltVar => InverterControl::VoltVar,
        };
        InverterSpec {
            control,
            ..self.clone()
        }
    }
}

/// Map from (bus, phase) of every non-slack single-phase node to a dense
/// index `0..n`, ordered bus-major (file order) and phase a < b < c.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusPhaseIndex {
    entries: Vec<(String, Phase)>,
    lookup: HashMap<(String, Phase), usize>,
}

impl BusPhaseIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, bus: &str, phase: Phase) -> Option<usize> {
        self.lookup.get(&(bus.to_string(), phase)).copied()
    }

    pub fn node(&self, k: usize) -> (&str, Phase) {
        let (b, p) = &self.entries[k];
        (b.as_str(), *p)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &str, Phase)> {
        self.entries
            .iter()
            .enumerate()
            .map(|(k, (b, p))| (k, b.as_str(), *p))
    }

    pub fn label(&self, k: usize) -> String {
        let (b, p) = self.node(k);
        format!("{b}.{p}")
    }
}

/// Validated, immutable feeder description.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederModel {
    pub buses: Vec<Bus>,
    pub segments: Vec<Segment>,
    pub regulators: Vec<Regulator>,
    pub slack_bus: String,
    pub base_kva: f64,
    pub base_kv: f64,
    pub loads: Vec<LoadSpec>,
    pub inverters: Vec<InverterSpec>,
    index: BusPhaseIndex,
    load_at: Vec<Option<usize>>,
    inverter_at: Vec<Option<usize>>,
}

impl FeederModel {
    /// Validates the raw parts and builds the node index.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        buses: Vec<Bus>,
        segments: Vec<Segment>,
        regulators: Vec<Regulator>,
        slack_bus: String,
        base_kva: f64,
        base_kv: f64,
        loads: Vec<LoadSpec>,
        inverters: Vec<InverterSpec>,
    ) -> Result<FeederModel, FeederError> {
        let mut model = FeederModel {
            buses,
            segments,
            regulators,
            slack_bus,
            base_kva,
            base_kv,
            loads,
            inverters,
            index: BusPhaseIndex {
                entries: Vec::new(),
                lookup: HashMap::new(),
            },
            load_at: Vec::new(),
            inverter_at: Vec::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn index(&self) -> &BusPhaseIndex {
        &self.index
    }

    /// Number of non-slack single-phase nodes.
    pub fn n(&self) -> usize {
        self.index.len()
    }

    pub fn bus(&self, id: &str) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn slack(&self) -> &Bus {
        self.bus(&self.slack_bus).expect("validated slack bus")
    }

    pub fn load_node(&self, load: usize) -> usize {
        let l = &self.loads[load];
        self.index.get(&l.bus, l.phase).expect("validated load")
    }

    pub fn inverter_node(&self, inv: usize) -> usize {
        let g = &self.inverters[inv];
        self.index.get(&g.bus, g.phase).expect("validated inverter")
    }

    /// Load index at node `k`, if any.
    pub fn load_at(&self, k: usize) -> Option<usize> {
        self.load_at[k]
    }

    /// Inverter index at node `k`, if any.
    pub fn inverter_at(&self, k: usize) -> Option<usize> {
        self.inverter_at[k]
    }

    /// Impedance base in ohms.
    pub fn z_base(&self) -> f64 {
        self.base_kv * self.base_kv * 1000.0 / self.base_kva
    }

    /// Returns a copy with every inverter switched to `mode`.
    pub fn with_mode(&self, mode: ModeKind) -> FeederModel {
        let mut m = self.clone();
        m.inverters = self.inverters.iter().map(|g| g.with_mode(mode)).collect();
        m
    }

    /// Returns the per-node (p, q) injections in kW/kvar at the current point.
    pub fn current_injections_kw(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for (i, l) in self.loads.iter().enumerate() {
            let k = self.load_node(i);
            p[k] -= l.p_kw;
            q[k] -= l.q_kvar();
        }
        for (i, g) in self.inverters.iter().enumerate() {
            let k = self.inverter_node(i);
            p[k] += g.p_kw;
            q[k] += g.q_kvar;
        }
        (p, q)
    }

    fn validate(&mut self) -> Result<(), FeederError> {
        if !(self.base_kva.is_finite() && self.base_kva > 0.0) {
            return Err(schema("base_kva", "must be a positive number"));
        }
        if !(self.base_kv.is_finite() && self.base_kv > 0.0) {
            return Err(schema("base_kv", "must be a positive number"));
        }

        let mut ids = HashSet::new();
        for (i, b) in self.buses.iter_mut().enumerate() {
            if !ids.insert(b.id.clone()) {
                return Err(schema(format!("buses[{i}].id"), format!("duplicate bus id `{}`", b.id)));
            }
            if b.phases.is_empty() {
                return Err(schema(format!("buses[{i}].phases"), "at least one phase required"));
            }
            b.phases.sort();
            let before = b.phases.len();
            b.phases.dedup();
            if b.phases.len() != before {
                return Err(schema(format!("buses[{i}].phases"), "repeated phase"));
            }
        }
        if !ids.contains(&self.slack_bus) {
            return Err(FeederError::DanglingReference {
                what: "slack".into(),
                target: format!("bus `{}`", self.slack_bus),
            });
        }

        for (s, seg) in self.segments.iter().enumerate() {
            let from = self.bus(&seg.from).ok_or_else(|| FeederError::DanglingReference {
                what: format!("segments[{s}].from"),
                target: format!("bus `{}`", seg.from),
            })?;
            let to = self.bus(&seg.to).ok_or_else(|| FeederError::DanglingReference {
                what: format!("segments[{s}].to"),
                target: format!("bus `{}`", seg.to),
            })?;
            if seg.from == seg.to {
                return Err(schema(format!("segments[{s}]"), "segment connects a bus to itself"));
            }
            for p in &to.phases {
                if !from.has_phase(*p) {
                    return Err(FeederError::DanglingReference {
                        what: format!("segments[{s}]"),
                        target: format!("phase {p} at bus `{}`", seg.from),
                    });
                }
            }
            let scale = seg
                .z
                .iter()
                .flatten()
                .map(|z| z.norm())
                .fold(0.0_f64, f64::max)
                .max(1e-12);
            for i in 0..3 {
                for j in 0..3 {
                    let z = seg.z[i][j];
                    if !(z.re.is_finite() && z.im.is_finite()) {
                        return Err(schema(format!("segments[{s}].z"), "non-finite entry"));
                    }
                    if (z - seg.z[j][i]).norm() > 1e-9 * scale {
                        return Err(schema(
                            format!("segments[{s}].z"),
                            "impedance matrix must be symmetric",
                        ));
                    }
                }
            }
        }

        let mut regulated = HashSet::new();
        for (r, reg) in self.regulators.iter().enumerate() {
            if reg.segment >= self.segments.len() {
                return Err(FeederError::DanglingReference {
                    what: format!("regulators[{r}]"),
                    target: format!("segment {}", reg.segment),
                });
            }
            if !regulated.insert(reg.segment) {
                return Err(schema(format!("regulators[{r}]"), "segment already regulated"));
            }
            for (p, t) in reg.taps.iter().enumerate() {
                if !(TAP_MIN..=TAP_MAX).contains(t) {
                    return Err(schema(
                        format!("regulators[{r}].taps[{p}]"),
                        format!("tap ratio {t} outside [{TAP_MIN}, {TAP_MAX}]"),
                    ));
                }
            }
        }

        self.check_connected()?;

        let mut entries = Vec::new();
        for b in &self.buses {
            if b.id == self.slack_bus {
                continue;
            }
            for p in &b.phases {
                entries.push((b.id.clone(), *p));
            }
        }
        let lookup = entries
            .iter()
            .enumerate()
            .map(|(k, e)| (e.clone(), k))
            .collect();
        self.index = BusPhaseIndex { entries, lookup };
        let n = self.index.len();

        self.load_at = vec![None; n];
        for (i, l) in self.loads.iter_mut().enumerate() {
            let loc = format!("loads[{i}]");
            let k = self.index.get(&l.bus, l.phase).ok_or_else(|| FeederError::DanglingReference {
                what: loc.clone(),
                target: format!("node {}.{}", l.bus, l.phase),
            })?;
            if self.load_at[k].replace(i).is_some() {
                return Err(schema(loc, format!("second load at node {}.{}", l.bus, l.phase)));
            }
            for (name, v) in [("p_kw", l.p_kw), ("p_min", l.p_min), ("p_max", l.p_max), ("pf", l.pf)] {
                if !v.is_finite() {
                    return Err(schema(format!("{loc}.{name}"), "non-finite value"));
                }
            }
            // Demand never turns into generation.
            l.p_min = l.p_min.max(0.0);
            if !(l.p_min <= l.p_kw && l.p_kw <= l.p_max) {
                return Err(schema(loc, "requires p_min <= p_kw <= p_max"));
            }
            if !(l.pf > 0.0 && l.pf <= 1.0) {
                return Err(schema(format!("{loc}.pf"), "power factor must be in (0, 1]"));
            }
        }

        self.inverter_at = vec![None; n];
        for (i, g) in self.inverters.iter().enumerate() {
            let loc = format!("inverters[{i}]");
            let k = self.index.get(&g.bus, g.phase).ok_or_else(|| FeederError::DanglingReference {
                what: loc.clone(),
                target: format!("node {}.{}", g.bus, g.phase),
            })?;
            if self.inverter_at[k].replace(i).is_some() {
                return Err(schema(loc, format!("second inverter at node {}.{}", g.bus, g.phase)));
            }
            for (name, v) in [
                ("p_kw", g.p_kw),
                ("p_min", g.p_min),
                ("p_max", g.p_max),
                ("s_kva", g.s_kva),
                ("q_kvar", g.q_kvar),
            ] {
                if !v.is_finite() {
                    return Err(schema(format!("{loc}.{name}"), "non-finite value"));
                }
            }
            if !(0.0 <= g.p_min && g.p_min <= g.p_kw && g.p_kw <= g.p_max && g.p_max <= g.s_kva) {
                return Err(schema(loc, "requires 0 <= p_min <= p_kw <= p_max <= s_kva"));
            }
            if !(g.params.pf > 0.0 && g.params.pf <= 1.0) {
                return Err(schema(format!("{loc}.mode_params.pf"), "must be in (0, 1]"));
            }
            if !(g.params.gamma >= 0.0 && g.params.gamma.is_finite()) {
                return Err(schema(format!("{loc}.mode_params.gamma"), "must be >= 0"));
            }
            if let InverterControl::ConstantPf { pf } = g.control {
                if !(pf > 0.0 && pf <= 1.0) {
                    return Err(schema(format!("{loc}.mode_params.pf"), "must be in (0, 1]"));
                }
            }
        }
        Ok(())
    }

    fn check_connected(&self) -> Result<(), FeederError> {
        let mut adj: HashMap<&str, Vec<&str>> = HashMap::new();
        for s in &self.segments {
            adj.entry(s.from.as_str()).or_default().push(s.to.as_str());
            adj.entry(s.to.as_str()).or_default().push(s.from.as_str());
        }
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([self.slack_bus.as_str()]);
        seen.insert(self.slack_bus.as_str());
        while let Some(b) = queue.pop_front() {
            for &nb in adj.get(b).map(|v| v.as_slice()).unwrap_or(&[]) {
                if seen.insert(nb) {
                    queue.push_back(nb);
                }
            }
        }
        match self.buses.iter().find(|b| !seen.contains(b.id.as_str())) {
            Some(b) => Err(FeederError::Disconnected(b.id.clone())),
            None => Ok(()),
        }
    }

    /// Serializes to the on-disk schema.
    pub fn to_file(&self) -> FeederFile {
        FeederFile {
            buses: self
                .buses
                .iter()
                .map(|b| BusRecord {
                    id: b.id.clone(),
                    phases: b.phases.iter().map(|p| p.to_string()).collect(),
                })
                .collect(),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentRecord {
                    from: s.from.clone(),
                    to: s.to.clone(),
                    z: s.z.iter().flatten().map(|z| [z.re, z.im]).collect(),
                })
                .collect(),
            regulators: self
                .regulators
                .iter()
                .map(|r| RegulatorRecord {
                    segment: r.segment,
                    taps: r.taps,
                })
                .collect(),
            slack: self.slack_bus.clone(),
            base_kva: self.base_kva,
            base_kv: self.base_kv,
            loads: self
                .loads
                .iter()
                .map(|l| LoadRecord {
                    bus: l.bus.clone(),
                    phase: l.phase,
                    p_kw: l.p_kw,
                    p_min: l.p_min,
                    p_max: l.p_max,
                    pf: l.pf,
                })
                .collect(),
            inverters: self
                .inverters
                .iter()
                .map(|g| InverterRecord {
                    bus: g.bus.clone(),
                    phase: g.phase,
                    p_kw: g.p_kw,
                    p_min: g.p_min,
                    p_max: g.p_max,
                    s_kva: g.s_kva,
                    q_kvar: g.q_kvar,
                    mode: g.control.kind(),
                    mode_params: Some(ModeParamsRecord {
                        pf: Some(match g.control {
                            InverterControl::ConstantPf { pf } => pf,
                            _ => g.params.pf,
                        }),
                        gamma: Some(match g.control {
                            InverterControl::ConstantQ { gamma } => gamma,
                            _ => g.params.gamma,
                        }),
                    }),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("feeder serializes")
    }
}

/// On-disk feeder document.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FeederFile {
    pub buses: Vec<BusRecord>,
    pub segments: Vec<SegmentRecord>,
    #[serde(default)]
    pub regulators: Vec<RegulatorRecord>,
    pub slack: String,
    pub base_kva: f64,
    pub base_kv: f64,
    #[serde(default)]
    pub loads: Vec<LoadRecord>,
    #[serde(default)]
    pub inverters: Vec<InverterRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BusRecord {
    pub id: String,
    /// Phase letters, e.g. `["a", "b", "c"]` or `["b"]`.
    pub phases: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SegmentRecord {
    pub from: String,
    pub to: String,
    /// Row-major 3x3 impedance matrix as nine `[re, im]` pairs, ohms.
    pub z: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegulatorRecord {
    pub segment: usize,
    pub taps: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LoadRecord {
    pub bus: String,
    pub phase: Phase,
    pub p_kw: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub pf: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModeParamsRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InverterRecord {
    pub bus: String,
    pub phase: Phase,
    pub p_kw: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub s_kva: f64,
    #[serde(default)]
    pub q_kvar: f64,
    pub mode: ModeKind,
    #[serde(default)]
    pub mode_params: Option<ModeParamsRecord>,
}

impl FeederFile {
    pub fn into_model(self) -> Result<FeederModel, FeederError> {
        let mut buses = Vec::with_capacity(self.buses.len());
        for (i, b) in self.buses.into_iter().enumerate() {
            let mut phases = Vec::new();
            for (j, s) in b.phases.iter().enumerate() {
                let mut chars = s.chars();
                let phase = match (chars.next(), chars.next()) {
                    (Some(c), None) => Phase::from_char(c),
                    _ => None,
                }
                .ok_or_else(|| schema(format!("buses[{i}].phases[{j}]"), format!("unknown phase `{s}`")))?;
                phases.push(phase);
            }
            buses.push(Bus { id: b.id, phases });
        }
        let mut segments = Vec::with_capacity(self.segments.len());
        for (s, rec) in self.segments.into_iter().enumerate() {
            if rec.z.len() != 9 {
                return Err(schema(
                    format!("segments[{s}].z"),
                    format!("expected 9 [re, im] pairs, found {}", rec.z.len()),
                ));
            }
            let mut z = [[Complex64::new(0.0, 0.0); 3]; 3];
            for (e, [re, im]) in rec.z.iter().enumerate() {
                z[e / 3][e % 3] = Complex64::new(*re, *im);
            }
            segments.push(Segment {
                from: rec.from,
                to: rec.to,
                z,
            });
        }
        let regulators = self
            .regulators
            .into_iter()
            .map(|r| Regulator {
                segment: r.segment,
                taps: r.taps,
            })
            .collect();
        let loads = self
            .loads
            .into_iter()
            .map(|l| LoadSpec {
                bus: l.bus,
                phase: l.phase,
                p_kw: l.p_kw,
                p_min: l.p_min,
                p_max: l.p_max,
                pf: l.pf,
            })
            .collect();
        let inverters = self
            .inverters
            .into_iter()
            .map(|g| {
                let rec = g.mode_params.unwrap_or(ModeParamsRecord {
                    pf: None,
                    gamma: None,
                });
                let params = ModeParams {
                    pf: rec.pf.unwrap_or(DEFAULT_INVERTER_PF),
                    gamma: rec.gamma.unwrap_or(DEFAULT_INVERTER_GAMMA),
                };
                let spec = InverterSpec {
                    bus: g.bus,
                    phase: g.phase,
                    p_kw: g.p_kw,
                    p_min: g.p_min,
                    p_max: g.p_max,
                    s_kva: g.s_kva,
                    q_kvar: g.q_kvar,
                    control: InverterControl::VoltVar,
                    params,
                };
                spec.with_mode(g.mode)
            })
            .collect();
        FeederModel::new(
            buses,
            segments,
            regulators,
            self.slack,
            self.base_kva,
            self.base_kv,
            loads,
            inverters,
        )
    }
}

/// Parses a feeder document from a string.
pub fn parse_feeder(text: &str) -> Result<FeederModel, FeederError> {
    let file: FeederFile = serde_json::from_str(text).map_err(|e| {
        schema(format!("line {}, column {}", e.line(), e.column()), e.to_string())
    })?;
    file.into_model()
}

/// Reads and validates a feeder file.
pub fn load_feeder(path: impl AsRef<Path>) -> Result<FeederModel, FeederError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| FeederError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_feeder(&text)
}

/// The node index of a validated model.
pub fn index_nodes(model: &FeederModel) -> BusPhaseIndex {
    model.index().clone()
}

/// Per-bus grouping of node indices, used by reports.
pub fn nodes_by_bus(model: &FeederModel) -> BTreeMap<String, Vec<usize>> {
    let mut out: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (k, b, _) in model.index().iter() {
        out.entry(b.to_string()).or_default().push(k);
    }
    out
}

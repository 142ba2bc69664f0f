//! Three-phase bus admittance matrix.
//!
//! Rows are ordered slack phases first, then the non-slack nodes in
//! [`BusPhaseIndex`](crate::feeder::BusPhaseIndex) order. All entries are
//! per unit on the feeder base.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::feeder::{FeederError, FeederModel, Phase};

#[derive(Debug, Clone)]
pub struct Ybus {
    pub y: DMatrix<Complex64>,
    pub slack_phases: Vec<Phase>,
}

impl Ybus {
    pub fn n_slack(&self) -> usize {
        self.slack_phases.len()
    }

    /// Total dimension including slack phases.
    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    /// Non-slack block `Y_LL`.
    pub fn y_ll(&self) -> DMatrix<Complex64> {
        let s = self.n_slack();
        let n = self.dim() - s;
        self.y.view((s, s), (n, n)).into_owned()
    }

    /// Coupling block `Y_L0` (non-slack rows, slack columns).
    pub fn y_l0(&self) -> DMatrix<Complex64> {
        let s = self.n_slack();
        let n = self.dim() - s;
        self.y.view((s, 0), (n, s)).into_owned()
    }
}

/// Global row of (bus, phase) in the admittance matrix.
pub fn global_row(model: &FeederModel, bus: &str, phase: Phase) -> Option<usize> {
    let slack = model.slack();
    if bus == slack.id {
        return slack.phases.iter().position(|p| *p == phase);
    }
    model.index().get(bus, phase).map(|k| k + slack.phases.len())
}

/// Per-phase tap ratios of the regulator on `segment`, 1.0 when unregulated.
pub fn segment_taps(model: &FeederModel, segment: usize) -> [f64; 3] {
    model
        .regulators
        .iter()
        .find(|r| r.segment == segment)
        .map(|r| r.taps)
        .unwrap_or([1.0; 3])
}

/// Series admittance (per unit) of a segment restricted to the receiving
/// bus phases.
pub fn segment_admittance(model: &FeederModel, s: usize) -> Result<(Vec<Phase>, DMatrix<Complex64>), FeederError> {
    let seg = &model.segments[s];
    let phases = model.bus(&seg.to).expect("validated").phases.clone();
    let zb = model.z_base();
    let m = phases.len();
    let z = DMatrix::from_fn(m, m, |i, j| seg.z[phases[i].offset()][phases[j].offset()] / zb);
    let y = z.try_inverse().ok_or(FeederError::SingularImpedance(s))?;
    if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(FeederError::SingularImpedance(s));
    }
    Ok((phases, y))
}

/// Assembles the full admittance matrix. Regulators are ideal transformers
/// with ratio `t` at the sending end, giving blocks `T Y T`, `-T Y`, `-Y T`, `Y`.
pub fn assemble_ybus(model: &FeederModel) -> Result<Ybus, FeederError> {
    let slack_phases = model.slack().phases.clone();
    let dim = slack_phases.len() + model.n();
    let mut y = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));

    for (s, seg) in model.segments.iter().enumerate() {
        let (phases, ys) = segment_admittance(model, s)?;
        let taps = segment_taps(model, s);
        let rows_f: Vec<usize> = phases
            .iter()
            .map(|p| global_row(model, &seg.from, *p).expect("validated"))
            .collect();
        let rows_t: Vec<usize> = phases
            .iter()
            .map(|p| global_row(model, &seg.to, *p).expect("validated"))
            .collect();
        for (i, pi) in phases.iter().enumerate() {
            let ti = taps[pi.offset()];
            for (j, pj) in phases.iter().enumerate() {
                let tj = taps[pj.offset()];
                let yij = ys[(i, j)];
                y[(rows_f[i], rows_f[j])] += yij * ti * tj;
                y[(rows_f[i], rows_t[j])] -= yij * ti;
                y[(rows_t[i], rows_f[j])] -= yij * tj;
                y[(rows_t[i], rows_t[j])] += yij;
            }
        }
    }
    Ok(Ybus { y, slack_phases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::parse_feeder;

    fn feeder(segments: &str, buses: &str, regs: &str) -> FeederModel {
        parse_feeder(&format!(
            r#"{{"buses": [{buses}], "segments": [{segments}], "regulators": [{regs}],
                "slack": "s", "base_kva": 1000.0, "base_kv": 1.0}}"#
        ))
        .unwrap()
    }

    const Z: &str = r#"[[0.3,0.6],[0.1,0.2],[0.05,0.1],[0.1,0.2],[0.3,0.6],[0.1,0.2],[0.05,0.1],[0.1,0.2],[0.3,0.6]]"#;
    const ABC: &str = r#"["a","b","c"]"#;

    #[test]
    fn single_segment_off_diagonal_is_minus_inverse() {
        let m = feeder(
            &format!(r#"{{"from":"s","to":"x","z":{Z}}}"#),
            &format!(r#"{{"id":"s","phases":{ABC}}},{{"id":"x","phases":{ABC}}}"#),
            "",
        );
        let yb = assemble_ybus(&m).unwrap();
        let (_, ys) = segment_admittance(&m, 0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((yb.y[(i, 3 + j)] + ys[(i, j)]).norm() < 1e-12);
            }
            // Shunt-free line: row sums vanish.
            let sum: Complex64 = (0..6).map(|j| yb.y[(i, j)]).sum();
            assert!(sum.norm() < 1e-9);
        }
    }

    #[test]
    fn parallel_segments_double_the_block() {
        let seg = format!(r#"{{"from":"s","to":"x","z":{Z}}}"#);
        let buses = format!(r#"{{"id":"s","phases":{ABC}}},{{"id":"x","phases":{ABC}}}"#);
        let one = assemble_ybus(&feeder(&seg, &buses, "")).unwrap();
        let two = assemble_ybus(&feeder(&format!("{seg},{seg}"), &buses, "")).unwrap();
        assert!((two.y.clone() - one.y.clone() * Complex64::new(2.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn regulated_ybus_is_symmetric_and_maps_no_load_voltage() {
        let m = feeder(
            &format!(r#"{{"from":"s","to":"x","z":{Z}}},{{"from":"x","to":"y","z":{Z}}}"#),
            &format!(
                r#"{{"id":"s","phases":{ABC}}},{{"id":"x","phases":{ABC}}},{{"id":"y","phases":["a","c"]}}"#
            ),
            r#"{"segment":0,"taps":[1.05,1.0,0.95]}"#,
        );
        let yb = assemble_ybus(&m).unwrap();
        assert!((yb.y.clone() - yb.y.transpose()).norm() < 1e-9);
        // No-load voltages are the tapped slack voltages.
        let v0 = nalgebra::DVector::from_vec(vec![Complex64::new(1.0, 0.0); 3]);
        let w = -yb.y_ll().try_inverse().unwrap() * yb.y_l0() * v0;
        let expect = [1.05, 1.0, 0.95, 1.05, 0.95];
        for (k, e) in expect.iter().enumerate() {
            assert!((w[k] - Complex64::new(*e, 0.0)).norm() < 1e-9, "node {k}: {}", w[k]);
        }
    }
}

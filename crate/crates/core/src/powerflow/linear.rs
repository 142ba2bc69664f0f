use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use super::{OperatingPoint, PfError};
use crate::feeder::FeederModel;
use crate::ybus::assemble_ybus;

/// Fixed-point linear model `V = Z1 + Z2 (P - jQ)` with `P`, `Q` in p.u.
#[derive(Debug, Clone)]
pub struct LinearPfModel {
    pub z1: Vec<Complex64>,
    pub z2: DMatrix<Complex64>,
    pub anchor: OperatingPoint,
    pub base_kva: f64,
}

impl LinearPfModel {
    pub fn n(&self) -> usize {
        self.z1.len()
    }

    /// Sensitivities of `(v_d, v_q)` at node `k` to active power at node `j`, per kW.
    pub fn dp(&self, k: usize, j: usize) -> (f64, f64) {
        let z = self.z2[(k, j)] / self.base_kva;
        (z.re, z.im)
    }

    /// Sensitivities of `(v_d, v_q)` at node `k` to reactive power at node `j`, per kvar.
    pub fn dq(&self, k: usize, j: usize) -> (f64, f64) {
        let z = self.z2[(k, j)] / self.base_kva;
        (z.im, -z.re)
    }

    /// Z1 and Z2 as plain nested arrays, for debugging dumps.
    pub fn dump_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            base_kva: f64,
            z1: Vec<[f64; 2]>,
            z2: Vec<Vec<[f64; 2]>>,
            anchor_v: &'a [Complex64],
        }
        let n = self.n();
        let dump = Dump {
            base_kva: self.base_kva,
            z1: self.z1.iter().map(|z| [z.re, z.im]).collect(),
            z2: (0..n).map(|r| (0..n).map(|c| [self.z2[(r, c)].re, self.z2[(r, c)].im]).collect()).collect(),
            anchor_v: &self.anchor.v,
        };
        serde_json::to_string_pretty(&dump).expect("plain data")
    }
}

/// Builds the fixed-point model at `op`.
///
/// With `w = -Y_LL^-1 Y_L0 V0` (the no-load voltage) and the anchor voltages
/// `V^`, `Z1 = w` and `Z2 = Y_LL^-1 diag(1 / conj(V^))`. Substituting the
/// anchor injections reproduces the anchor because `conj(I) = S / V` there.
pub fn build_fixed_point_model(model: &FeederModel, op: &OperatingPoint) -> Result<LinearPfModel, PfError> {
    let n = model.n();
    if op.v.len() != n {
        return Err(PfError::DimensionMismatch { expected: n, found: op.v.len() });
    }
    if let Some(k) = op.v.iter().position(|v| v.norm() == 0.0) {
        return Err(PfError::ZeroMagnitude(k));
    }
    let yb = assemble_ybus(model)?;
    let lu = yb.y_ll().lu();
    let v0 = DVector::from_vec(op.v_slack.clone());
    let w = lu.solve(&(-yb.y_l0() * v0)).ok_or(PfError::SingularAdmittance)?;
    let scale = DMatrix::from_diagonal(&DVector::from_iterator(n, op.v.iter().map(|v| Complex64::new(1.0, 0.0) / v.conj())));
    let z2 = lu.solve(&scale).ok_or(PfError::SingularAdmittance)?;
    if z2.iter().chain(w.iter()).any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(PfError::SingularAdmittance);
    }
    Ok(LinearPfModel { z1: w.iter().copied().collect(), z2, anchor: op.clone(), base_kva: model.base_kva })
}

/// Evaluates the linear model at injections given in kW / kvar.
pub fn evaluate_linear_voltages(lpf: &LinearPfModel, p_kw: &[f64], q_kvar: &[f64]) -> Result<(Vec<f64>, Vec<f64>), PfError> {
    let n = lpf.n();
    for len in [p_kw.len(), q_kvar.len()] {
        if len != n {
            return Err(PfError::DimensionMismatch { expected: n, found: len });
        }
    }
    let s = DVector::from_iterator(n, (0..n).map(|k| Complex64::new(p_kw[k], -q_kvar[k]) / lpf.base_kva));
    let v = &lpf.z2 * s;
    let vd = (0..n).map(|k| lpf.z1[k].re + v[k].re).collect();
    let vq = (0..n).map(|k| lpf.z1[k].im + v[k].im).collect();
    Ok((vd, vq))
}

/// First-order magnitude expansion around the anchor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MagnitudeTaylor {
    pub vd: Vec<f64>,
    pub vq: Vec<f64>,
    pub mag: Vec<f64>,
}

impl MagnitudeTaylor {
    /// Coefficients `(c_d, c_q)` with `m = c_d x_d + c_q x_q`.
    ///
    /// `|v|^2 + 2 v_d x_d + 2 v_q x_q = |v|^2 + 2 |v| m`, divided by `2|v|`
    /// after the anchor terms cancel.
    pub fn row(&self, k: usize) -> (f64, f64) {
        (self.vd[k] / self.mag[k], self.vq[k] / self.mag[k])
    }

    pub fn magnitude(&self, k: usize, xd: f64, xq: f64) -> f64 {
        let (cd, cq) = self.row(k);
        cd * xd + cq * xq
    }
}

pub fn magnitude_taylor(op: &OperatingPoint) -> Result<MagnitudeTaylor, PfError> {
    let mut t = MagnitudeTaylor { vd: Vec::new(), vq: Vec::new(), mag: Vec::new() };
    for (k, v) in op.v.iter().enumerate() {
        let m = v.norm();
        if m == 0.0 || !m.is_finite() {
            return Err(PfError::ZeroMagnitude(k));
        }
        t.vd.push(v.re);
        t.vq.push(v.im);
        t.mag.push(m);
    }
    Ok(t)
}

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::PfError;
use crate::feeder::FeederModel;
use crate::ybus::{assemble_ybus, Ybus};

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Max absolute power mismatch, p.u.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-8, max_iter: 50 }
    }
}

/// Solved network state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Non-slack node voltages, p.u.
    pub v: Vec<Complex64>,
    pub v_slack: Vec<Complex64>,
    /// Specified injections per node, kW / kvar.
    pub p_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
    /// Substation injection per slack phase, kW / kvar.
    pub p_sub_kw: Vec<f64>,
    pub q_sub_kvar: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl OperatingPoint {
    pub fn magnitudes(&self) -> Vec<f64> {
        self.v.iter().map(|v| v.norm()).collect()
    }
}

/// Balanced unit phasors for the slack phases.
pub fn slack_voltages(model: &FeederModel) -> Vec<Complex64> {
    model
        .slack()
        .phases
        .iter()
        .map(|p| Complex64::from_polar(1.0, p.angle_deg().to_radians()))
        .collect()
}

/// Newton solver in rectangular coordinates with the admittance data cached,
/// so repeated solves on one feeder do not reassemble anything.
#[derive(Debug, Clone)]
pub struct NetworkSolver {
    y_ll: DMatrix<Complex64>,
    y_l0: DMatrix<Complex64>,
    y_00: DMatrix<Complex64>,
    y_0l: DMatrix<Complex64>,
    v0: DVector<Complex64>,
    flat: Vec<Complex64>,
    base_kva: f64,
}

impl NetworkSolver {
    pub fn new(model: &FeederModel) -> Result<NetworkSolver, PfError> {
        let yb: Ybus = assemble_ybus(model)?;
        let s = yb.n_slack();
        let n = model.n();
        let v0 = DVector::from_vec(slack_voltages(model));
        let flat = model
            .index()
            .iter()
            .map(|(_, _, p)| Complex64::from_polar(1.0, p.angle_deg().to_radians()))
            .collect();
        Ok(NetworkSolver {
            y_ll: yb.y_ll(),
            y_l0: yb.y_l0(),
            y_00: yb.y.view((0, 0), (s, s)).into_owned(),
            y_0l: yb.y.view((0, s), (s, n)).into_owned(),
            v0,
            flat,
            base_kva: model.base_kva,
        })
    }

    pub fn n(&self) -> usize {
        self.y_ll.nrows()
    }

    fn mismatch(&self, v: &DVector<Complex64>, s_spec: &[Complex64]) -> (DVector<Complex64>, Vec<f64>) {
        let current = &self.y_ll * v + &self.y_l0 * &self.v0;
        let f = (0..v.len())
            .flat_map(|k| {
                let s = v[k] * current[k].conj() - s_spec[k];
                [s.re, s.im]
            })
            .collect::<Vec<_>>();
        (current, f)
    }

    pub fn solve(
        &self,
        p_kw: &[f64],
        q_kvar: &[f64],
        initial: Option<&[Complex64]>,
        opts: NewtonOptions,
    ) -> Result<OperatingPoint, PfError> {
        let n = self.n();
        for (len, expected) in [(p_kw.len(), n), (q_kvar.len(), n)] {
            if len != expected {
                return Err(PfError::DimensionMismatch { expected, found: len });
            }
        }
        if let Some(init) = initial {
            if init.len() != n {
                return Err(PfError::DimensionMismatch { expected: n, found: init.len() });
            }
        }
        let s_spec: Vec<Complex64> = (0..n)
            .map(|k| {
                if !(p_kw[k].is_finite() && q_kvar[k].is_finite()) {
                    return Err(PfError::NonFiniteInjection(k));
                }
                Ok(Complex64::new(p_kw[k], q_kvar[k]) / self.base_kva)
            })
            .collect::<Result<_, _>>()?;

        let mut v = DVector::from_vec(initial.map(|v| v.to_vec()).unwrap_or_else(|| self.flat.clone()));
        let mut iterations = 0;
        let mut polished = false;
        loop {
            let (current, f) = self.mismatch(&v, &s_spec);
            let residual = f.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            if !residual.is_finite() {
                return Err(PfError::NonConvergence { iterations, residual });
            }
            if residual < opts.tol {
                // One extra step once inside the basin keeps the anchor exact
                // far below the stopping tolerance.
                if polished || residual < 1e-12 {
                    return Ok(self.finish(v, p_kw, q_kvar, iterations, residual));
                }
                polished = true;
            }
            if iterations >= opts.max_iter {
                return Err(PfError::NonConvergence { iterations, residual });
            }
            iterations += 1;

            // dS = diag(conj I) dV + diag(V) conj(Y) conj(dV), split into
            // real and imaginary parts of dV.
            let mut jac = DMatrix::<f64>::zeros(2 * n, 2 * n);
            for r in 0..n {
                for c in 0..n {
                    let t = v[r] * self.y_ll[(r, c)].conj();
                    let mut dd = t;
                    let mut dq = -Complex64::i() * t;
                    if r == c {
                        dd += current[r].conj();
                        dq += Complex64::i() * current[r].conj();
                    }
                    jac[(2 * r, 2 * c)] = dd.re;
                    jac[(2 * r + 1, 2 * c)] = dd.im;
                    jac[(2 * r, 2 * c + 1)] = dq.re;
                    jac[(2 * r + 1, 2 * c + 1)] = dq.im;
                }
            }
            let rhs = -DVector::from_vec(f);
            let step = jac.lu().solve(&rhs).ok_or(PfError::SingularJacobian(iterations))?;
            for k in 0..n {
                v[k] += Complex64::new(step[2 * k], step[2 * k + 1]);
            }
        }
    }

    fn finish(&self, v: DVector<Complex64>, p_kw: &[f64], q_kvar: &[f64], iterations: usize, residual: f64) -> OperatingPoint {
        let i0 = &self.y_00 * &self.v0 + &self.y_0l * &v;
        let s0: Vec<Complex64> = (0..self.v0.len()).map(|k| self.v0[k] * i0[k].conj() * self.base_kva).collect();
        OperatingPoint {
            v: v.iter().copied().collect(),
            v_slack: self.v0.iter().copied().collect(),
            p_kw: p_kw.to_vec(),
            q_kvar: q_kvar.to_vec(),
            p_sub_kw: s0.iter().map(|s| s.re).collect(),
            q_sub_kvar: s0.iter().map(|s| s.im).collect(),
            iterations,
            residual,
        }
    }
}

/// Solves the nonlinear power flow from a flat start.
pub fn solve_nonlinear_pf(model: &FeederModel, p_kw: &[f64], q_kvar: &[f64]) -> Result<OperatingPoint, PfError> {
    NetworkSolver::new(model)?.solve(p_kw, q_kvar, None, NewtonOptions::default())
}

/// Solves with explicit options and an optional warm start.
pub fn solve_nonlinear_pf_with(
    model: &FeederModel,
    p_kw: &[f64],
    q_kvar: &[f64],
    initial: Option<&[Complex64]>,
    opts: NewtonOptions,
) -> Result<OperatingPoint, PfError> {
    NetworkSolver::new(model)?.solve(p_kw, q_kvar, initial, opts)
}

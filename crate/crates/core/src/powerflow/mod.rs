//! Nonlinear three-phase power flow and the fixed-point linear voltage model
//! anchored at a solved operating point.

mod linear;
mod newton;

pub use linear::{build_fixed_point_model, evaluate_linear_voltages, magnitude_taylor, LinearPfModel, MagnitudeTaylor};
pub use newton::{slack_voltages, solve_nonlinear_pf, solve_nonlinear_pf_with, NetworkSolver, NewtonOptions, OperatingPoint};

use thiserror::Error;

use crate::feeder::FeederError;

#[derive(Debug, Error)]
pub enum PfError {
    #[error(transparent)]
    Feeder(#[from] FeederError),
    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e} p.u.)")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian at Newton iteration {0}")]
    SingularJacobian(usize),
    #[error("singular reduced admittance matrix")]
    SingularAdmittance,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("zero voltage magnitude at node {0}")]
    ZeroMagnitude(usize),
    #[error("non-finite injection at node {0}")]
    NonFiniteInjection(usize),
}

//! Linear programming with dual certificates, McCormick relaxation and
//! spatial branch-and-bound for bilinear rows.

mod bnb;
mod mccormick;
mod model;
mod simplex;

pub use bnb::{
    fix_and_solve, spatial_branch_and_bound, spatial_branch_and_bound_with, BnbOptions, BnbResult, BnbStatus,
    IncumbentHeuristic, INCUMBENT_TOL,
};
pub use mccormick::{mccormick_relax, BilinearProgram, BilinearTerm, Relaxation};
pub use model::{LinearProgram, Relation, Row, Sense, Variable};
pub use simplex::{solve_lp, solve_lp_with, verify_strong_duality, DualCertificate, LpStatus, PivotRule};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed program: {0}")]
    Malformed(String),
    #[error("simplex iteration limit reached after {iterations} pivots")]
    CyclingGuard { iterations: usize },
    #[error("numeric breakdown: {0}")]
    NumericBreakdown(String),
    #[error("variable {var} ({name}) appears in a product but has an unbounded box")]
    UnboundedBox { var: usize, name: String },
}

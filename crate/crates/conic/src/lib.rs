//! Standard-form cone programs over nonnegative, second-order, and rotated
//! second-order cones, together with an embedded primal-dual interior-point
//! solver (homogeneous self-dual embedding, Nesterov-Todd scaling, dense
//! normal-equation KKT solves).
//!
//! A [`ConicProgram`] is a linear objective (maximize convention) over affine
//! maps constrained to cones:
//!
//! ```text
//!   maximize   g' x + g0
//!   subject to A_j x + b_j in K_j      for every block j
//! ```
//!
//! Programs are self-describing: [`residuals`] evaluates any claimed point
//! against every block with no external context, and [`textio`] round-trips
//! programs through a plain-text conic format for offline cross-checking.

mod expr;
mod program;
mod solver;
pub mod textio;

pub use expr::{LinExpr, VarId};
pub use program::{
    residuals, BlockResidual, Cone, ConicProgram, ConstraintBlock, ProgramBuilder,
};
pub use solver::{solve, SolveResult, SolveStatus, SolverSettings};

#[derive(Debug, thiserror::Error)]
pub enum ConicError {
    #[error("block `{label}` has {got} rows but cone {cone:?} needs {want}")]
    BlockDimension {
        label: String,
        cone: Cone,
        got: usize,
        want: usize,
    },
    #[error("expression references variable {var} but program has {num_vars} variables")]
    VariableOutOfRange { var: usize, num_vars: usize },
    #[error("point has length {got}, program has {want} variables")]
    PointLength { got: usize, want: usize },
    #[error("cone of dimension {0} is not representable")]
    BadConeDimension(usize),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

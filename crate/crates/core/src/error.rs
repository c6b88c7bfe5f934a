use thiserror::Error;

use crate::lp::LpError;
use crate::matrix::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(ValidationReport),

    #[error("separator action occurs in trace {0}")]
    SeparatorClash(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("scheduler domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("prior is not aligned with channel: {0}")]
    Misalignment(String),

    #[error("interleaving enumeration needs {required} merges, above the ceiling of {ceiling}")]
    SizeGuard { required: u128, ceiling: u64 },

    #[error("scheduler puts mass {mass} on {trace}, which is not an interleaving of row {row}")]
    InfeasibleSupport {
        row: usize,
        trace: String,
        mass: f64,
    },

    #[error("scheduler row {row} sums to {sum}")]
    RowSum { row: usize, sum: f64 },

    #[error("Blahut-Arimoto did not converge: gap {gap:e} after {iterations} iterations")]
    NonConvergence { gap: f64, iterations: usize },

    #[error(transparent)]
    Solver(#[from] LpError),

    #[error("syntax error: {0}")]
    Syntax(String),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

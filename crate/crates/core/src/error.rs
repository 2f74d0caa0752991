use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid group layout: {0}")]
    InvalidLayout(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("{what} = {value} outside allowed range {lo}..={hi}")]
    BudgetOutOfRange {
        what: &'static str,
        value: usize,
        lo: usize,
        hi: usize,
    },

    #[error("enumeration over {groups} groups exceeds guard of {guard}")]
    GuardExceeded { groups: usize, guard: usize },

    #[error("support cannot be covered by the available groups")]
    Uncoverable,

    #[error("groups overlap; exact disjoint projection requires a partition")]
    OverlappingGroups,

    #[error("layout does not cover every coordinate (set allow_partial_cover to override)")]
    PartialCover,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("infeasible specification: {0}")]
    InfeasibleSpec(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("design matrix is zero; no valid step size")]
    ZeroMatrix,

    #[error("non-finite {quantity} at iteration {iteration}; step size is likely too large")]
    Divergence {
        iteration: usize,
        quantity: &'static str,
    },

    #[error("restricted normal equations are singular even with ridge {ridge:e}")]
    SingularSystem { ridge: f64 },

    #[error("objective does not support {0}")]
    Unsupported(&'static str),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

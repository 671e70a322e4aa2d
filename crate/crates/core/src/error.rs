use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("argument outside the admissible domain: {0}")]
    Domain(String),

    #[error(
        "grid does not cover the required range on axis {axis}: need [{need_lo}, {need_hi}], grid spans [{grid_lo}, {grid_hi}]"
    )]
    Coverage {
        axis: usize,
        need_lo: f64,
        need_hi: f64,
        grid_lo: f64,
        grid_hi: f64,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("{op} is not supported in dimension {dim}")]
    UnsupportedDimension { op: &'static str, dim: usize },

    #[error("no convergence after {iterations} iterations (last ratio {last:?})")]
    NonConvergence {
        iterations: usize,
        last: Option<f64>,
        trace: Vec<f64>,
    },

    #[error("evaluation infeasible: {0}")]
    Feasibility(String),

    #[error("no sample satisfied the constraint ({} samples observed)", .observed.len())]
    NoConstrainedSamples { observed: Vec<f64> },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line driver, one per error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 3,
            Error::Io(_) => 5,
            Error::Format(_) => 5,
            _ => 4,
        }
    }
}

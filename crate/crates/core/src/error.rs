use thiserror::Error;

pub type Result<T> = std::result::Result<T, OksirError>;

#[derive(Debug, Error)]
pub enum OksirError {
    /// Malformed or inconsistent caller input (dimensions, non-finite values, bad options).
    #[error("input error: {0}")]
    Input(String),

    /// Operation not valid for the current model state (empty dictionary, still warming up, ...).
    #[error("state error: {0}")]
    State(String),

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    /// The ALD residual came out negative beyond rounding, or non-positive where a strictly
    /// positive value is required: the reduced Gram matrix is numerically singular.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    /// The stochastic eigen-update blew up even after repeatedly halving the step size.
    #[error("eigen-update diverged: {0}")]
    Divergence(String),

    #[error("eigen-solver failure: {0}")]
    EigenSolver(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error("data error at line {line}: {message}")]
    Data { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl OksirError {
    pub fn input(msg: impl Into<String>) -> Self {
        OksirError::Input(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        OksirError::State(msg.into())
    }

    /// Process exit code for the command-line tool: 2 for data problems, 3 for numeric ones.
    pub fn exit_code(&self) -> i32 {
        match self {
            OksirError::NumericalDegeneracy(_)
            | OksirError::Divergence(_)
            | OksirError::EigenSolver(_)
            | OksirError::UndefinedMetric(_)
            | OksirError::InvalidKernel(_) => 3,
            OksirError::Input(_)
            | OksirError::State(_)
            | OksirError::Format(_)
            | OksirError::Data { .. }
            | OksirError::Io(_) => 2,
        }
    }
}

pub(crate) fn check_dims(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(OksirError::Input(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}

use alloc::string::String;

/// Everything that can go wrong in the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("requested an empty sequence")]
    EmptyRequest,
    #[error("invalid range: low {low} must be below high {high}")]
    InvalidRange { low: f64, high: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("simulation diverged at step {step} (|y| = {value:e})")]
    Divergence { step: usize, value: f64 },
    #[error("insufficient data: {len} samples cannot support lag {lag}")]
    InsufficientData { len: usize, lag: usize },
    #[error("column {column} is constant and cannot be standardized")]
    DegenerateFeature { column: usize },
    #[error("target sequence is constant and cannot be standardized")]
    DegenerateTarget,
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("forward trace does not match the network it is used with")]
    StaleTrace,
    #[error("index {index} out of range for {len} samples")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("design matrix is singular or ill-conditioned")]
    Singular,
    #[error("training diverged at epoch {epoch}, step {step}")]
    TrainingFailure { epoch: usize, step: usize },
    #[error("test set was not standardized with the model's training statistics")]
    StatsMismatch,
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            found,
        })
    }
}

use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: &'static str },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("could not place obstacles after {attempts} attempts")]
    PlacementInfeasible { attempts: usize },
    #[error("scene has no obstacles")]
    EmptyScene,
    #[error("no valid configuration after {attempts} attempts")]
    SamplingExhausted { attempts: usize },
    #[error("no plan found within budget ({iterations} iterations, {seconds:.3} s)")]
    NoPlanFound { iterations: usize, seconds: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("configuration mismatch: {what} expected {expected}, got {got}")]
    ConfigMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}

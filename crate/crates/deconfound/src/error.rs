use thiserror::Error;

/// Errors surfaced by the library. CLI maps `Config`/`InvalidParameter` to
/// exit code 2 and the numerical failures to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("cycle detected in graph")]
    CycleDetected,

    #[error("degenerate variance at node {node}: {value:e} below threshold")]
    DegenerateVariance { node: usize, value: f64 },

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("eigendecomposition failure: {0}")]
    EigenFailure(String),

    #[error("factorization failure after jitter escalation (max jitter {max_jitter:e})")]
    FactorizationFailure { max_jitter: f64 },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("non-finite gradient at iteration {iter}")]
    NonFiniteGradient { iter: usize },

    #[error("empty column set")]
    EmptyColumnSet,

    #[error("singular conditioning: conditional variance {value:e} not positive")]
    SingularConditioning { value: f64 },

    #[error("insufficient candidates: requested {requested}, pool has {available}")]
    InsufficientCandidates { requested: usize, available: usize },

    #[error("no eligible target node for task")]
    NoEligibleTarget,

    #[error("perturbation failure: could not preserve acyclicity after {retries} retries")]
    PerturbationFailure { retries: usize },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    /// Stable process exit code for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) | Error::Config { .. } | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

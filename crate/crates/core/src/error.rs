use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid question: {0}")]
    InvalidQuestion(String),

    #[error("invalid answer: {0}")]
    InvalidAnswer(String),

    #[error("knowledge-transfer prompt needs a previous answer (step 0 uses the raw question)")]
    MissingPreviousAnswer,

    #[error("state has no answer yet")]
    MissingAnswer,

    #[error("question `{0}` has no reference answer")]
    MissingReference(String),

    #[error("question `{0}` lacks topic/difficulty required by synthetic experts")]
    MissingSyntheticFields(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("expert index {index} out of range for pool of {pool_size}")]
    UnknownExpert { index: usize, pool_size: usize },

    #[error("reward arguments inconsistent: {0}")]
    RewardArgs(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("pool size mismatch: checkpoint expects N={expected}, pool has N={found}")]
    PoolMismatch { expected: usize, found: usize },

    #[error("terminator training set must contain both labels")]
    SingleClass,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("oracle requires a deterministic synthetic pool (noise_sigma = 0, no remote experts)")]
    StochasticPool,

    #[error("route enumeration too large: {routes} routes exceed guard of {limit}")]
    EnumerationGuard { routes: u128, limit: u128 },

    #[error("route count overflows for N={n}, m={m}")]
    Overflow { n: usize, m: usize },

    #[error("expert `{expert}` (index {index}) failed: {source}")]
    Backend {
        expert: String,
        index: usize,
        #[source]
        source: BackendError,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

/// Failures of a remote chat-completion backend. Each case is distinguishable
/// so callers can decide whether a retry makes sense.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,

    #[error("network failure: {0}")]
    Network(String),

    #[error("HTTP status {status} from expert `{expert}`: {body}")]
    Status {
        status: u16,
        expert: String,
        body: String,
    },

    #[error("malformed response: {0}")]
    Malformed(String),

    #[error("no credentials: set RELAY_API_KEY")]
    MissingCredentials,
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Timeout | BackendError::Network(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            BackendError::Malformed(_) | BackendError::MissingCredentials => false,
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: message.to_string(),
        }
    }
}

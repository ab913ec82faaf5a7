use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every stage of the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad container magic {found:?} (expected \"FQF1\")")]
    BadMagic { found: [u8; 4] },
    #[error("truncated container: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("header/payload mismatch: {0}")]
    SizeMismatch(String),
    #[error("unsupported dtype {0:?}")]
    UnsupportedDtype(String),
    #[error("malformed header: {0}")]
    Header(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("point {point:?} is outside the grid bounds")]
    OutOfBounds { point: [f64; 3] },

    #[error("rewritten string length {len} exceeds cap {cap}")]
    RunawayGrowth { len: usize, cap: usize },
    #[error("unbalanced brackets at instruction {0}")]
    UnbalancedBrackets(usize),
    #[error("degenerate tree: {0}")]
    DegenerateTree(String),
    #[error("invalid grammar: {0}")]
    Grammar(String),

    #[error("flow field: {0}")]
    Flow(String),
    #[error("zero total flux through the inlet")]
    ZeroFlux,
    #[error("integration step {step:e} s fell below minimum {min:e} s at t = {t:e} s")]
    StepUnderflow { step: f64, min: f64, t: f64 },

    #[error("requested {requested} scatterers exceeds cap {cap}")]
    TooManyScatterers { requested: u64, cap: u64 },

    #[error("memory budget of {budget} bytes is too small (needs at least {required})")]
    BudgetTooSmall { budget: u64, required: u64 },
    #[error("simulation produced non-finite output")]
    NonFinite,
    #[error("center frequency {f_c} Hz is not representable at sampling rate {f_s} Hz")]
    FrequencyOutOfBand { f_c: f64, f_s: f64 },
    #[error("missing chunk file {0}")]
    MissingChunk(PathBuf),

    #[error("degenerate (all-zero) input: {0}")]
    Degenerate(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

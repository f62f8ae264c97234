use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("direction has zero length (norm <= 1e-12)")]
    ZeroDirection,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension mismatch at index {index}: expected {expected}, found {found}")]
    DimensionMismatchAt {
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value: {0}")]
    NonFiniteInput(String),

    /// An iterative solve produced a non-finite loss. `trace` holds the
    /// loss values recorded up to the failing iteration.
    #[error("{stage} diverged at iteration {iteration} (non-finite loss)")]
    NonFinite {
        stage: &'static str,
        iteration: usize,
        trace: Vec<f64>,
    },

    #[error("expected {expected} attributes, found {found}")]
    WrongAttributeCount { expected: usize, found: usize },

    #[error("attribute index {index} out of range for {count} attributes")]
    AttributeOutOfRange { index: usize, count: usize },

    #[error("index {index} out of range for {count} items")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("edit target needs at least one Target entry")]
    NoTargetEntry,

    #[error("second edit does not start at the current example end (gap {gap:e})")]
    ChainBroken { gap: f64 },

    #[error("session has no example edit")]
    MissingExample,

    #[error("session has no fitted direction")]
    MissingDirection,

    #[error("session has no test latents")]
    NoTestLatents,

    #[error("session has no transferred alphas")]
    MissingAlphas,

    #[error("empty input")]
    EmptyInput,

    #[error("unsupported session file version {0}")]
    UnsupportedVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png encoding failed: {0}")]
    Png(#[from] png::EncodingError),
}

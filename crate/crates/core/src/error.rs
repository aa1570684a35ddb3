use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate labels: training data must contain both classes")]
    DegenerateLabels,

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),

    #[error("missing values are not accepted by this learner (slot {0})")]
    UnexpectedMissing(usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("metric undefined: {0}")]
    MetricUndefined(&'static str),

    #[error("untrainable task: {0}")]
    UntrainableTask(String),

    #[error("not enough samples for {k}-fold stratification: {positives} positives, {negatives} negatives")]
    InsufficientStrata {
        k: usize,
        positives: usize,
        negatives: usize,
    },

    #[error("ensemble assembly needs at least 2 surviving candidates, got {0}")]
    TooFewCandidates(usize),

    #[error("all learner families failed")]
    AllFamiliesFailed,

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("attributions unavailable for this family: {0}")]
    AttributionsUnavailable(String),

    #[error("calibration fit did not converge")]
    NonConvergent,

    #[error("invalid lexicon: {0}")]
    InvalidLexicon(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

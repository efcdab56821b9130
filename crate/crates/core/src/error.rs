use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Nn(#[from] heterodet_nn::NnError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what}: expected {expected} features, got {actual}")]
    FeatureCount {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("model is untrained: {0}")]
    Untrained(&'static str),

    #[error("streams cannot be paired; offending timestamps: {}", format_offenders(.0))]
    Unpaired(Vec<(f64, f64)>),

    #[error("negative degree of abnormality {value} for {modality}")]
    NegativeDegree { modality: &'static str, value: f32 },

    #[error("cannot read image {path}: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("{path}: timestamps not strictly increasing in `{stream}` stream: {previous} (line {previous_line}) then {current} (line {line})")]
    NonMonotonic {
        path: PathBuf,
        stream: &'static str,
        previous: f64,
        previous_line: usize,
        current: f64,
        line: usize,
    },

    #[error("missing checkpoint for {0} model")]
    MissingCheckpoint(&'static str),

    #[error("checkpoint holds a `{found}` model, expected `{expected}`")]
    WrongModelKind { expected: &'static str, found: String },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_offenders(pairs: &[(f64, f64)]) -> String {
    let shown: Vec<String> = pairs.iter().take(8).map(|(a, b)| format!("({a}, {b})")).collect();
    let more = pairs.len().saturating_sub(shown.len());
    if more > 0 {
        format!("{} and {more} more", shown.join(", "))
    } else {
        shown.join(", ")
    }
}

impl Error {
    /// Short machine-readable category, used by the CLI error line.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Nn(_) => "model",
            Error::InvalidInput(_) => "invalid_input",
            Error::FeatureCount { .. } => "feature_count",
            Error::Untrained(_) => "untrained",
            Error::Unpaired(_) => "unpaired",
            Error::NegativeDegree { .. } => "negative_degree",
            Error::Image { .. } => "image",
            Error::Parse { .. } => "parse",
            Error::NonMonotonic { .. } => "non_monotonic",
            Error::MissingCheckpoint(_) => "missing_checkpoint",
            Error::WrongModelKind { .. } => "wrong_model_kind",
            Error::Degenerate(_) => "degenerate",
            Error::Io(_) => "io",
        }
    }
}

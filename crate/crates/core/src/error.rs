use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("coordinate is not finite")]
    NonFinite,

    #[error("negative component {value} at index {index}, square root undefined")]
    NegativeComponent { index: usize, value: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("points are not in general position (rank {rank}, need {needed})")]
    NotGeneralPosition { rank: usize, needed: usize },

    #[error("point {index} has last coordinate {value}, expected hyperplane level {level}")]
    OffHyperplane {
        index: usize,
        value: f64,
        level: f64,
    },

    #[error("wrong case: {0}")]
    WrongCase(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("gave up after {tries} attempts at {stage}: {detail}")]
    MaxTriesExceeded {
        stage: &'static str,
        tries: usize,
        detail: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("classification inconsistent: {0}; increase the theta grid")]
    GridTooCoarse(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Tag an error with the pipeline stage it came from.
    pub fn at_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

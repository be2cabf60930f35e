use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, EquityError>;

/// Which conditional rate could not be formed for a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    /// The group has no positive labels.
    TruePositive,
    /// The group has no negative labels.
    FalsePositive,
}

impl std::fmt::Display for RateKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RateKind::TruePositive => f.write_str("TPR (no positive labels)"),
            RateKind::FalsePositive => f.write_str("FPR (no negative labels)"),
        }
    }
}

#[derive(Debug, Error)]
pub enum EquityError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dominance violated at feature {index}: z = {z} < x = {x}")]
    DominanceViolated { index: usize, z: f64, x: f64 },

    #[error("obstacle magnitude must be nonnegative, got {0}")]
    NegativeObstacle(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("labels contain a single class; both 0 and 1 are required")]
    SingleClass,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("group {group}: {rate} is undefined")]
    UndefinedRate { group: u8, rate: RateKind },

    #[error("group {0} is absent")]
    MissingGroup(u8),

    #[error("no proxy-positive records; utilization is undefined")]
    NoPositives,

    #[error("record {id} is not a proxy positive")]
    NotProxyPositive { id: String },

    #[error("duplicate name: {0}")]
    DuplicateName(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("no intended-view row for individual {id}")]
    JoinFailure { id: String },

    #[error("missing column: {0}")]
    MissingColumn(String),

    #[error("row {row}, column {column}: cannot parse {value:?}")]
    BadCell { row: usize, column: String, value: String },

    #[error("column {column}: unknown level {level:?}")]
    UnknownLevel { column: String, level: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl EquityError {
    /// True for errors that come from a metric being undefined on otherwise
    /// valid data (a group with no positives, no proxy positives, ...).
    pub fn is_degenerate_metric(&self) -> bool {
        matches!(
            self,
            EquityError::UndefinedRate { .. }
                | EquityError::MissingGroup(_)
                | EquityError::NoPositives
                | EquityError::SingleClass
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EquityError::Io { path: path.into(), source }
    }
}

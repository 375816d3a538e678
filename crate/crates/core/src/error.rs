use std::path::PathBuf;

/// Errors raised across the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("type mismatch at row {row}, column {column:?}: cannot parse {value:?}")]
    TypeMismatch {
        row: usize,
        column: String,
        value: String,
    },
    #[error("unknown category {value:?} in column {column:?}{}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    UnknownCategory {
        value: String,
        column: String,
        row: Option<usize>,
    },
    #[error("table has no rows")]
    EmptyTable,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),

    #[error("invalid DAG: {0}")]
    InvalidDag(String),
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("reversing edges into conditional inputs creates a cycle: {}", .0.join(" -> "))]
    ReversalCycle(Vec<String>),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at generator step {step}")]
    NonFiniteLoss { step: usize },

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint format version {found} is newer than supported version {supported}")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("frequency lists have different bins")]
    BinMismatch,
    #[error("support violation: P({index}) > 0 but Q({index}) = 0")]
    SupportViolation { index: usize },
    #[error("target {0:?} has a single class in the training data")]
    SingleClassTarget(String),

    #[error("stratum {0:?} has no rows to sample from")]
    EmptyStratum(String),
    #[error("household size is zero at row {0}")]
    ZeroHouseholdSize(usize),
    #[error("household size {value:?} at row {row} is not a positive number")]
    InvalidHouseholdSize { row: usize, value: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from invalid user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. } | Error::NonFiniteLoss { .. } | Error::CorruptCheckpoint(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: malformed record: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("corpus is empty after filtering")]
    EmptyCorpus,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("requested {requested} users but only {available} are available")]
    Size { requested: usize, available: usize },

    #[error("unsupported task configuration: {0}")]
    Spec(String),

    #[error("model fitting failed: {0}")]
    Fit(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("feature dimension mismatch: model expects {expected}, input has {got}")]
    Shape { expected: usize, got: usize },

    #[error("missing scores for {} user(s): {}", missing.len(), missing.join(", "))]
    Coverage { missing: Vec<String> },

    #[error("score for user {user_id} is outside [0, 1]: {value}")]
    ScoreValue { user_id: String, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("bootstrap unstable: {degenerate} of {total} resamples were degenerate")]
    Instability { degenerate: usize, total: usize },

    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_cell(self, cell: impl Into<String>) -> Error {
        Error::Cell {
            cell: cell.into(),
            source: Box::new(self),
        }
    }
}

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{bad} of {total} rows malformed (first at line {first_line}: {first_message})")]
    TooManyBadRows {
        bad: usize,
        total: usize,
        first_line: u64,
        first_message: String,
    },

    #[error("no in-bounds training records; cannot build a model")]
    EmptyModel,

    #[error("observation vocabulary is empty")]
    EmptyVocabulary,

    #[error("observation sequence is empty")]
    EmptyObservations,

    #[error("power iteration did not converge (residual {residual:e})")]
    NoConvergence { last: Vec<f64>, residual: f64 },

    #[error("cell index ({col}, {row}) outside {n_cols}x{n_rows} grid")]
    OutOfBounds {
        col: usize,
        row: usize,
        n_cols: usize,
        n_rows: usize,
    },

    #[error("sample not localizable: unknown tower {0:?}")]
    Unlocalizable(String),

    #[error("test set is empty")]
    EmptyTestSet,

    #[error("report contains no localized estimates")]
    EmptyReport,

    #[error("unsupported file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Whether the error stems from bad user input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Invalid(_))
    }
}

/// Opens a file, mapping a missing path to [`Error::NotFound`].
pub(crate) fn open(path: &std::path::Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

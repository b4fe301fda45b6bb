//! Crate-wide error type.

/// Error type shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A CSV cell could not be parsed. `row` is the 1-based data row
    /// (the header is row 0).
    #[error("csv parse error in {path} at data row {row}: {message}")]
    CsvParse {
        path: String,
        row: usize,
        message: String,
    },

    /// The CSV header does not match the declared schema.
    #[error("csv schema error in {path}: {message}")]
    CsvSchema { path: String, message: String },

    /// A data source produced no rows.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// An iterative fit did not reach its convergence tolerance.
    #[error("model failed to converge: {0}")]
    NonConvergence(String),

    /// An experiment configuration failed validation.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Shorthand used throughout the crate.
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

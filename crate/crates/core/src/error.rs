use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file, located by 1-based data row and column.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("dimension mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("column `{0}` has no observed values")]
    EmptyColumn(String),

    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("unstable VAR: spectral radius {0:.6} >= 1")]
    Unstable(f64),

    #[error("variable {0} has zero innovation variance")]
    ZeroVariance(usize),

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's input or configuration rather
    /// than by a numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InvalidParameter(_)
                | Error::UnknownSymbol(_)
                | Error::EmptyColumn(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
                | Error::Shape(_)
                | Error::InsufficientData(_)
        )
    }
}

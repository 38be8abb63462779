use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum RieError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("value {value} outside attainable range [{lo}, {hi})")]
    Range { value: f64, lo: f64, hi: f64 },

    #[error("no convergence after {iterations} iterations (bracket [{lo}, {hi}], residual {residual:e})")]
    Convergence {
        iterations: usize,
        lo: f64,
        hi: f64,
        residual: f64,
    },

    #[error("unsupported noise family: {0}")]
    UnsupportedFamily(String),

    #[error("R-transform evaluation failed at index {index}: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<RieError>,
    },

    #[error("linear algebra backend failure: {0}")]
    Backend(String),

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RieError>;

impl RieError {
    pub(crate) fn at(index: usize, source: RieError) -> Self {
        RieError::AtIndex {
            index,
            source: Box::new(source),
        }
    }
}

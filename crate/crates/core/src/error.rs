use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),

    #[error(
        "function is not deterministic: two evaluations at the same point differ ({0} vs {1})"
    )]
    NonDeterministic(f64, f64),

    #[error("invalid word: {0}")]
    InvalidWord(String),

    #[error("unknown symbol {symbol:?} for vocabulary {vocabulary}")]
    UnknownSymbol { symbol: char, vocabulary: String },

    #[error("could only generate {generated} of {requested} distinct samples within a budget of {budget} attempts")]
    BudgetExhausted {
        requested: usize,
        generated: usize,
        budget: usize,
    },

    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },

    #[error("missing parameter {0}")]
    MissingParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(Error::Shape {
        op,
        detail: detail.into(),
    })
}

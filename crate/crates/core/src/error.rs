use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("weight {value} at {location} is outside [-1, 1]")]
    WeightOutOfRange { location: String, value: f64 },

    #[error("non-finite number at {0}")]
    NonFinite(String),

    #[error("malformed network document: {0}")]
    Malformed(String),

    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameters: {0}")]
    Params(String),

    /// The exhaustive search would visit more than `2^cap` candidates.
    #[error("enumeration too large: {size_log2:.1} bits of search space exceeds enum_cap {cap}")]
    EnumerationTooLarge { size_log2: f64, cap: u32 },

    #[error("query budget of {budget} input nodes exceeded")]
    BudgetExceeded { budget: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

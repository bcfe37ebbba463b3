use thiserror::Error;

/// Errors raised across the volatility toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numeric overflow: {0}")]
    NumericOverflow(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("price {price} outside the no-arbitrage bracket ({lower}, {upper})")]
    InvalidPrice { price: f64, lower: f64, upper: f64 },

    #[error("root not bracketed by [{lo}, {hi}]: f(lo)={f_lo}, f(hi)={f_hi}")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("stale state: {0}")]
    State(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fit failure: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(format!("{what} = {value}")))
    }
}

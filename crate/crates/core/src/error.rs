use chrono::NaiveDate;
use thiserror::Error;

use crate::curves::{CurveError, Side};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Curve(#[from] CurveError),

    /// Bid and ask curves have no common volume interval.
    #[error("bid and ask curves share no volume interval (bid [{bid_lo}, {bid_hi}], ask [{ask_lo}, {ask_hi}])")]
    DisjointDomains {
        bid_lo: f64,
        bid_hi: f64,
        ask_lo: f64,
        ask_hi: f64,
    },

    #[error("expected a {expected:?} curve, got {actual:?}")]
    WrongSide { expected: Side, actual: Side },

    #[error("insufficient history: {what} needs {needed} observations, {available} available")]
    InsufficientHistory {
        what: &'static str,
        needed: usize,
        available: usize,
    },

    /// Backtest start leaves too little history before it.
    #[error(
        "warm-up shortfall before {first_day}: {days_available} of {days_needed} history days, \
         {residuals_available} of {residuals_needed} volume residuals"
    )]
    WarmUp {
        first_day: NaiveDate,
        days_needed: u32,
        days_available: u32,
        residuals_needed: usize,
        residuals_available: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input file violates its schema or a curve invariant.
    #[error("{path}: line {line}: {message}")]
    Data {
        path: String,
        line: u64,
        message: String,
    },

    #[error("invalid curve for {date} hour {hour} {side:?} at line {line}: {source}")]
    CurveRow {
        date: NaiveDate,
        hour: u8,
        side: Side,
        line: u64,
        source: CurveError,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn insufficient(what: &'static str, needed: usize, available: usize) -> Self {
        Error::InsufficientHistory {
            what,
            needed,
            available,
        }
    }
}

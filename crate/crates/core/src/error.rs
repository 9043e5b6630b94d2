use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("spreading factor {0} outside supported range 4..=12")]
    InvalidSpreadingFactor(u32),

    #[error("symbol index {symbol} out of range for N = {n}")]
    SymbolOutOfRange { symbol: usize, n: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("time offset {tau} outside [{lo}, {hi})")]
    OffsetOutOfRange { tau: f64, lo: f64, hi: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spreading factor {sf} too large for this evaluator (max {max})")]
    SpreadingFactorTooLarge { sf: u32, max: u32 },

    #[error("quadrature did not converge: estimate {estimate:e}, error {error:e}")]
    NonConvergence { estimate: f64, error: f64 },

    #[error("target rate {target:e} not bracketed in [{lo_db}, {hi_db}] dB")]
    NotBracketed { target: f64, lo_db: f64, hi_db: f64 },
}

//! Crate-wide error type and result alias.

use thiserror::Error;

/// Unified error type for configuration, simulation, decoding, and I/O failures.
#[derive(Debug, Error)]
pub enum RingError {
    /// A parameter or combination of parameters violates a documented invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A hardware resource budget (fan-in, core size) would be exceeded.
    #[error("hardware budget exceeded: {0}")]
    Budget(String),

    /// Simulation state became non-finite.
    #[error("numerical blow-up: {0}")]
    Numeric(String),

    /// Decoding could not produce a usable estimate.
    #[error("decode failed: {0}")]
    Decode(String),

    /// A regression/fit had too few points or a degenerate design.
    #[error("fit failed: {0}")]
    Fit(String),

    /// Calibration could not complete.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// Trajectory construction or import rejected the input.
    #[error("trajectory error: {0}")]
    Trajectory(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RingError>;

impl RingError {
    /// Process exit code for the CLI: validation problems exit 2, runtime
    /// failures exit 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            RingError::InvalidConfig(_)
            | RingError::Budget(_)
            | RingError::Trajectory(_)
            | RingError::Toml(_) => 2,
            _ => 1,
        }
    }
}

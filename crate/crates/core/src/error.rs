use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid cavity geometry: {0}")]
    InvalidGeometry(String),

    #[error("position z = {z:e} m lies outside the cavity (|z| <= {half_length:e} m)")]
    OutOfCavity { z: f64, half_length: f64 },

    #[error("unsupported transverse mode TEM{m}{n}")]
    UnsupportedMode { m: u32, n: u32 },

    #[error("invalid mode: {0}")]
    InvalidMode(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("linear solve failed (condition estimate {condition:e}): {reason}")]
    Solver { reason: String, condition: f64 },

    #[error("hypotheses are indistinguishable: both expect {mean} counts")]
    NoInformation { mean: f64 },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("target {target} not reached on the supplied grid")]
    Unreachable { target: f64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code for this error class: 2 configuration, 3 numerical
    /// failure, 4 unreachable target.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGeometry(_)
            | Error::UnsupportedMode { .. }
            | Error::InvalidMode(_)
            | Error::InvalidParams(_)
            | Error::InvalidConfig(_)
            | Error::Parse { .. }
            | Error::Io(_) => 2,
            Error::OutOfCavity { .. } | Error::Solver { .. } | Error::NoInformation { .. } => 3,
            Error::Unreachable { .. } => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

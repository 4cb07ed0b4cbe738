use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("time domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unsupported representation: {0}")]
    Unsupported(String),

    #[error("no stabilizing solution: {0}")]
    NoStabilizingSolution(String),

    #[error("ill-posed Riccati problem: {0}")]
    IllPosed(String),

    #[error("Lyapunov equation has no solution: {0}")]
    NoLyapunovSolution(String),

    #[error("closed loop is not stable (spectral radius {0:.6})")]
    UnstableClosedLoop(f64),

    #[error("delay specification violates {0}")]
    DelayViolation(String),

    #[error("synthesis failed at stage `{stage}`: {detail}")]
    Synthesis { stage: String, detail: String },

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("nothing to emit in {0}")]
    NothingToEmit(String),
}

/// Where an error belongs for reporting purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad input: parameters, delays, shapes, parse errors.
    Config,
    /// Riccati, Lyapunov, stability or other numerical failures.
    Synthesis,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension(_)
            | Error::DomainMismatch(_)
            | Error::InvalidParameter { .. }
            | Error::Unsupported(_)
            | Error::DelayViolation(_)
            | Error::TooLarge(_)
            | Error::Serde(_)
            | Error::Csv(_)
            | Error::Io(_)
            | Error::NothingToEmit(_) => ErrorClass::Config,
            _ => ErrorClass::Synthesis,
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn synthesis(stage: impl Into<String>, err: impl std::fmt::Display) -> Self {
        Error::Synthesis {
            stage: stage.into(),
            detail: err.to_string(),
        }
    }
}

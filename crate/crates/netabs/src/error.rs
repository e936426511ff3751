use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure category, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Infeasible,
    Numeric,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("dangling edge: subsystem {target} (mode {mode}) reads from {source_desc} which provides no block for it")]
    DanglingEdge {
        target: usize,
        mode: usize,
        source_desc: String,
    },

    #[error("invalid switching signal for subsystem {subsystem}: {reason}")]
    InvalidSwitching { subsystem: usize, reason: String },

    #[error("unknown mode {mode} for subsystem {subsystem} ({available} modes defined)")]
    UnknownMode {
        subsystem: usize,
        mode: usize,
        available: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("closed loop of mode {mode} has spectral radius {radius:.6} >= required {bound:.6}")]
    NotSchurStable {
        mode: usize,
        radius: f64,
        bound: f64,
    },

    #[error("condition {condition} violated in mode {mode} (margin {margin:.3e})")]
    CertificateViolation {
        condition: &'static str,
        mode: usize,
        margin: f64,
    },

    #[error("certificate infeasible: {0}")]
    CertificateInfeasible(String),

    #[error(
        "P has deficient column rank in mode {mode} (smallest singular value {sigma_min:.3e})"
    )]
    RankDeficientP { mode: usize, sigma_min: f64 },

    #[error("{equation} has no exact solution in mode {mode} (residual {residual:.3e}, tolerance {tolerance:.3e})")]
    InfeasibleConditions {
        equation: &'static str,
        mode: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("small-gain condition fails at subsystem {index} (slack {slack:.3e})")]
    SmallGainInfeasible { index: usize, slack: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DimensionMismatch { .. }
            | Error::DanglingEdge { .. }
            | Error::InvalidSwitching { .. }
            | Error::UnknownMode { .. }
            | Error::Parse(_)
            | Error::UnknownStrategy { .. }
            | Error::InvalidParameter(_)
            | Error::RankDeficientP { .. } => ErrorClass::Validation,
            Error::NotSchurStable { .. }
            | Error::CertificateViolation { .. }
            | Error::CertificateInfeasible(_)
            | Error::InfeasibleConditions { .. }
            | Error::SmallGainInfeasible { .. } => ErrorClass::Infeasible,
            Error::Numeric(_) => ErrorClass::Numeric,
            Error::Io(_) | Error::Csv(_) => ErrorClass::Io,
        }
    }

    pub(crate) fn dims(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }
}

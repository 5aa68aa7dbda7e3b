use thiserror::Error;

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("placement mismatch: expected {expected}, got {got}")]
    Placement {
        expected: &'static str,
        got: &'static str,
    },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("duration {omega} is not a positive multiple of h = {h}")]
    Alignment { omega: f64, h: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("lattice too small: need n >= {need}, got {got}")]
    LatticeTooSmall { need: usize, got: usize },
    #[error("inconsistent response table: {0}")]
    InconsistentTable(String),
    #[error("continuity loss at t = {t}")]
    ContinuityLoss { t: f64 },
    #[error("existence loss at t = {t}")]
    ExistenceLoss { t: f64 },
    #[error("solvability loss at node {node} (t = {t})")]
    SolvabilityLoss { node: usize, t: f64 },
    #[error("controllability loss at step {step} (t = {t})")]
    ControllabilityLoss { step: usize, t: f64 },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("singularity at y = {0}")]
    Singularity(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io(_) => ErrorKind::Io,
            Error::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => ErrorKind::Io,
            Error::Csv(_) | Error::Parse(_) => ErrorKind::Input,
            Error::Grid(_)
            | Error::Placement { .. }
            | Error::GridMismatch(_)
            | Error::Parameter(_)
            | Error::Alignment { .. }
            | Error::InconsistentTable(_)
            | Error::LatticeTooSmall { .. } => ErrorKind::Input,
            _ => ErrorKind::Numerical,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

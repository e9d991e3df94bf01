use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid protocol: {0}")]
    InvalidSpec(String),

    #[error("time {t} outside schedule window [0, {duration}]")]
    Domain { t: f64, duration: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("non-finite value while evaluating {0}")]
    NonFinite(&'static str),

    #[error("{steps} integration steps requested, at least {min} required")]
    TooFewSteps { steps: usize, min: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no interior minimum in [{lo}, {hi}]: minimum sits at the {edge} edge")]
    NoInteriorMinimum { lo: f64, hi: f64, edge: &'static str },

    #[error("drive infeasible on qubit {qubit} at t = {t}: g/Omega = {ratio:.6} exceeds {limit:.6}")]
    InfeasibleDrive {
        qubit: usize,
        t: f64,
        ratio: f64,
        limit: f64,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

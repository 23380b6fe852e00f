use thiserror::Error;

/// Errors raised by the solver, the reduced models and the I/O layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QsyncError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("oscillator {oscillator} lost its mass (|psi| = {mass:e}) at t = {time}")]
    VanishingMass {
        oscillator: usize,
        time: f64,
        mass: f64,
    },

    #[error("numerical instability in oscillator {oscillator} at t = {time}")]
    NumericalInstability { oscillator: usize, time: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no fixed point for Lambda = {0} (> 1)")]
    NoFixedPoint(f64),

    #[error("initial condition coincides with the excluded equilibrium")]
    ExcludedInitialCondition,

    #[error("closed-form solution is singular at t = {0}")]
    Singularity(f64),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("non-positive sample {value} at t = {time}")]
    NonPositiveSample { time: f64, value: f64 },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("config error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for QsyncError {
    fn from(e: std::io::Error) -> Self {
        QsyncError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QsyncError>;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("kernel table has no positive sample")]
    EmptyKernelTable,

    #[error("grid step {grid} does not match kernel step {kernel}")]
    StepMismatch { grid: f64, kernel: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("radial dimension must be at least 2, got {0}")]
    Dimension(usize),

    #[error("profile covers [{have_lo}, {have_hi}] but [{need_lo}, {need_hi}] is required")]
    ProfileTooShort {
        have_lo: f64,
        have_hi: f64,
        need_lo: f64,
        need_hi: f64,
    },

    #[error("initial datum: {0}")]
    InitialDatum(String),

    #[error("free boundary moved backwards: {0}")]
    BoundaryRegression(String),

    #[error("free boundary reached the end of the grid at t = {t}")]
    MarginExhausted { t: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("corrector depends on the truncation extent: change {0:e} after doubling")]
    TruncationSensitive(f64),

    #[error("nonpositive value {value:e} in fit window at t = {t}")]
    NonPositive { t: f64, value: f64 },

    #[error("fit window [{lo}, {hi}] holds fewer than two samples")]
    EmptyWindow { lo: f64, hi: f64 },

    #[error("series {name} not monotone at t = {t} (jump {jump:e})")]
    NotMonotone {
        name: &'static str,
        t: f64,
        jump: f64,
    },

    #[error("run too short: {0}")]
    RunTooShort(String),

    #[error("inconsistent estimates: {0}")]
    Inconsistent(String),

    #[error("config: {0}")]
    Config(String),

    #[error("incompatible records: {0}")]
    Incompatible(String),

    #[error("initial data are not ordered: {0}")]
    Unordered(String),
}

pub type Result<T> = std::result::Result<T, Error>;

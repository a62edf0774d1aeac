use thiserror::Error;

/// Errors raised by the constants engine, the discretization and the solver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter `{name}` must be {requirement}, got {value}")]
    InvalidParameter {
        name: &'static str,
        requirement: &'static str,
        value: f64,
    },

    #[error(
        "competition is not weak: need c1 < a1*b2/a2 ({c1} vs {bound1}) and c2 < a2*b1/a1 ({c2} vs {bound2})"
    )]
    WeakCompetitionViolated {
        c1: f64,
        bound1: f64,
        c2: f64,
        bound2: f64,
    },

    #[error("heat-kernel integral diverges in dimension {dimension} at zero diameter")]
    DivergentIntegral { dimension: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field has {found} values but the grid has {expected} cells")]
    FieldSizeMismatch { expected: usize, found: usize },

    #[error("linear solve did not converge: relative residual {residual:e} after {iterations} iterations")]
    SolveFailure { iterations: usize, residual: f64 },

    #[error("elliptic solve produced a non-positive concentration (min w = {min_w:e})")]
    NonPositiveW { min_w: f64 },

    #[error("dense matrix is singular at pivot {pivot}")]
    SingularMatrix { pivot: usize },

    #[error("min w = {min_w:e} fell below the floor {floor:e} at t = {t}")]
    WFloorViolation { min_w: f64, floor: f64, t: f64 },

    #[error("species {species} became negative (min = {min:e}) at t = {t}")]
    NegativeDensity { species: char, min: f64, t: f64 },

    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),

    #[error("energy undefined: a density vanishes where its equilibrium value is positive")]
    UndefinedEnergy,

    #[error("insufficient data: {found} records after warmup, need at least {required}")]
    InsufficientData { found: usize, required: usize },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

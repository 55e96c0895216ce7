use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("energy constraint violated: |alpha|^2 = {alpha2} exceeds budget E = {energy}")]
    ConstraintViolation { alpha2: f64, energy: f64 },

    #[error("{name} = {value} is outside the allowed range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("distribution is not normalized (mass = {mass})")]
    NotNormalized { mass: f64 },

    #[error("degenerate prior: {0}")]
    DegeneratePrior(String),

    #[error("posterior underflow at outcome q = {q} (log marginal = {log_mass})")]
    PosteriorUnderflow { q: f64, log_mass: f64 },

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error("ensemble aborted: {aborted} of {total} trajectories failed")]
    EnsembleAborted { aborted: usize, total: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "fock cutoff {cutoff} too small: top-level population {leakage:.3e} exceeds {limit:.3e}"
    )]
    CutoffInsufficient {
        cutoff: usize,
        leakage: f64,
        limit: f64,
    },

    #[error("singular rates at t = {t}")]
    SingularRates { t: f64 },

    #[error("no inverse temperature reproduces bath entropy {entropy} (bracket [{lo}, {hi}])")]
    UnresolvableTemperature { entropy: f64, lo: f64, hi: f64 },

    #[error("integrator step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("too few samples: need at least {need}, got {got}")]
    TooFewPoints { need: usize, got: usize },

    #[error("eigenvalue iteration did not converge")]
    NoConvergence,

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

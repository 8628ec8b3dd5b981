use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Structural problem with a model: wrong lengths, non-stochastic rows, bad ranges.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// `kappa == 1`: the environment is i.i.d. in time and the tail exponent is unbounded.
    #[error("infinite exponent: kappa = 1 gives an environment that is i.i.d. in time")]
    InfiniteExponent,

    #[error("constants system infeasible: {constraint}")]
    Infeasible { constraint: String },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("ordering violation: proper visit at t={t} precedes last regeneration {last_tau}")]
    OrderingViolation { t: u64, last_tau: u64 },

    #[error("ellipticity violated: state {state}, move {mv} has residual mass {value:e}")]
    EllipticityViolation { state: usize, mv: usize, value: f64 },

    #[error("insufficient data: need at least {needed}, got {got} ({what})")]
    InsufficientData {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("degenerate direction {index}: a'Sa = {value:e}")]
    DegenerateDirection { index: usize, value: f64 },

    #[error("search horizon exceeded after scanning {scanned} steps")]
    Horizon { scanned: u64 },

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

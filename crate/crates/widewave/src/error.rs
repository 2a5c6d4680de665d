use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("time horizon too short: need at least {needed} weighted units, have {have}")]
    HorizonTooShort { needed: f64, have: f64 },

    #[error("too few time nodes: need at least {0}")]
    TooFewNodes(usize),

    #[error("eps out of range: {0} (must lie in (0,1))")]
    EpsOutOfRange(f64),

    #[error("strict source mode infeasible at eps={eps}: t_eps={t_eps} >= T_eps={t_big}")]
    StrictInfeasible { eps: f64, t_eps: f64, t_big: f64 },

    #[error("Gronwall hypothesis violated at node {node}: slack {slack}")]
    HypothesisViolated { node: usize, slack: f64 },

    #[error("initial constraints violated: {0}")]
    ConstraintViolated(String),

    #[error("line search failed at iteration {iter} (step {step})")]
    LineSearchFailure { iter: usize, step: f64 },

    #[error("time step {dt} exceeds stability bound {bound}")]
    StabilityBound { dt: f64, bound: f64 },

    #[error("integration diverged at t={t}: norm grew by factor {factor:.3e}")]
    Unstable { t: f64, factor: f64 },

    #[error("test function does not vanish at the time endpoints")]
    TestFunctionSupport,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

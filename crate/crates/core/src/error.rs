use thiserror::Error;

/// Errors raised by the solvers, expansions and the simulation engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("no admissible root: no real candidate gives a_qq > 0 and positive tracking speed")]
    NoAdmissibleRoot,

    #[error("Newton refinement did not converge after {iterations} iterations (scaled residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("tracking speed denominator is zero")]
    DegenerateSpeed,

    #[error("singular linear system (condition estimate {condition:e})")]
    SingularSystem { condition: f64 },

    #[error("closed-form B undefined: |Gamma(z)| = {gamma:e} below 1e-12")]
    DegenerateGamma { gamma: f64 },

    #[error("integrand does not decay: |f(horizon)| = {tail:e} exceeds tolerance {tol:e}")]
    NonDecayingIntegrand { tail: f64, tol: f64 },

    #[error("unstable step at t = {time}: state magnitude exceeded the overflow guard (dt too coarse?)")]
    UnstableStep { time: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;

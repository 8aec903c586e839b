//! Optimal dynamic trading with quadratic transaction costs, decaying price
//! impact, a mean-reverting return signal and multiscale stochastic volatility.
//!
//! The numerical core is generic over the scalar type ([`scalar::Real`]);
//! the aliases below fix it to `f64` or `f32`. Simulation, configuration and
//! the command line work in `f64`.

pub mod cli;
pub mod error;
pub mod fast_asym;
pub mod impact_series;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod multiscale;
#[cfg(test)]
mod proptests;
pub mod quadrature;
pub mod riccati;
pub mod scalar;
pub mod sensitivity;
pub mod slow_asym;
pub mod special;

pub use error::{Error, Result};

pub type MarketParams = model::MarketParams<f64>;
pub type MarketState = model::MarketState<f64>;
pub type VolSpec = model::VolSpec<f64>;
pub type CoeffsA = riccati::CoeffsA<f64>;
pub type CoeffsB = slow_asym::CoeffsB<f64>;
pub type CoeffsD = slow_asym::CoeffsD<f64>;

pub type MarketParamsF32 = model::MarketParams<f32>;
pub type MarketStateF32 = model::MarketState<f32>;
pub type VolSpecF32 = model::VolSpec<f32>;
pub type CoeffsAF32 = riccati::CoeffsA<f32>;
pub type CoeffsBF32 = slow_asym::CoeffsB<f32>;
pub type CoeffsDF32 = slow_asym::CoeffsD<f32>;

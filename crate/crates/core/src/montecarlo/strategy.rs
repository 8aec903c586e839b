//! Feedback strategies evaluated along simulated paths.

use std::sync::Arc;

use statrs::distribution::{ContinuousCDF, Gamma};

use super::interp::Pchip;
use crate::error::{Error, Result};
use crate::fast_asym::{corrected_control_fast, phi_cir, phi_expou_approx};
use crate::model::{FastCir, FastExpOu, MarketParams, MarketState, SlowCir, VolModel, VolSpec};
use crate::multiscale::{corrected_control_multiscale, phi_multiscale_cir};
use crate::riccati::{control_rate, solve_constant_vol, CoeffsA};
use crate::slow_asym::{CoeffsB, SlowModel};

/// Default node count of the slow-factor coefficient grid.
pub const GRID_NODES: usize = 200;

/// Smallest grid node; the zero-variance limit has no admissible solution.
const Z_FLOOR: f64 = 1e-6;

/// `A(z)` and `B(z)` on a z grid, interpolated monotonically inside the grid,
/// solved exactly above it and held at the lowest node below it.
#[derive(Clone, Debug)]
pub struct CoeffGrid {
    model: SlowModel,
    table: Pchip<10>,
}

impl CoeffGrid {
    pub fn new(model: SlowModel, nodes: Vec<f64>) -> Result<Self> {
        let values = nodes
            .iter()
            .map(|&z| {
                let pt = model.point(z)?;
                let a = pt.a.to_array();
                let b = pt.b.to_array();
                Ok(std::array::from_fn(|i| if i < 7 { a[i] } else { b[i - 7] }))
            })
            .collect::<Result<Vec<[f64; 10]>>>()?;
        Ok(CoeffGrid {
            model,
            table: Pchip::new(nodes, values)?,
        })
    }

    /// `n` uniform nodes spanning the 0.1%-99.9% stationary quantiles of the
    /// CIR factor, widened to cover `[z0/2, 3 z0/2]` for every start level.
    pub fn stationary(model: SlowModel, starts: &[f64], n: usize) -> Result<Self> {
        let SlowCir { m_s, beta_g, .. } = model.factor;
        let shape = 2.0 * m_s / (beta_g * beta_g);
        let rate = 2.0 / (beta_g * beta_g);
        let law = Gamma::new(shape, rate).map_err(|e| Error::InvalidInput(format!("stationary law: {e}")))?;
        let mut lo = law.inverse_cdf(1e-3);
        let mut hi = law.inverse_cdf(1.0 - 1e-3);
        for &z0 in starts {
            lo = lo.min(0.5 * z0);
            hi = hi.max(1.5 * z0);
        }
        let lo = lo.max(Z_FLOOR);
        if n < 2 || !(hi > lo) {
            return Err(Error::InvalidInput("degenerate slow-factor grid".into()));
        }
        let nodes = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        Self::new(model, nodes)
    }

    pub fn model(&self) -> &SlowModel {
        &self.model
    }

    pub fn eval(&self, z: f64) -> Result<(CoeffsA, CoeffsB)> {
        if z <= self.table.hi() {
            let v = self.table.eval(z.max(self.table.lo()));
            let a = CoeffsA::from_array(std::array::from_fn(|i| v[i]));
            Ok((a, CoeffsB { b_q: v[7], b_l: v[8], b_x: v[9] }))
        } else {
            let pt = self.model.point(z)?;
            Ok((pt.a, pt.b))
        }
    }
}

/// Fast-factor correction term `phi(y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FastPhi {
    Cir { gamma: f64, factor: FastCir },
    /// Small-fluctuation approximation.
    ExpOu { gamma: f64, factor: FastExpOu },
}

impl FastPhi {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            FastPhi::Cir { gamma, factor } => phi_cir(gamma, factor.chi, factor.mu, y),
            FastPhi::ExpOu { gamma, factor } => phi_expou_approx(gamma, factor.m, factor.theta_r, factor.sigma_hat, y),
        }
    }
}

/// A feedback rule `u(state)`. Correction scales are stored with the strategy
/// so that a zero scale reproduces the baseline exactly.
#[derive(Clone, Debug)]
pub enum Strategy {
    Constant { a: CoeffsA },
    Fast { base: CoeffsA, phi: FastPhi, epsilon: f64 },
    Slow { grid: Arc<CoeffGrid>, delta: f64 },
    Multiscale { grid: Arc<CoeffGrid>, gamma: f64, fast: FastCir, epsilon: f64, delta: f64 },
}

impl Strategy {
    pub fn control(&self, p: &MarketParams, st: &MarketState) -> Result<f64> {
        Ok(match self {
            Strategy::Constant { a } => control_rate(p, a, st),
            Strategy::Fast { base, phi, epsilon } => corrected_control_fast(p, base, phi.eval(st.y), *epsilon, st),
            Strategy::Slow { grid, delta } => {
                let (a, b) = grid.eval(st.z.max(0.0))?;
                control_rate(p, &a, st) + delta.sqrt() / p.cost_k * b.control_shift(p.lambda)
            }
            Strategy::Multiscale {
                grid,
                gamma,
                fast,
                epsilon,
                delta,
            } => {
                let z = st.z.max(0.0);
                let (a, b) = grid.eval(z)?;
                let phi = phi_multiscale_cir(*gamma, fast.chi, fast.mu, st.y.max(0.0), z);
                corrected_control_multiscale(p, &a, &b, phi, *epsilon, *delta, st)
            }
        })
    }
}

/// Correction scales used by the corrected strategy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorrectionScales {
    pub epsilon: f64,
    pub delta: f64,
}

impl CorrectionScales {
    pub fn of(vol: &VolSpec) -> Self {
        CorrectionScales {
            epsilon: vol.fast_epsilon(),
            delta: vol.slow_delta(),
        }
    }
}

/// Baseline (constant volatility at the effective variance) and corrected strategies.
#[derive(Clone, Debug)]
pub struct StrategyPair {
    pub baseline: Strategy,
    pub corrected: Strategy,
}

impl StrategyPair {
    /// `z_starts` lists the slow-factor start levels the grid must cover.
    pub fn for_model(p: &MarketParams, vol: &VolSpec, scales: CorrectionScales, z_starts: &[f64]) -> Result<Self> {
        let rho2 = vol.correlations.rho2;
        let grid = |slow: SlowCir, scale: f64| -> Result<Arc<CoeffGrid>> {
            let model = SlowModel {
                params: *p,
                factor: slow,
                rho2,
                scale,
            };
            Ok(Arc::new(CoeffGrid::stationary(model, z_starts, GRID_NODES)?))
        };
        Ok(match vol.model {
            VolModel::Constant { sigma } => {
                let a = solve_constant_vol(p, sigma * sigma)?;
                StrategyPair {
                    baseline: Strategy::Constant { a },
                    corrected: Strategy::Constant { a },
                }
            }
            VolModel::FastCir(factor) => {
                let a = solve_constant_vol(p, factor.mu)?;
                StrategyPair {
                    baseline: Strategy::Constant { a },
                    corrected: Strategy::Fast {
                        base: a,
                        phi: FastPhi::Cir { gamma: p.gamma, factor },
                        epsilon: scales.epsilon,
                    },
                }
            }
            VolModel::FastExpOu(factor) => {
                let a = solve_constant_vol(p, factor.mean_variance())?;
                StrategyPair {
                    baseline: Strategy::Constant { a },
                    corrected: Strategy::Fast {
                        base: a,
                        phi: FastPhi::ExpOu { gamma: p.gamma, factor },
                        epsilon: scales.epsilon,
                    },
                }
            }
            VolModel::SlowCir(slow) => {
                let g = grid(slow, 1.0)?;
                StrategyPair {
                    baseline: Strategy::Slow { grid: g.clone(), delta: 0.0 },
                    corrected: Strategy::Slow { grid: g, delta: scales.delta },
                }
            }
            VolModel::Multiscale { fast, slow } => {
                let g = grid(slow, fast.mu)?;
                let make = |epsilon, delta| Strategy::Multiscale {
                    grid: g.clone(),
                    gamma: p.gamma,
                    fast,
                    epsilon,
                    delta,
                };
                StrategyPair {
                    baseline: make(0.0, 0.0),
                    corrected: make(scales.epsilon, scales.delta),
                }
            }
        })
    }
}

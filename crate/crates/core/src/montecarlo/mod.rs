//! Monte Carlo comparison of a baseline and a corrected strategy on common
//! random numbers.
//!
//! Realized PnL is `int q dS - int (K/2) u^2 dt` with `dS = dP + dl`. The
//! discounted objective `int e^{-rho t} (dPnL - gamma/2 sigma^2 q^2 dt)` is
//! reported alongside it.

mod interp;
mod strategy;

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub use interp::Pchip;
pub use strategy::{CoeffGrid, CorrectionScales, FastPhi, Strategy, StrategyPair, GRID_NODES};

use crate::error::{Error, Result};
use crate::model::{Correlations, MarketParams, MarketState, SimSettings, VolModel, VolSpec};

/// States beyond this magnitude abort the run.
pub const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig {
    pub horizon_years: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Reference wealth for basis-point conversion.
    pub w_ref: f64,
}

impl SimConfig {
    pub fn from_settings(s: &SimSettings) -> Result<Self> {
        let w_ref = s
            .w_ref
            .ok_or_else(|| Error::InvalidInput("w_ref is required for simulation".into()))?;
        let cfg = SimConfig {
            horizon_years: s.horizon_years,
            dt: s.dt,
            n_paths: s.n_paths,
            seed: s.seed,
            w_ref,
        };
        cfg.n_steps()?;
        Ok(cfg)
    }

    /// `horizon / dt`, which must be a positive integer.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.horizon_years > 0.0) {
            return Err(Error::InvalidInput("dt and horizon_years must be > 0".into()));
        }
        let r = self.horizon_years / self.dt;
        let n = r.round();
        if (r - n).abs() > 1e-9 * r.max(1.0) || n < 1.0 {
            return Err(Error::InvalidInput(format!("horizon_years / dt = {r} is not an integer")));
        }
        if self.n_paths < 2 {
            return Err(Error::InvalidInput("n_paths must be >= 2".into()));
        }
        if !(self.w_ref > 0.0) {
            return Err(Error::InvalidInput("w_ref must be > 0".into()));
        }
        Ok(n as usize)
    }
}

/// Brownian increments over one step: `dw` drives `(x, y, z)` with the model
/// correlations, `db` drives the price independently.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Increments {
    pub dw: [f64; 3],
    pub db: f64,
}

/// Lower-triangular factor of the `(W0, W1, W2)` correlation matrix.
pub fn correlation_factor(c: &Correlations) -> Result<Matrix3<f64>> {
    let m = Matrix3::new(1.0, c.rho1, c.rho2, c.rho1, 1.0, c.rho12, c.rho2, c.rho12, 1.0);
    m.cholesky()
        .map(|ch| ch.l())
        .ok_or_else(|| Error::InvalidInput("correlation matrix is not positive definite".into()))
}

/// `x dt + sigma(y, z) dB`.
pub fn price_increment(vol: &VolSpec, st: &MarketState, inc: &Increments, dt: f64) -> f64 {
    st.x * dt + vol.variance(st.y, st.z).sqrt() * inc.db
}

/// `(lambda u - beta l) dt`.
pub fn impact_increment(p: &MarketParams, st: &MarketState, u: f64, dt: f64) -> f64 {
    (p.lambda * u - p.beta * st.l) * dt
}

/// Full-truncation Euler step of a CIR factor `dY = a(m - Y)dt + b sqrt(Y) dW`.
fn cir_step(y: f64, a: f64, m: f64, b: f64, dw: f64, dt: f64) -> f64 {
    let yp = y.max(0.0);
    y + a * (m - yp) * dt + b * yp.sqrt() * dw
}

/// One Euler–Maruyama step of the joint state under control `u`.
pub fn step_dynamics(p: &MarketParams, vol: &VolSpec, st: &MarketState, u: f64, inc: &Increments, dt: f64) -> MarketState {
    let mut y = st.y;
    let mut z = st.z;
    match vol.model {
        VolModel::Constant { .. } => {}
        VolModel::FastCir(f) => y = cir_step(y, f.chi / f.epsilon, f.mu, f.psi / f.epsilon.sqrt(), inc.dw[1], dt),
        VolModel::FastExpOu(f) => y += -(f.theta_r / f.epsilon) * y * dt + f.sigma_hat / f.epsilon.sqrt() * inc.dw[1],
        VolModel::SlowCir(s) => z = cir_step(z, s.delta, s.m_s, s.delta.sqrt() * s.beta_g, inc.dw[2], dt),
        VolModel::Multiscale { fast: f, slow: s } => {
            y = cir_step(y, f.chi / f.epsilon, f.mu, f.psi / f.epsilon.sqrt(), inc.dw[1], dt);
            z = cir_step(z, s.delta, s.m_s, s.delta.sqrt() * s.beta_g, inc.dw[2], dt);
        }
    }
    MarketState {
        q: st.q + u * dt,
        l: st.l + impact_increment(p, st, u, dt),
        x: st.x - p.kappa * st.x * dt + p.eta.sqrt() * inc.dw[0],
        y,
        z,
        p: st.p + price_increment(vol, st, inc, dt),
        t: st.t + dt,
    }
}

/// Realized PnL over one step: `q (dP + dl) - (K/2) u^2 dt`.
pub fn pnl_increment(p: &MarketParams, st: &MarketState, u: f64, dp: f64, dl: f64, dt: f64) -> f64 {
    st.q * (dp + dl) - 0.5 * p.cost_k * u * u * dt
}

/// Order-independent pairwise sum.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PnLStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub std: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub mean_bps: f64,
    pub std_bps: f64,
    pub ci95_lo_bps: f64,
    pub ci95_hi_bps: f64,
}

impl PnLStats {
    pub fn variance(&self) -> f64 {
        self.std * self.std
    }

    /// The 95% interval lies strictly above zero.
    pub fn significantly_positive(&self) -> bool {
        self.ci95_lo > 0.0
    }
}

/// Mean, sample std, `mean +- 1.96 std / sqrt(n)` and their `1e4 / w_ref` scalings.
pub fn pnl_stats(values: &[f64], w_ref: f64) -> Result<PnLStats> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidInput("at least two values are needed for statistics".into()));
    }
    let mean = pairwise_sum(values) / n as f64;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let std = (pairwise_sum(&dev) / (n - 1) as f64).sqrt();
    let half = 1.96 * std / (n as f64).sqrt();
    let bps = 1e4 / w_ref;
    Ok(PnLStats {
        n,
        mean,
        std,
        ci95_lo: mean - half,
        ci95_hi: mean + half,
        mean_bps: mean * bps,
        std_bps: std * bps,
        ci95_lo_bps: (mean - half) * bps,
        ci95_hi_bps: (mean + half) * bps,
    })
}

/// Per-path outcome for both strategies.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PathRecord {
    pub path_id: u64,
    pub pnl_baseline: f64,
    pub pnl_corrected: f64,
    pub objective_baseline: f64,
    pub objective_corrected: f64,
}

impl PathRecord {
    pub fn gain(&self) -> f64 {
        self.pnl_corrected - self.pnl_baseline
    }

    pub fn objective_gain(&self) -> f64 {
        self.objective_corrected - self.objective_baseline
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub baseline: PnLStats,
    pub corrected: PnLStats,
    pub gain: PnLStats,
    pub objective_baseline: PnLStats,
    pub objective_corrected: PnLStats,
    pub objective_gain: PnLStats,
    pub paths: Vec<PathRecord>,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    params: &'a MarketParams,
    vol: &'a VolSpec,
    initial: &'a MarketState,
    pair: &'a StrategyPair,
    chol: Matrix3<f64>,
    n_steps: usize,
}

fn within_guard(st: &MarketState) -> bool {
    [st.q, st.l, st.x, st.y, st.z, st.p].iter().all(|v| v.is_finite() && v.abs() <= OVERFLOW_GUARD)
}

impl Engine<'_> {
    fn run_path(&self, path_id: u64) -> Result<PathRecord> {
        let mut rng = ChaCha12Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(path_id);
        let dt = self.cfg.dt;
        let sqrt_dt = dt.sqrt();
        let p = self.params;
        let strategies = [&self.pair.baseline, &self.pair.corrected];
        let mut exo = *self.initial;
        exo.t = 0.0;
        let mut pos = [(exo.q, exo.l); 2];
        let mut pnl = [0.0; 2];
        let mut obj = [0.0; 2];
        for k in 0..self.n_steps {
            exo.t = k as f64 * dt;
            let n: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let w = self.chol * nalgebra::Vector3::new(n[0], n[1], n[2]) * sqrt_dt;
            let inc = Increments {
                dw: [w[0], w[1], w[2]],
                db: n[3] * sqrt_dt,
            };
            let var = self.vol.variance(exo.y, exo.z);
            let disc = (-p.rho * exo.t).exp();
            let mut next_exo = exo;
            for (i, strat) in strategies.iter().enumerate() {
                let st = MarketState {
                    q: pos[i].0,
                    l: pos[i].1,
                    ..exo
                };
                let u = strat.control(p, &st)?;
                let dp = price_increment(self.vol, &st, &inc, dt);
                let dl = impact_increment(p, &st, u, dt);
                let d = pnl_increment(p, &st, u, dp, dl, dt);
                pnl[i] += d;
                obj[i] += disc * (d - 0.5 * p.gamma * var * st.q * st.q * dt);
                let next = step_dynamics(p, self.vol, &st, u, &inc, dt);
                if !within_guard(&next) || !pnl[i].is_finite() {
                    return Err(Error::UnstableStep { time: next.t });
                }
                pos[i] = (next.q, next.l);
                next_exo = next;
            }
            exo = next_exo;
        }
        Ok(PathRecord {
            path_id,
            pnl_baseline: pnl[0],
            pnl_corrected: pnl[1],
            objective_baseline: obj[0],
            objective_corrected: obj[1],
        })
    }
}

/// Simulate `pair` on common random numbers; paths run in parallel on
/// per-path ChaCha streams, so results do not depend on the thread count.
pub fn simulate_pair(
    cfg: &SimConfig,
    params: &MarketParams,
    vol: &VolSpec,
    initial: &MarketState,
    pair: &StrategyPair,
) -> Result<SimResult> {
    let engine = Engine {
        cfg,
        params,
        vol,
        initial,
        pair,
        chol: correlation_factor(&vol.correlations)?,
        n_steps: cfg.n_steps()?,
    };
    let paths = (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| engine.run_path(i))
        .collect::<Result<Vec<_>>>()?;
    let stats = |f: fn(&PathRecord) -> f64| pnl_stats(&paths.iter().map(f).collect::<Vec<_>>(), cfg.w_ref);
    Ok(SimResult {
        baseline: stats(|r| r.pnl_baseline)?,
        corrected: stats(|r| r.pnl_corrected)?,
        gain: stats(PathRecord::gain)?,
        objective_baseline: stats(|r| r.objective_baseline)?,
        objective_corrected: stats(|r| r.objective_corrected)?,
        objective_gain: stats(PathRecord::objective_gain)?,
        paths,
    })
}

/// Compare the constant-volatility baseline with the corrected strategy for `vol`.
pub fn simulate_compare(cfg: &SimConfig, params: &MarketParams, vol: &VolSpec, initial: &MarketState) -> Result<SimResult> {
    let pair = StrategyPair::for_model(params, vol, CorrectionScales::of(vol), &[initial.z])?;
    simulate_pair(cfg, params, vol, initial, &pair)
}

/// Initial-state coordinate varied by [`sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepVar {
    Y0,
    Z0,
}

/// [`simulate_compare`] at each start value, sharing one strategy pair.
pub fn sweep(
    cfg: &SimConfig,
    params: &MarketParams,
    vol: &VolSpec,
    initial: &MarketState,
    var: SweepVar,
    values: &[f64],
) -> Result<Vec<(f64, SimResult)>> {
    let z_starts: Vec<f64> = match var {
        SweepVar::Z0 => values.to_vec(),
        SweepVar::Y0 => vec![initial.z],
    };
    let pair = StrategyPair::for_model(params, vol, CorrectionScales::of(vol), &z_starts)?;
    values
        .iter()
        .map(|&v| {
            let mut st = *initial;
            match var {
                SweepVar::Y0 => st.y = v,
                SweepVar::Z0 => st.z = v,
            }
            Ok((v, simulate_pair(cfg, params, vol, &st, &pair)?))
        })
        .collect()
}

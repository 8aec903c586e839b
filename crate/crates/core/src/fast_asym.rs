//! Fast volatility factor correction.
//!
//! With `Y` mean-reverting on the time scale `epsilon`, the value function
//! picks up `-epsilon q^2 phi(y) / 2` with
//! `phi(y) = gamma int_0^inf E[sigma^2(Y_t) - <sigma^2> | Y_0 = y] dt`,
//! and the control gains the term `-(epsilon/K) q phi(y)`.

use crate::error::{Error, Result};
use crate::model::{FastCir, FastExpOu, MarketParams, MarketState};
use crate::quadrature::integrate;
use crate::riccati::{control_rate, speed_aim_from, CoeffsA};
use crate::scalar::Real;
use crate::special::{ein, exp_integral_e1, lower_gamma_half, upper_gamma_half, EULER_GAMMA};

/// Default quadrature tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Horizon covering 40 mean-reversion times.
pub fn default_horizon(rate: f64) -> f64 {
    40.0 / rate
}

/// CIR closed form `phi = (gamma/chi)(y - mu)`.
pub fn phi_cir<T: Real>(gamma: T, chi: T, mu: T, y: T) -> T {
    gamma / chi * (y - mu)
}

/// `E[Y_t - mu | Y_0 = y] = e^{-chi t}(y - mu)` for the CIR factor.
pub fn cir_semigroup(chi: f64, mu: f64, y: f64) -> impl Fn(f64) -> f64 {
    move |t| (-chi * t).exp() * (y - mu)
}

/// `E[m^2 e^{2 Y_t}] - <sigma^2>` for `dY = -theta_r Y dt + sigma_hat dW`, `Y_0 = y`.
pub fn expou_semigroup(f: &FastExpOu) -> impl Fn(f64, f64) -> f64 {
    let FastExpOu { m, theta_r, sigma_hat, .. } = *f;
    let c = sigma_hat * sigma_hat / theta_r;
    move |y, t| {
        let u = (-theta_r * t).exp();
        m * m * (c.exp() * ((2.0 * y * u - c * u * u).exp()) - c.exp())
    }
}

/// `gamma int_0^horizon integrand(t) dt` by adaptive quadrature.
///
/// Fails with `NonDecayingIntegrand` if `gamma |integrand(horizon)|` exceeds `tol`,
/// and with `NonConvergence` if the error estimate does not reach `tol`.
pub fn phi_quadrature(gamma: f64, integrand: impl Fn(f64) -> f64, horizon: f64, tol: f64) -> Result<f64> {
    let tail = (gamma * integrand(horizon)).abs();
    if !(tail <= tol) {
        return Err(Error::NonDecayingIntegrand { tail, tol });
    }
    let r = integrate(|t| gamma * integrand(t), 0.0, horizon, tol);
    if r.error > tol {
        return Err(Error::NonConvergence {
            iterations: r.intervals,
            residual: r.error,
        });
    }
    Ok(r.value)
}

/// Exact `phi` for the exponential OU factor by quadrature.
pub fn phi_expou_quadrature(gamma: f64, f: &FastExpOu, y: f64, tol: f64) -> Result<f64> {
    let g = expou_semigroup(f);
    phi_quadrature(gamma, |t| g(y, t), default_horizon(f.theta_r), tol)
}

/// Small-fluctuation expansion of the exponential OU `phi` to second order in `y`.
///
/// With `c = sigma_hat^2 / theta_r`,
/// `phi ~ gamma m^2 e^c / (2 theta_r) [2y gamma(1/2,c)/sqrt(c) - Ein(c) + 2 y^2 (1 - e^-c)/c]`,
/// where `Ein(c) = EULER_GAMMA + Gamma(0,c) + ln c`.
pub fn phi_expou_approx(gamma: f64, m: f64, theta_r: f64, sigma_hat: f64, y: f64) -> f64 {
    let c = sigma_hat * sigma_hat / theta_r;
    let pre = gamma * m * m * c.exp() / (2.0 * theta_r);
    let (lin, quad) = if c > 0.0 {
        (lower_gamma_half(c) / c.sqrt(), (1.0 - (-c).exp()) / c)
    } else {
        (2.0, 1.0)
    };
    pre * (2.0 * y * lin - ein(c) + 2.0 * y * y * quad)
}

/// The closed form as published, with free symbols `alpha` (rate) and `k` (diffusion):
/// `gamma m^2 e^{k^2/alpha}/(2 alpha) [4y Gamma(1/2, k/alpha^2) - (EULER_GAMMA + Gamma(0, k^2/alpha) + ln(k^2/alpha))]`.
pub fn phi_expou_printed(gamma: f64, m: f64, alpha: f64, k: f64, y: f64) -> f64 {
    let c = k * k / alpha;
    gamma * m * m * c.exp() / (2.0 * alpha)
        * (4.0 * y * upper_gamma_half(k / (alpha * alpha)) - (EULER_GAMMA + exp_integral_e1(c) + c.ln()))
}

/// Poisson-equation residual for the CIR correction:
/// `L0 v2 - (gamma/2)(y - mu) q^2` with `v2 = -(gamma/(2 chi))(y - mu) q^2` and
/// `L0 = 1/2 psi^2 y d_yy + chi (mu - y) d_y`.
pub fn poisson_residual_cir(gamma: f64, f: &FastCir, y: f64, q: f64) -> f64 {
    let dv = -gamma / (2.0 * f.chi) * q * q;
    let d2v = 0.0;
    0.5 * f.psi * f.psi * y * d2v + f.chi * (f.mu - y) * dv - 0.5 * gamma * (y - f.mu) * q * q
}

/// Leading-order coefficients with the fast correction at one `y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastCorrection<T = f64> {
    pub phi: T,
    pub epsilon: T,
    /// Coefficients solved at `<sigma^2>`.
    pub base: CoeffsA<T>,
}

impl<T: Real> FastCorrection<T> {
    pub fn control(&self, p: &MarketParams<T>, st: &MarketState<T>) -> T {
        corrected_control_fast(p, &self.base, self.phi, self.epsilon, st)
    }

    pub fn speed_aim(&self, p: &MarketParams<T>, st: &MarketState<T>) -> Result<(T, T)> {
        speed_aim_fast(p, &self.base, self.phi, self.epsilon, st)
    }
}

/// Constant-volatility control at `base` minus `(epsilon/K) q phi`.
pub fn corrected_control_fast<T: Real>(p: &MarketParams<T>, base: &CoeffsA<T>, phi: T, epsilon: T, st: &MarketState<T>) -> T {
    control_rate(p, base, st) - epsilon / p.cost_k * st.q * phi
}

/// `speed = r^c + epsilon phi / K`, `aim = (w l + e x) / (a_qq - lambda - lambda a_ql + epsilon phi)`.
pub fn speed_aim_fast<T: Real>(p: &MarketParams<T>, base: &CoeffsA<T>, phi: T, epsilon: T, st: &MarketState<T>) -> Result<(T, T)> {
    let lam = p.lambda;
    let ephi = epsilon * phi;
    let denom = -base.s(lam) + ephi;
    let target = base.w(lam) * st.l + base.e(lam) * st.x;
    speed_aim_from(denom, p.cost_k, target, [base.a_qq, lam, lam * base.a_ql + ephi.abs()])
}

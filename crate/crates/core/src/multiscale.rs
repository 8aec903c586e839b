//! Combined fast and slow corrections for `sigma^2(y, z) = y z`, where the fast
//! CIR factor averages to `mu` so that `<sigma^2>(z) = mu z`.

use crate::error::Result;
use crate::fast_asym::{corrected_control_fast, phi_cir};
use crate::model::{FastCir, MarketParams, MarketState, SlowCir};
use crate::riccati::{aim_and_speed, speed_aim_from, CoeffsA};
use crate::scalar::Real;
use crate::slow_asym::{CoeffsB, SlowModel, SlowPoint};

/// `phi(y, z) = (gamma/chi) z (y - mu)`.
pub fn phi_multiscale_cir<T: Real>(gamma: T, chi: T, mu: T, y: T, z: T) -> T {
    z * phi_cir(gamma, chi, mu, y)
}

/// Base control at `mu z` plus `(sqrt(delta)/K)(b_q + lambda b_l) - (epsilon/K) q phi`.
pub fn corrected_control_multiscale<T: Real>(
    p: &MarketParams<T>,
    base: &CoeffsA<T>,
    b: &CoeffsB<T>,
    phi: T,
    epsilon: T,
    delta: T,
    st: &MarketState<T>,
) -> T {
    corrected_control_fast(p, base, phi, epsilon, st) + delta.sqrt() / p.cost_k * b.control_shift(p.lambda)
}

/// `speed = r^c + epsilon phi / K` and `aim = q + u / speed`, so that
/// `speed (aim - q) = u` holds exactly.
pub fn speed_aim_multiscale<T: Real>(
    p: &MarketParams<T>,
    base: &CoeffsA<T>,
    b: &CoeffsB<T>,
    phi: T,
    epsilon: T,
    delta: T,
    st: &MarketState<T>,
) -> Result<(T, T)> {
    let lam = p.lambda;
    let ephi = epsilon * phi;
    let denom = -base.s(lam) + ephi;
    let target = base.w(lam) * st.l + base.e(lam) * st.x + delta.sqrt() * b.control_shift(lam);
    // target/denom = q + u/speed since u = (target - denom q)/K
    speed_aim_from(denom, p.cost_k, target, [base.a_qq, lam, lam * base.a_ql + ephi.abs()])
}

/// Published aim decomposition
/// `aim^c (1 - epsilon phi / d) + sqrt(delta)(b_q + lambda b_l)/(d + epsilon phi)`,
/// `d = a_qq - lambda - lambda a_ql`; it matches [`speed_aim_multiscale`] only to first order.
pub fn printed_aim_multiscale<T: Real>(
    p: &MarketParams<T>,
    base: &CoeffsA<T>,
    b: &CoeffsB<T>,
    phi: T,
    epsilon: T,
    delta: T,
    st: &MarketState<T>,
) -> Result<T> {
    let (_, aim_c) = aim_and_speed(p, base, st)?;
    let d = -base.s(p.lambda);
    let ephi = epsilon * phi;
    Ok(aim_c * (T::one() - ephi / d) + delta.sqrt() * b.control_shift(p.lambda) / (d + ephi))
}

/// Strategy ingredients for the multiplicative model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MultiscaleModel<T = f64> {
    pub params: MarketParams<T>,
    pub fast: FastCir<T>,
    pub slow: SlowCir<T>,
    pub rho2: T,
}

impl<T: Real> MultiscaleModel<T> {
    /// Slow pipeline on the averaged variance `mu z`.
    pub fn slow_model(&self) -> SlowModel<T> {
        SlowModel {
            params: self.params,
            factor: self.slow,
            rho2: self.rho2,
            scale: self.fast.mu,
        }
    }

    pub fn point(&self, z: T) -> Result<SlowPoint<T>> {
        self.slow_model().point(z)
    }

    pub fn phi(&self, y: T, z: T) -> T {
        phi_multiscale_cir(self.params.gamma, self.fast.chi, self.fast.mu, y, z)
    }

    pub fn control(&self, pt: &SlowPoint<T>, st: &MarketState<T>) -> T {
        let phi = self.phi(st.y, st.z);
        corrected_control_multiscale(&self.params, &pt.a, &pt.b, phi, self.fast.epsilon, self.slow.delta, st)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fast_asym::speed_aim_fast;
    use crate::quadrature::integrate;
    use crate::riccati::{control_rate, solve_constant_vol};
    use crate::slow_asym::{corrected_control_slow, speed_aim_slow};

    fn model() -> MultiscaleModel {
        MultiscaleModel {
            params: MarketParams {
                rho: 0.2,
                gamma: 5.0,
                cost_k: 1.0,
                lambda: 0.1,
                beta: 0.1,
                kappa: 1.0,
                eta: 1.0,
            },
            fast: FastCir {
                chi: 1.0,
                mu: 0.2,
                psi: 0.25,
                epsilon: 0.25,
            },
            slow: SlowCir {
                m_s: 1.0,
                beta_g: 0.25,
                delta: 0.0625,
            },
            rho2: 0.5,
        }
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_multiscale_cir(2.0, 1.0, 0.2, 0.2, 0.5), 0.0);
        assert_eq!(phi_multiscale_cir(2.0, 1.0, 0.2, 0.7, 0.0), 0.0);
        let q = integrate(|t: f64| 2.0 * (-t).exp() * 0.5 * 0.2, 0.0, 40.0, 1e-12).value;
        assert!((phi_multiscale_cir(2.0f64, 1.0, 0.2, 0.4, 0.5) - 0.2).abs() < 1e-15);
        assert!((q - 0.2).abs() < 1e-12);
    }

    #[test]
    fn commuting_limits_are_exact() {
        let m = model();
        let p = &m.params;
        let pt = m.point(0.8).unwrap();
        let st = MarketState::new(0.6, -0.3, 1.2);
        let phi = m.phi(0.35, 0.8);
        let b0 = CoeffsB::default();
        assert_eq!(
            corrected_control_multiscale(p, &pt.a, &pt.b, phi, 0.0, 0.0, &st),
            control_rate(p, &pt.a, &st)
        );
        assert_eq!(
            corrected_control_multiscale(p, &pt.a, &pt.b, phi, 0.25, 0.0, &st),
            corrected_control_fast(p, &pt.a, phi, 0.25, &st)
        );
        assert_eq!(
            corrected_control_multiscale(p, &pt.a, &pt.b, phi, 0.0, 0.0625, &st),
            corrected_control_slow(p, &pt.a, &pt.b, 0.0625, &st)
        );
        assert_eq!(
            speed_aim_multiscale(p, &pt.a, &b0, phi, 0.25, 0.0625, &st),
            speed_aim_fast(p, &pt.a, phi, 0.25, &st)
        );
        let (s_m, a_m) = speed_aim_multiscale(p, &pt.a, &pt.b, 0.0, 0.0, 0.0625, &st).unwrap();
        let (s_s, a_s) = speed_aim_slow(p, &pt.a, &pt.b, 0.0625, &st).unwrap();
        assert_eq!(s_m, s_s);
        assert!((a_m - a_s).abs() < 1e-14);
        assert_eq!(
            speed_aim_multiscale(p, &pt.a, &b0, 0.0, 0.25, 0.0625, &st),
            aim_and_speed(p, &pt.a, &st)
        );
    }

    #[test]
    fn base_uses_averaged_variance() {
        let m = model();
        let pt = m.point(0.8).unwrap();
        assert_eq!(pt.a, solve_constant_vol(&m.params, 0.2 * 0.8).unwrap());
    }

    #[test]
    fn identity_and_printed_diagnostic() {
        let m = model();
        let pt = m.point(0.8).unwrap();
        let mut st = MarketState::new(0.6, -0.3, 1.2);
        st.y = 0.35;
        st.z = 0.8;
        let phi = m.phi(st.y, st.z);
        let u = m.control(&pt, &st);
        let (speed, aim) = speed_aim_multiscale(&m.params, &pt.a, &pt.b, phi, 0.25, 0.0625, &st).unwrap();
        assert!((speed * (aim - st.q) - u).abs() < 1e-12);
        let (speed_c, aim_c) = aim_and_speed(&m.params, &pt.a, &st).unwrap();
        assert!(speed != speed_c && aim != aim_c);
        let printed = printed_aim_multiscale(&m.params, &pt.a, &pt.b, phi, 0.25, 0.0625, &st).unwrap();
        assert!((printed - aim).abs() > 1e-6);
        // the discrepancy is second order in epsilon
        let at = |eps: f64| {
            let (_, a) = speed_aim_multiscale(&m.params, &pt.a, &pt.b, phi, eps, 0.0, &st).unwrap();
            (printed_aim_multiscale(&m.params, &pt.a, &pt.b, phi, eps, 0.0, &st).unwrap() - a).abs()
        };
        let ratio = at(0.02) / at(0.01);
        assert!((3.8..4.2).contains(&ratio), "{ratio}");
    }
}

//! Randomized invariants across modules.

use proptest::prelude::*;

use crate::cli::fmt_num;
use crate::fast_asym::{corrected_control_fast, phi_cir, speed_aim_fast};
use crate::model::{MarketParams, MarketState, SlowCir};
use crate::montecarlo::{pnl_stats, Pchip};
use crate::multiscale::{corrected_control_multiscale, speed_aim_multiscale};
use crate::riccati::{aim_and_speed, control_rate, is_admissible, max_abs_residual, solve_constant_vol, CoeffsA};
use crate::sensitivity::coefficients_and_derivative;
use crate::slow_asym::{corrected_control_slow, speed_aim_slow, SlowModel};
use crate::Error;

fn params() -> impl Strategy<Value = MarketParams> {
    (0.05..0.5f64, 0.5..10.0f64, 0.2..5.0f64, 0.0..0.5f64, 0.0..0.5f64, 0.2..3.0f64, 0.2..3.0f64).prop_map(
        |(rho, gamma, cost_k, lambda, beta, kappa, eta)| MarketParams {
            rho,
            gamma,
            cost_k,
            lambda,
            beta,
            kappa,
            eta,
        },
    )
}

/// Low variance with nearly permanent impact has no admissible solution;
/// that is the only failure tolerated.
fn admissible(p: &MarketParams, sigma2: f64) -> Option<CoeffsA> {
    match solve_constant_vol(p, sigma2) {
        Ok(c) => Some(c),
        Err(Error::NoAdmissibleRoot) => None,
        Err(e) => panic!("unexpected solver failure: {e}"),
    }
}

fn state() -> impl Strategy<Value = MarketState> {
    (-5.0..5.0f64, -2.0..2.0f64, -5.0..5.0f64, 0.01..1.0f64, 0.05..1.0f64).prop_map(|(q, l, x, y, z)| MarketState {
        y,
        z,
        ..MarketState::new(q, l, x)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solver_meets_residual_bound(p in params(), sigma in 0.1..3.0f64) {
        let c = admissible(&p, sigma * sigma);
        prop_assume!(c.is_some());
        let c = c.unwrap();
        prop_assert!(is_admissible(&p, &c));
        prop_assert!(max_abs_residual(&p, sigma * sigma, &c) < 1e-10);
    }

    #[test]
    fn constant_vol_identity(p in params(), sigma in 0.1..3.0f64, st in state()) {
        let c = admissible(&p, sigma * sigma);
        prop_assume!(c.is_some());
        let c = c.unwrap();
        let (speed, aim) = aim_and_speed(&p, &c, &st).unwrap();
        prop_assert!(speed > 0.0);
        let u = control_rate(&p, &c, &st);
        prop_assert!((speed * (aim - st.q) - u).abs() <= 1e-10 * (1.0 + u.abs()));
    }

    #[test]
    fn fast_identity(p in params(), st in state(), eps in 0.0..0.5f64) {
        let c = admissible(&p, 0.2);
        prop_assume!(c.is_some());
        let c = c.unwrap();
        let phi = phi_cir(p.gamma, 1.0, 0.2, st.y);
        if let Ok((speed, aim)) = speed_aim_fast(&p, &c, phi, eps, &st) {
            let u = corrected_control_fast(&p, &c, phi, eps, &st);
            prop_assert!((speed * (aim - st.q) - u).abs() <= 1e-10 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn slow_and_multiscale_identity(p in params(), st in state(), rho2 in -0.9..0.9f64) {
        let model = SlowModel {
            params: p,
            factor: SlowCir { m_s: 0.2, beta_g: 0.25, delta: 0.0625 },
            rho2,
            scale: 0.2,
        };
        prop_assume!(admissible(&p, 0.2 * st.z).is_some());
        let pt = model.point(st.z).unwrap();
        let u = corrected_control_slow(&p, &pt.a, &pt.b, 0.0625, &st);
        let (speed, aim) = speed_aim_slow(&p, &pt.a, &pt.b, 0.0625, &st).unwrap();
        prop_assert!((speed * (aim - st.q) - u).abs() <= 1e-10 * (1.0 + u.abs()));

        let phi = phi_cir(p.gamma, 1.0, 0.2, st.y) * st.z;
        if let Ok((speed, aim)) = speed_aim_multiscale(&p, &pt.a, &pt.b, phi, 0.25, 0.0625, &st) {
            let u = corrected_control_multiscale(&p, &pt.a, &pt.b, phi, 0.25, 0.0625, &st);
            prop_assert!((speed * (aim - st.q) - u).abs() <= 1e-10 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn derivative_is_linear_in_sigma_prime(p in params(), sigma in 0.2..2.0f64, sp in 0.01..2.0f64) {
        prop_assume!(admissible(&p, sigma * sigma).is_some());
        let (_, d1) = coefficients_and_derivative(&p, sigma, sp).unwrap();
        let (_, d2) = coefficients_and_derivative(&p, sigma, 2.0 * sp).unwrap();
        for (a, b) in d1.to_array().iter().zip(d2.to_array()) {
            prop_assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn stats_interval_is_symmetric(v in prop::collection::vec(-1e3..1e3f64, 2..200), w in 1.0..1e6f64) {
        let s = pnl_stats(&v, w).unwrap();
        let half = 1.96 * s.std / (v.len() as f64).sqrt();
        prop_assert!((s.ci95_hi - s.mean - half).abs() <= 1e-9 * (1.0 + s.mean.abs()));
        prop_assert!((s.mean - s.ci95_lo - half).abs() <= 1e-9 * (1.0 + s.mean.abs()));
        prop_assert!((s.mean_bps - 1e4 * s.mean / w).abs() <= 1e-9 * (1.0 + s.mean_bps.abs()));
    }

    #[test]
    fn pchip_preserves_monotone_data(steps in prop::collection::vec((0.01..1.0f64, 0.0..2.0f64), 3..30), t in 0.0..1.0f64) {
        let mut x = vec![0.0];
        let mut y = vec![[0.0]];
        for (dx, dy) in &steps {
            x.push(x.last().unwrap() + dx);
            y.push([y.last().unwrap()[0] + dy]);
        }
        let p = Pchip::new(x.clone(), y.clone()).unwrap();
        let span = x.last().unwrap();
        let a = p.eval(t * span)[0];
        let b = p.eval((t * span + 0.01).min(*span))[0];
        prop_assert!(b >= a - 1e-12);
        prop_assert!(a >= -1e-12 && a <= y.last().unwrap()[0] + 1e-12);
    }

    #[test]
    fn number_format_keeps_twelve_digits(v in -1e12..1e12f64) {
        let s = fmt_num(v);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - v).abs() <= 1e-11 * v.abs().max(1e-300));
    }
}

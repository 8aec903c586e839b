//! Special functions used by the exponential OU correction.

use statrs::function::erf::{erf, erfc};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = Gamma(0, x)` for `x > 0`.
///
/// Power series below 1, modified Lentz continued fraction above.
pub fn exp_integral_e1(x: f64) -> f64 {
    if x <= 0.0 {
        return if x == 0.0 { f64::INFINITY } else { f64::NAN };
    }
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Lower incomplete gamma `gamma(1/2, x) = sqrt(pi) erf(sqrt x)`.
pub fn lower_gamma_half(x: f64) -> f64 {
    std::f64::consts::PI.sqrt() * erf(x.sqrt())
}

/// Upper incomplete gamma `Gamma(1/2, x) = sqrt(pi) erfc(sqrt x)`.
pub fn upper_gamma_half(x: f64) -> f64 {
    std::f64::consts::PI.sqrt() * erfc(x.sqrt())
}

/// `Ein(x) = EULER_GAMMA + ln x + E1(x) = int_0^x (1 - e^-t)/t dt`, computed
/// by series for small `x` to avoid cancellation.
pub fn ein(x: f64) -> f64 {
    if x < 1.0 {
        let mut sum = 0.0;
        let mut term = -1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        EULER_GAMMA + x.ln() + exp_integral_e1(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    #[test]
    fn e1_reference_values() {
        for (x, v) in [(0.1, 1.822_923_958_419_390_7), (1.0, 0.219_383_934_395_520_27), (5.0, 0.001_148_295_591_275_325_8)] {
            assert!((exp_integral_e1(x) - v).abs() < 1e-14 * v.max(1.0), "{x}");
        }
    }

    #[test]
    fn e1_matches_quadrature() {
        for x in [0.3, 1.0, 2.5] {
            let q = integrate(|t| (-t).exp() / t, x, x + 60.0, 1e-13).value;
            assert!((exp_integral_e1(x) - q).abs() < 1e-12);
        }
    }

    #[test]
    fn incomplete_gamma_half() {
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((upper_gamma_half(0.0) - sqrt_pi).abs() < 1e-15);
        assert_eq!(lower_gamma_half(0.0), 0.0);
        let x = 0.7;
        assert!((lower_gamma_half(x) + upper_gamma_half(x) - sqrt_pi).abs() < 1e-14);
    }

    #[test]
    fn ein_is_continuous_and_small() {
        assert!((ein(1.0 - 1e-12) - ein(1.0)).abs() < 1e-11);
        assert!((ein(1e-6) - 1e-6).abs() < 1e-12);
    }
}

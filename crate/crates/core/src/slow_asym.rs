//! Slow volatility factor correction.
//!
//! With `Z` moving on the slow scale `delta`, the value function expands as
//! `v0(z) + sqrt(delta) v1 + delta v2`, where `v0` is the constant-volatility
//! solution at `sigma^2(z)`, `v1 = B_q q + B_l l + B_x x` and `v2` is quadratic
//! with coefficients `D`. `M2 = g(z)^2/2 d_zz + c(z) d_z` is the slow generator.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{MarketParams, MarketState, SlowCir};
use crate::riccati::{aim_and_speed, control_rate, solve_constant_vol, CoeffsA};
use crate::scalar::Real;
use crate::sensitivity::{
    assemble_derivative_system, default_second_step, default_step, second_derivatives_fd, solve_derivatives,
    CoeffsAPrime, RhsConvention,
};

/// First-order correction `v1 = b_q q + b_l l + b_x x`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoeffsB<T = f64> {
    pub b_q: T,
    pub b_l: T,
    pub b_x: T,
}

impl<T: Real> CoeffsB<T> {
    pub const NAMES: [&'static str; 3] = ["b_q", "b_l", "b_x"];

    pub fn to_array(&self) -> [T; 3] {
        [self.b_q, self.b_l, self.b_x]
    }

    /// `b_q + lambda b_l`, the loading of the control shift.
    pub fn control_shift(&self, lambda: T) -> T {
        self.b_q + lambda * self.b_l
    }
}

/// Second-order correction
/// `v2 = 1/2 d_qq q^2 + 1/2 d_ll l^2 + 1/2 d_xx x^2 + d_ql q l + d_qx q x + d_xl x l + d_0`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoeffsD<T = f64> {
    pub d_qq: T,
    pub d_xx: T,
    pub d_ll: T,
    pub d_qx: T,
    pub d_ql: T,
    pub d_xl: T,
    pub d_0: T,
}

impl<T: Real> CoeffsD<T> {
    pub const NAMES: [&'static str; 7] = ["d_qq", "d_xx", "d_ll", "d_qx", "d_ql", "d_xl", "d_0"];

    pub fn to_array(&self) -> [T; 7] {
        [self.d_qq, self.d_xx, self.d_ll, self.d_qx, self.d_ql, self.d_xl, self.d_0]
    }

    /// System order `(qq, ql, qx, ll, xl, xx, 0)`.
    fn from_system(a: [T; 7]) -> Self {
        CoeffsD {
            d_qq: a[0],
            d_ql: a[1],
            d_qx: a[2],
            d_ll: a[3],
            d_xl: a[4],
            d_xx: a[5],
            d_0: a[6],
        }
    }

    fn to_system(&self) -> [T; 7] {
        [self.d_qq, self.d_ql, self.d_qx, self.d_ll, self.d_xl, self.d_xx, self.d_0]
    }
}

/// Matrix and right-hand side of the `B` system, rows `q`, `l`, `x`.
fn b_system<T: Real>(p: &MarketParams<T>, a: &CoeffsA<T>, ap: &CoeffsAPrime<T>, g_z: T, rho2: T) -> ([[T; 3]; 3], [T; 3]) {
    let k = p.cost_k;
    let lam = p.lambda;
    let (s, w, e) = (a.s(lam), a.w(lam), a.e(lam));
    let f = p.eta.sqrt() * rho2 * g_z;
    let z = T::zero();
    let m = [
        [s / k - p.rho, lam * s / k, z],
        [w / k, lam * w / k - p.rho - p.beta, z],
        [e / k, lam * e / k, -(p.rho + p.kappa)],
    ];
    (m, [-f * ap.a_qx, -f * ap.a_xl, -f * ap.a_xx])
}

/// Solve the three coefficient equations of the first-order correction.
pub fn solve_b<T: Real>(p: &MarketParams<T>, a: &CoeffsA<T>, ap: &CoeffsAPrime<T>, g_z: T, rho2: T) -> Result<CoeffsB<T>> {
    let (m, rhs) = b_system(p, a, ap, g_z, rho2);
    let [b_q, b_l, b_x] = linalg::solve(m, rhs)?;
    Ok(CoeffsB { b_q, b_l, b_x })
}

/// Residuals of the `B` equations, each relative to its largest term.
pub fn b_residuals<T: Real>(p: &MarketParams<T>, a: &CoeffsA<T>, ap: &CoeffsAPrime<T>, g_z: T, rho2: T, b: &CoeffsB<T>) -> [T; 3] {
    let (m, rhs) = b_system(p, a, ap, g_z, rho2);
    let x = b.to_array();
    std::array::from_fn(|i| {
        let terms = [m[i][0] * x[0], m[i][1] * x[1], m[i][2] * x[2], rhs[i]];
        let scale = terms.iter().fold(T::min_positive_value(), |acc, t| acc.max(t.abs()));
        (terms[0] + terms[1] + terms[2] - rhs[i]) / scale
    })
}

/// `Gamma(z)` as published; equals `-K` times the determinant of the `(B_q, B_l)` block.
pub fn gamma_z<T: Real>(p: &MarketParams<T>, a: &CoeffsA<T>) -> T {
    let (k, rho, lam, beta) = (p.cost_k, p.rho, p.lambda, p.beta);
    beta * lam - rho * a.a_qq - beta * a.a_qq + lam * rho - k * rho * rho + beta * lam * a.a_ql
        + T::two() * lam * rho * a.a_ql
        - k * beta * rho
        + lam * lam * rho * a.a_ll
}

/// Published closed forms for `B`, used as a cross-check.
pub fn closed_form_b<T: Real>(p: &MarketParams<T>, a: &CoeffsA<T>, ap: &CoeffsAPrime<T>, g_z: T, rho2: T) -> Result<CoeffsB<T>> {
    let gamma = gamma_z(p, a);
    if gamma.abs() < T::lit(1e-12) {
        return Err(Error::DegenerateGamma {
            gamma: gamma.to_f64_lossy(),
        });
    }
    let (k, rho, lam, beta, kappa) = (p.cost_k, p.rho, p.lambda, p.beta, p.kappa);
    let pre = -(p.eta.sqrt()) * rho2 * g_z / gamma;
    let two = T::two();
    let lam2 = lam * lam;
    let b_q = pre
        * (ap.a_xl * lam2 - a.a_ql * ap.a_qx * lam - a.a_qq * ap.a_xl * lam + ap.a_qx * k * beta + ap.a_qx * k * rho
            - a.a_ll * ap.a_qx * lam2
            + a.a_ql * ap.a_xl * lam2);
    let b_l = pre
        * (a.a_ql * ap.a_qx - ap.a_xl * lam + a.a_qq * ap.a_xl + a.a_ll * ap.a_qx * lam - a.a_ql * ap.a_xl * lam
            + ap.a_xl * k * rho);
    let b_x = pre / (kappa + rho)
        * (a.a_qx * ap.a_qx * beta + a.a_qq * ap.a_xx * beta + a.a_qx * ap.a_qx * rho + a.a_qq * ap.a_xx * rho
            - ap.a_xx * beta * lam
            - ap.a_xx * lam * rho
            + ap.a_xx * k * rho * rho
            - a.a_ll * ap.a_xx * lam2 * rho
            + a.a_xl * ap.a_xl * lam2 * rho
            - a.a_ql * ap.a_xx * beta * lam
            + ap.a_qx * a.a_xl * beta * lam
            - two * a.a_ql * ap.a_xx * lam * rho
            + a.a_qx * ap.a_xl * lam * rho
            + ap.a_qx * a.a_xl * lam * rho
            + ap.a_xx * k * beta * rho);
    Ok(CoeffsB { b_q, b_l, b_x })
}

/// Outcome of comparing the published `B` closed forms with the linear solve.
#[derive(Clone, Debug, PartialEq)]
pub struct BCrossCheck {
    pub solved: CoeffsB,
    pub closed_form: Option<CoeffsB>,
    pub gamma: f64,
    /// Largest `|closed - solved| / max(|solved|, 1e-12)` over the three slots.
    pub max_relative_diff: Option<f64>,
    pub agrees: bool,
    /// Discrepancy report, empty on agreement.
    pub report: String,
}

/// Compare [`closed_form_b`] with [`solve_b`]; agreement means `1e-8` relative.
pub fn cross_check_b(p: &MarketParams, a: &CoeffsA, ap: &CoeffsAPrime, g_z: f64, rho2: f64) -> Result<BCrossCheck> {
    let solved = solve_b(p, a, ap, g_z, rho2)?;
    let gamma = gamma_z(p, a);
    let closed = closed_form_b(p, a, ap, g_z, rho2);
    let (closed_form, diff) = match closed {
        Ok(c) => {
            let d = solved
                .to_array()
                .iter()
                .zip(c.to_array())
                .map(|(s, c)| (c - s).abs() / s.abs().max(1e-12))
                .fold(0.0, f64::max);
            (Some(c), Some(d))
        }
        Err(_) => (None, None),
    };
    let agrees = diff.is_some_and(|d| d <= 1e-8);
    let sign_note = if gamma < 0.0 {
        format!("Gamma(z) = {gamma:.6e} < 0, contrary to the stated positivity; ")
    } else {
        String::new()
    };
    let report = match (agrees, diff) {
        (true, _) if sign_note.is_empty() => String::new(),
        (true, _) => format!("{sign_note}closed forms agree with the linear solve"),
        (false, Some(d)) => format!("{sign_note}closed forms differ from the linear solve by {d:.3e} (relative)"),
        (false, None) => format!("{sign_note}closed forms undefined (|Gamma| < 1e-12)"),
    };
    Ok(BCrossCheck {
        solved,
        closed_form,
        gamma,
        max_relative_diff: diff,
        agrees,
        report,
    })
}

/// Forcing of the second-order system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DForcing<T = f64> {
    /// `M2 A = g^2/2 A'' + c A'`, per coefficient.
    pub m2a: CoeffsA<T>,
    pub b: CoeffsB<T>,
    /// `d B_x / dz`.
    pub b_x_prime: T,
    pub g_z: T,
    pub rho2: T,
}

impl<T: Real> DForcing<T> {
    pub fn new(a_prime: &CoeffsAPrime<T>, a_second: &CoeffsAPrime<T>, b: CoeffsB<T>, b_x_prime: T, c_z: T, g_z: T, rho2: T) -> Self {
        let half_g2 = T::half() * g_z * g_z;
        DForcing {
            m2a: a_second.zip_with(a_prime, |a2, a1| half_g2 * a2 + c_z * a1),
            b,
            b_x_prime,
            g_z,
            rho2,
        }
    }
}

/// Matrix and right-hand side of the `D` system in system order.
fn d_system<T: Real>(p: &MarketParams<T>, a: &CoeffsA<T>, f: &DForcing<T>) -> ([[T; 7]; 7], [T; 7]) {
    let k = p.cost_k;
    let lam = p.lambda;
    let half = T::half();
    let (s, w, e) = (a.s(lam) / k, a.w(lam) / k, a.e(lam) / k);
    let (rho, beta, kappa) = (p.rho, p.beta, p.kappa);
    let z = T::zero();
    // unknowns: qq, ql, qx, ll, xl, xx, 0
    let m = [
        [s - half * rho, lam * s, z, z, z, z, z],
        [w, lam * w + s - (rho + beta), z, lam * s, z, z, z],
        [e, lam * e, s - (rho + kappa), z, lam * s, z, z],
        [z, w, z, lam * w - (half * rho + beta), z, z, z],
        [z, e, w, lam * e, lam * w - (rho + beta + kappa), z, z],
        [z, z, e, z, lam * e, -(half * rho + kappa), z],
        [z, z, z, z, z, half * p.eta, -rho],
    ];
    let u = f.b.control_shift(lam);
    let c = &f.m2a;
    let rhs = [
        half * c.a_qq,
        -c.a_ql,
        -c.a_qx,
        -half * c.a_ll,
        -c.a_xl,
        -half * c.a_xx,
        -(c.a_0 + u * u / (T::two() * k) + p.eta.sqrt() * f.g_z * f.rho2 * f.b_x_prime),
    ];
    (m, rhs)
}

/// Solve the seven coefficient equations of the second-order correction.
pub fn solve_d<T: Real>(p: &MarketParams<T>, a: &CoeffsA<T>, f: &DForcing<T>) -> Result<CoeffsD<T>> {
    let (m, rhs) = d_system(p, a, f);
    linalg::solve(m, rhs).map(CoeffsD::from_system)
}

/// `||M d - rhs||_inf` of the `D` system.
pub fn d_system_residual<T: Real>(p: &MarketParams<T>, a: &CoeffsA<T>, f: &DForcing<T>, d: &CoeffsD<T>) -> T {
    let (m, rhs) = d_system(p, a, f);
    let md = linalg::mat_vec(&m, &d.to_system());
    linalg::norm_inf(&std::array::from_fn::<T, 7, _>(|i| md[i] - rhs[i]))
}

/// Order-`delta` equation evaluated pointwise at `(q, l, x)` from the value
/// functions themselves, independently of the coefficient matching:
/// `-rho v2 - beta l v2_l - kappa x v2_x + eta/2 v2_xx + (v2_q + lambda v2_l)(lambda q + v0_q + lambda v0_l)/K
///  + (v1_q + lambda v1_l)^2/(2K) + M2 v0 + sqrt(eta) rho2 g B_x'`.
pub fn d_pde_residual<T: Real>(p: &MarketParams<T>, a: &CoeffsA<T>, f: &DForcing<T>, d: &CoeffsD<T>, q: T, l: T, x: T) -> T {
    let half = T::half();
    let lam = p.lambda;
    let v2 = half * d.d_qq * q * q + half * d.d_ll * l * l + half * d.d_xx * x * x + d.d_ql * q * l + d.d_qx * q * x + d.d_xl * x * l + d.d_0;
    let v2_q = d.d_qq * q + d.d_ql * l + d.d_qx * x;
    let v2_l = d.d_ll * l + d.d_ql * q + d.d_xl * x;
    let v2_x = d.d_xx * x + d.d_qx * q + d.d_xl * l;
    let v2_xx = d.d_xx;
    let v0_q = -a.a_qq * q + a.a_ql * l + a.a_qx * x;
    let v0_l = a.a_ll * l + a.a_ql * q + a.a_xl * x;
    let c = &f.m2a;
    let m2v0 = -half * c.a_qq * q * q + half * c.a_ll * l * l + half * c.a_xx * x * x + c.a_ql * q * l + c.a_qx * q * x + c.a_xl * x * l + c.a_0;
    let u = f.b.control_shift(lam);
    -p.rho * v2 - p.beta * l * v2_l - p.kappa * x * v2_x
        + half * p.eta * v2_xx
        + (v2_q + lam * v2_l) * (lam * q + v0_q + lam * v0_l) / p.cost_k
        + u * u / (T::two() * p.cost_k)
        + m2v0
        + p.eta.sqrt() * f.rho2 * f.g_z * f.b_x_prime
}

/// Constant-volatility control at `sigma^2(z)` plus `(sqrt(delta)/K)(b_q + lambda b_l)`.
pub fn corrected_control_slow<T: Real>(p: &MarketParams<T>, a: &CoeffsA<T>, b: &CoeffsB<T>, delta: T, st: &MarketState<T>) -> T {
    control_rate(p, a, st) + delta.sqrt() / p.cost_k * b.control_shift(p.lambda)
}

/// Speed unchanged, aim shifted by `sqrt(delta)(b_q + lambda b_l)/(a_qq - lambda - lambda a_ql)`.
pub fn speed_aim_slow<T: Real>(p: &MarketParams<T>, a: &CoeffsA<T>, b: &CoeffsB<T>, delta: T, st: &MarketState<T>) -> Result<(T, T)> {
    let (speed, aim) = aim_and_speed(p, a, st)?;
    let denom = -a.s(p.lambda);
    Ok((speed, aim + delta.sqrt() * b.control_shift(p.lambda) / denom))
}

/// Slow-factor pipeline along `z` for a CIR factor driving the variance
/// `sigma^2(z) = scale z` (`scale = 1` for a single slow factor, `mu` in the
/// multiscale model).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlowModel<T = f64> {
    pub params: MarketParams<T>,
    pub factor: SlowCir<T>,
    pub rho2: T,
    pub scale: T,
}

/// Everything the slow correction needs at one `z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlowPoint<T = f64> {
    pub z: T,
    pub a: CoeffsA<T>,
    pub a_prime: CoeffsAPrime<T>,
    pub b: CoeffsB<T>,
}

impl<T: Real> SlowModel<T> {
    pub fn sigma(&self, z: T) -> T {
        (self.scale * z.max(T::zero())).sqrt()
    }

    pub fn sigma_prime(&self, z: T) -> T {
        self.scale / (T::two() * self.sigma(z))
    }

    fn check_z(&self, z: T) -> Result<()> {
        if z > T::zero() && z.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("slow factor level must be > 0 (got {z})")))
        }
    }

    /// `A(z)` and `A'(z)` by the linearised system.
    pub fn coefficients(&self, z: T) -> Result<(CoeffsA<T>, CoeffsAPrime<T>)> {
        self.check_z(z)?;
        let p = &self.params;
        let a = solve_constant_vol(p, self.scale * z)?;
        let (m, b) = assemble_derivative_system(p, &a, self.sigma(z), self.sigma_prime(z), RhsConvention::ChainRule);
        Ok((a, solve_derivatives(m, b)?))
    }

    pub fn point(&self, z: T) -> Result<SlowPoint<T>> {
        let (a, a_prime) = self.coefficients(z)?;
        let b = solve_b(&self.params, &a, &a_prime, self.factor.g(z), self.rho2)?;
        Ok(SlowPoint { z, a, a_prime, b })
    }

    /// Central-difference step that keeps `z - h` positive.
    fn step(&self, z: T, h: T) -> T {
        h.min(z * T::half())
    }

    /// `d B_x / dz` by central differences of [`solve_b`].
    pub fn b_x_prime(&self, z: T) -> Result<T> {
        let h = self.step(z, default_step(z));
        let up = self.point(z + h)?.b.b_x;
        let dn = self.point(z - h)?.b.b_x;
        Ok((up - dn) / (T::two() * h))
    }

    /// `A''(z)` by central second differences of the exact solver.
    pub fn a_second(&self, z: T) -> Result<CoeffsAPrime<T>> {
        let h = self.step(z, default_second_step(z));
        let scale = self.scale;
        second_derivatives_fd(&self.params, move |zz: T| (scale * zz).sqrt(), z, h)
    }

    pub fn d_forcing(&self, z: T) -> Result<(SlowPoint<T>, DForcing<T>)> {
        let pt = self.point(z)?;
        let f = DForcing::new(
            &pt.a_prime,
            &self.a_second(z)?,
            pt.b,
            self.b_x_prime(z)?,
            self.factor.c(z),
            self.factor.g(z),
            self.rho2,
        );
        Ok((pt, f))
    }

    pub fn d(&self, z: T) -> Result<CoeffsD<T>> {
        let (pt, f) = self.d_forcing(z)?;
        solve_d(&self.params, &pt.a, &f)
    }
}

//! Exact solver for the constant-volatility coefficient system.
//!
//! The value function is the quadratic
//! `v = -1/2 a_qq q^2 + 1/2 a_ll l^2 + 1/2 a_xx x^2 + a_ql q l + a_qx q x + a_xl x l + a_0`,
//! and with `s = lambda - a_qq + lambda a_ql`, `w = a_ql + lambda a_ll`,
//! `e = a_qx + lambda a_xl` the seven coefficient equations read
//!
//! 1. `rho/2 a_qq - gamma sigma^2/2 + s^2/(2K)`
//! 2. `w s/K - (beta + rho) a_ql - beta`
//! 3. `(rho + kappa) a_qx - e s/K - 1`
//! 4. `w^2/(2K) - (rho/2 + beta) a_ll`
//! 5. `w e/K - (kappa + beta + rho) a_xl`
//! 6. `e^2/(2K) - (rho/2 + kappa) a_xx`
//! 7. `eta/2 a_xx - rho a_0`
//!
//! Equations 1, 2, 4 are nonlinear in `(a_qq, a_ql, a_ll)`; given those,
//! 3 and 5 are a 2x2 linear system and 6, 7 are explicit.

use crate::error::{Error, Result};
use crate::impact_series;
use crate::linalg::{self, Poly};
use crate::model::{MarketParams, MarketState};
use crate::scalar::{Field, Real};

/// Coefficients of the quadratic value function.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoeffsA<T = f64> {
    pub a_qq: T,
    pub a_ll: T,
    pub a_xx: T,
    pub a_ql: T,
    pub a_qx: T,
    pub a_xl: T,
    pub a_0: T,
}

impl<T: Field> CoeffsA<T> {
    /// Field names in storage and CSV order.
    pub const NAMES: [&'static str; 7] = ["a_qq", "a_ll", "a_xx", "a_ql", "a_qx", "a_xl", "a_0"];

    /// Unknown ordering of the linearised system: equation `i` is paired with slot `i`.
    pub const SYSTEM_NAMES: [&'static str; 7] = ["a_qq", "a_ql", "a_qx", "a_ll", "a_xl", "a_xx", "a_0"];

    pub fn zero() -> Self {
        Self::from_array([T::zero(); 7])
    }

    pub fn to_array(&self) -> [T; 7] {
        [self.a_qq, self.a_ll, self.a_xx, self.a_ql, self.a_qx, self.a_xl, self.a_0]
    }

    pub fn from_array(a: [T; 7]) -> Self {
        CoeffsA {
            a_qq: a[0],
            a_ll: a[1],
            a_xx: a[2],
            a_ql: a[3],
            a_qx: a[4],
            a_xl: a[5],
            a_0: a[6],
        }
    }

    pub fn to_system(&self) -> [T; 7] {
        [self.a_qq, self.a_ql, self.a_qx, self.a_ll, self.a_xl, self.a_xx, self.a_0]
    }

    pub fn from_system(a: [T; 7]) -> Self {
        CoeffsA {
            a_qq: a[0],
            a_ql: a[1],
            a_qx: a[2],
            a_ll: a[3],
            a_xl: a[4],
            a_xx: a[5],
            a_0: a[6],
        }
    }

    pub fn map<U>(&self, f: impl Fn(T) -> U) -> CoeffsA<U> {
        CoeffsA {
            a_qq: f(self.a_qq),
            a_ll: f(self.a_ll),
            a_xx: f(self.a_xx),
            a_ql: f(self.a_ql),
            a_qx: f(self.a_qx),
            a_xl: f(self.a_xl),
            a_0: f(self.a_0),
        }
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        let (a, b) = (self.to_array(), other.to_array());
        Self::from_array(std::array::from_fn(|i| f(a[i], b[i])))
    }

    /// `s = lambda - a_qq + lambda a_ql`, minus `K` times the tracking speed.
    pub fn s(&self, lambda: T) -> T {
        lambda - self.a_qq + lambda * self.a_ql
    }

    /// `w = a_ql + lambda a_ll`, the `l` loading of `K u`.
    pub fn w(&self, lambda: T) -> T {
        self.a_ql + lambda * self.a_ll
    }

    /// `e = a_qx + lambda a_xl`, the `x` loading of `K u`.
    pub fn e(&self, lambda: T) -> T {
        self.a_qx + lambda * self.a_xl
    }
}

impl<T: Real> CoeffsA<T> {
    pub fn cast<U: Real>(&self) -> CoeffsA<U> {
        self.map(|v| U::lit(v.to_f64_lossy()))
    }
}

/// Left-hand sides of the seven coefficient equations, in system order.
pub fn residuals<F: Field>(p: &MarketParams<F>, sigma2: F, c: &CoeffsA<F>) -> [F; 7] {
    let half = F::half();
    let two = F::two();
    let k = p.cost_k;
    let (s, w, e) = (c.s(p.lambda), c.w(p.lambda), c.e(p.lambda));
    [
        half * p.rho * c.a_qq - half * p.gamma * sigma2 + s * s / (two * k),
        w * s / k - (p.beta + p.rho) * c.a_ql - p.beta,
        (p.rho + p.kappa) * c.a_qx - e * s / k - F::one(),
        w * w / (two * k) - (half * p.rho + p.beta) * c.a_ll,
        w * e / k - (p.kappa + p.beta + p.rho) * c.a_xl,
        e * e / (two * k) - (half * p.rho + p.kappa) * c.a_xx,
        half * p.eta * c.a_xx - p.rho * c.a_0,
    ]
}

/// Per-equation scale `max(1, |largest term|)` used to normalise residuals.
pub fn residual_scales<T: Real>(p: &MarketParams<T>, sigma2: T, c: &CoeffsA<T>) -> [T; 7] {
    let half = T::half();
    let two = T::two();
    let k = p.cost_k;
    let (s, w, e) = (c.s(p.lambda), c.w(p.lambda), c.e(p.lambda));
    let terms: [&[T]; 7] = [
        &[half * p.rho * c.a_qq, half * p.gamma * sigma2, s * s / (two * k)],
        &[w * s / k, (p.beta + p.rho) * c.a_ql, p.beta],
        &[(p.rho + p.kappa) * c.a_qx, e * s / k, T::one()],
        &[w * w / (two * k), (half * p.rho + p.beta) * c.a_ll],
        &[w * e / k, (p.kappa + p.beta + p.rho) * c.a_xl],
        &[e * e / (two * k), (half * p.rho + p.kappa) * c.a_xx],
        &[half * p.eta * c.a_xx, p.rho * c.a_0],
    ];
    terms.map(|t| t.iter().fold(T::one(), |m, v| m.max(v.abs())))
}

pub fn scaled_residuals<T: Real>(p: &MarketParams<T>, sigma2: T, c: &CoeffsA<T>) -> [T; 7] {
    let r = residuals(p, sigma2, c);
    let s = residual_scales(p, sigma2, c);
    std::array::from_fn(|i| r[i] / s[i])
}

pub fn max_abs_residual<T: Real>(p: &MarketParams<T>, sigma2: T, c: &CoeffsA<T>) -> T {
    linalg::norm_inf(&residuals(p, sigma2, c))
}

/// Jacobian of [`residuals`] with respect to the coefficients, both in system order.
pub fn jacobian<F: Field>(p: &MarketParams<F>, c: &CoeffsA<F>) -> [[F; 7]; 7] {
    let z = F::zero();
    let half = F::half();
    let k = p.cost_k;
    let lam = p.lambda;
    let (s, w, e) = (c.s(lam), c.w(lam), c.e(lam));
    let (sk, wk, ek) = (s / k, w / k, e / k);
    // columns: qq, ql, qx, ll, xl, xx, 0
    [
        [half * p.rho - sk, lam * sk, z, z, z, z, z],
        [-wk, sk + lam * wk - (p.beta + p.rho), z, lam * sk, z, z, z],
        [ek, -(lam * ek), p.rho + p.kappa - sk, z, -(lam * sk), z, z],
        [z, wk, z, lam * wk - (half * p.rho + p.beta), z, z, z],
        [z, ek, wk, lam * ek, lam * wk - (p.kappa + p.beta + p.rho), z, z],
        [z, z, ek, z, lam * ek, -(half * p.rho + p.kappa), z],
        [z, z, z, z, z, half * p.eta, -p.rho],
    ]
}

/// Solver tolerances.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Bound on the scaled residual of all seven equations.
    pub residual_tol: f64,
    /// Newton stopping threshold on the scaled residual of the nonlinear block.
    pub newton_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            residual_tol: 1e-10,
            newton_tol: 1e-12,
            max_iter: 50,
        }
    }
}

/// A tolerance no finer than what `T` can resolve.
fn effective_tol<T: Real>(tol: f64) -> T {
    T::lit(tol).max(T::lit(256.0) * T::epsilon())
}

/// Zero-impact closed forms.
pub fn closed_form_zero_impact<T: Real>(p: &MarketParams<T>, sigma2: T) -> CoeffsA<T> {
    let k = p.cost_k;
    let two = T::two();
    let a_qq = k / two * ((p.rho * p.rho + T::lit(4.0) * p.gamma * sigma2 / k).sqrt() - p.rho);
    let a_qx = T::one() / (p.kappa + p.rho + a_qq / k);
    let a_xx = a_qx * a_qx / (k * (two * p.kappa + p.rho));
    CoeffsA {
        a_qq,
        a_qx,
        a_xx,
        a_0: p.eta * a_xx / (two * p.rho),
        ..CoeffsA::zero()
    }
}

/// Complete `(a_qq, a_ql, a_ll)` with the linear tail from equations 3, 5, 6, 7.
pub fn complete_tail<T: Real>(p: &MarketParams<T>, a_qq: T, a_ql: T, a_ll: T) -> Result<CoeffsA<T>> {
    let k = p.cost_k;
    let lam = p.lambda;
    let mut c = CoeffsA {
        a_qq,
        a_ql,
        a_ll,
        ..CoeffsA::zero()
    };
    let (s, w) = (c.s(lam), c.w(lam));
    let m = [
        [p.rho + p.kappa - s / k, -(lam * s / k)],
        [w / k, lam * w / k - (p.kappa + p.beta + p.rho)],
    ];
    let [a_qx, a_xl] = linalg::solve(m, [T::one(), T::zero()])?;
    c.a_qx = a_qx;
    c.a_xl = a_xl;
    let e = c.e(lam);
    c.a_xx = e * e / (k * (p.rho + T::two() * p.kappa));
    c.a_0 = p.eta * c.a_xx / (T::two() * p.rho);
    Ok(c)
}

/// `a_qq > 0` and positive tracking speed.
pub fn is_admissible<T: Real>(p: &MarketParams<T>, c: &CoeffsA<T>) -> bool {
    c.a_qq > T::zero() && -c.s(p.lambda) / p.cost_k > T::zero()
}

/// Equations 1, 2, 4 in `(a_qq, a_ql, a_ll)`, scaled, with their Jacobian.
fn core_system<T: Real>(p: &MarketParams<T>, sigma2: T, x: [T; 3]) -> ([T; 3], [[T; 3]; 3]) {
    let c = CoeffsA {
        a_qq: x[0],
        a_ql: x[1],
        a_ll: x[2],
        ..CoeffsA::zero()
    };
    let r = residuals(p, sigma2, &c);
    let sc = residual_scales(p, sigma2, &c);
    let j = jacobian(p, &c);
    // equations 1, 2, 4 and unknowns qq, ql, ll share system indices
    let idx = [0, 1, 3];
    let f = idx.map(|i| r[i] / sc[i]);
    let jac = idx.map(|i| idx.map(|col| j[i][col] / sc[i]));
    (f, jac)
}

/// Damped Newton on the nonlinear block.
fn newton_core<T: Real>(p: &MarketParams<T>, sigma2: T, x0: [T; 3], opts: &SolverOptions) -> Result<[T; 3]> {
    let tol: T = effective_tol(opts.newton_tol);
    let mut x = x0;
    let (mut f, mut jac) = core_system(p, sigma2, x);
    let mut norm = linalg::norm_inf(&f);
    for _ in 0..opts.max_iter {
        if norm < tol {
            return Ok(x);
        }
        if !norm.is_finite() {
            break;
        }
        let step = linalg::solve(jac, f.map(|v| -v))?;
        let mut t = T::one();
        loop {
            let trial = std::array::from_fn(|i| x[i] + t * step[i]);
            let (ft, jt) = core_system(p, sigma2, trial);
            let nt = linalg::norm_inf(&ft);
            if nt < norm || t < T::lit(1e-4) {
                x = trial;
                f = ft;
                jac = jt;
                norm = nt;
                break;
            }
            t = t * T::half();
        }
    }
    if norm < tol {
        return Ok(x);
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: norm.to_f64_lossy(),
    })
}

/// Quartic in `a_ql` obtained by eliminating `s = lambda - a_qq + lambda a_ql`
/// between equation 1 and equation 4 (with `a_ll` expressed through
/// equation 2). Requires `lambda > 0`.
pub fn elimination_quartic(p: &MarketParams<f64>, sigma2: f64) -> Poly {
    let k = p.cost_k;
    let (rho, lam, beta) = (p.rho, p.lambda, p.beta);
    let (a2, a1, a0) = quadratic_in_s_eq1(p, sigma2);
    let c = Poly::linear(beta, beta + rho);
    let h = rho / 2.0 + beta;
    let b2 = Poly::linear(0.0, h);
    let b1 = c.scale(-h * k);
    let b0 = c.mul(&c).scale(lam * k / 2.0);
    let t1 = b0.scale(a2).sub(&a0.mul(&b2));
    let t2 = b1.scale(a2).sub(&b2.scale(a1));
    let t3 = b0.scale(a1).sub(&a0.mul(&b1));
    t1.mul(&t1).sub(&t2.mul(&t3))
}

/// Equation 1 as `a2 s^2 + a1 s + a0(a_ql)`.
fn quadratic_in_s_eq1(p: &MarketParams<f64>, sigma2: f64) -> (f64, f64, Poly) {
    let a0 = Poly::linear(p.rho * p.lambda - p.gamma * sigma2, p.rho * p.lambda);
    (1.0 / p.cost_k, -p.rho, a0)
}

/// Candidate `(a_qq, a_ql, a_ll)` triples from the real roots of the elimination quartic.
pub fn quartic_candidates(p: &MarketParams<f64>, sigma2: f64) -> Vec<[f64; 3]> {
    let k = p.cost_k;
    let (rho, lam, beta) = (p.rho, p.lambda, p.beta);
    let (a2, a1, a0p) = quadratic_in_s_eq1(p, sigma2);
    let h = rho / 2.0 + beta;
    let mut out = Vec::new();
    for a in elimination_quartic(p, sigma2).real_roots() {
        let c = (beta + rho) * a + beta;
        let (b2, b1, b0) = (h * a, -h * k * c, lam * k * c * c / 2.0);
        let a0 = a0p.eval(a);
        let denom = b2 * a1 - a2 * b1;
        let mut svals = Vec::new();
        if denom.abs() > 1e-14 * (b2 * a1).abs().max((a2 * b1).abs()).max(1e-300) {
            svals.push((a2 * b0 - b2 * a0) / denom);
        } else {
            let disc = a1 * a1 - 4.0 * a2 * a0;
            if disc >= 0.0 {
                svals.push((-a1 + disc.sqrt()) / (2.0 * a2));
                svals.push((-a1 - disc.sqrt()) / (2.0 * a2));
            }
        }
        for s in svals {
            if s == 0.0 || !s.is_finite() {
                continue;
            }
            let w = k * c / s;
            out.push([lam + lam * a - s, a, w * w / (k * (rho + 2.0 * beta))]);
        }
    }
    out
}

/// Solve the constant-volatility system with default tolerances.
pub fn solve_constant_vol<T: Real>(p: &MarketParams<T>, sigma2: T) -> Result<CoeffsA<T>> {
    solve_constant_vol_with(p, sigma2, &SolverOptions::default())
}

/// Solve the constant-volatility system.
///
/// Zero impact uses the closed forms. Otherwise Newton on equations 1, 2, 4
/// is seeded from the second-order small-impact expansion, and the
/// elimination quartic enumerates candidates if Newton fails or lands on an
/// inadmissible root. Among admissible candidates the one closest to the
/// zero-impact solution is returned.
pub fn solve_constant_vol_with<T: Real>(p: &MarketParams<T>, sigma2: T, opts: &SolverOptions) -> Result<CoeffsA<T>> {
    if !(sigma2 > T::zero() && sigma2.is_finite()) {
        return Err(Error::InvalidInput(format!("sigma2 must be > 0 (got {sigma2})")));
    }
    if !p.has_impact() {
        return Ok(closed_form_zero_impact(p, sigma2));
    }
    let tol: T = effective_tol(opts.residual_tol);
    let accept = |c: &CoeffsA<T>| is_admissible(p, c) && linalg::norm_inf(&scaled_residuals(p, sigma2, c)) <= tol;

    if p.lambda == T::zero() {
        // equation 2 becomes linear in a_ql once a_qq is known
        let base = closed_form_zero_impact(p, sigma2);
        let k = p.cost_k;
        let a_ql = -(p.beta * k) / (base.a_qq + k * (p.beta + p.rho));
        let a_ll = a_ql * a_ql / (k * (p.rho + T::two() * p.beta));
        let c = complete_tail(p, base.a_qq, a_ql, a_ll)?;
        return if is_admissible(p, &c) { Ok(c) } else { Err(Error::NoAdmissibleRoot) };
    }

    let seed = impact_series::expand_theta(p, sigma2, 2)
        .map(|s| impact_series::eval_series(&s, T::one()))
        .unwrap_or_else(|_| closed_form_zero_impact(p, sigma2));
    let mut last_err = None;
    match newton_core(p, sigma2, [seed.a_qq, seed.a_ql, seed.a_ll], opts) {
        Ok(x) => match complete_tail(p, x[0], x[1], x[2]) {
            Ok(c) if accept(&c) => return Ok(c),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        },
        Err(e) => last_err = Some(e),
    }

    let reference = closed_form_zero_impact(p, sigma2);
    let mut best: Option<(T, CoeffsA<T>)> = None;
    let mut saw_admissible_root = false;
    for cand in quartic_candidates(&p.cast::<f64>(), sigma2.to_f64_lossy()) {
        let x0 = cand.map(T::lit);
        let rough = CoeffsA {
            a_qq: x0[0],
            a_ql: x0[1],
            a_ll: x0[2],
            ..CoeffsA::zero()
        };
        if !is_admissible(p, &rough) {
            continue;
        }
        saw_admissible_root = true;
        let polished = newton_core(p, sigma2, x0, opts).and_then(|x| complete_tail(p, x[0], x[1], x[2]));
        match polished {
            Ok(c) if accept(&c) => {
                let d = (c.a_qq - reference.a_qq).abs() + c.a_ql.abs() + c.a_ll.abs();
                if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                    best = Some((d, c));
                }
            }
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((_, c)) => Ok(c),
        None if saw_admissible_root => Err(last_err.unwrap_or(Error::NoAdmissibleRoot)),
        None => Err(Error::NoAdmissibleRoot),
    }
}

/// Optimal trading rate `u = (s q + w l + e x)/K`.
pub fn control_rate<T: Real>(p: &MarketParams<T>, c: &CoeffsA<T>, st: &MarketState<T>) -> T {
    let lam = p.lambda;
    (c.s(lam) * st.q + c.w(lam) * st.l + c.e(lam) * st.x) / p.cost_k
}

/// Tracking speed `(a_qq - lambda - lambda a_ql)/K` and aim portfolio.
pub fn aim_and_speed<T: Real>(p: &MarketParams<T>, c: &CoeffsA<T>, st: &MarketState<T>) -> Result<(T, T)> {
    let lam = p.lambda;
    let denom = -c.s(lam);
    speed_aim_from(denom, p.cost_k, c.w(lam) * st.l + c.e(lam) * st.x, [c.a_qq, lam, lam * c.a_ql])
}

/// `(denom/K, target/denom)`, rejecting a denominator at rounding level of its parts.
pub(crate) fn speed_aim_from<T: Real>(denom: T, k: T, target: T, parts: [T; 3]) -> Result<(T, T)> {
    let scale = parts.iter().fold(T::zero(), |m, v| m + v.abs());
    if !(denom.abs() > T::epsilon() * scale) || denom == T::zero() {
        return Err(Error::DegenerateSpeed);
    }
    Ok((denom / k, target / denom))
}

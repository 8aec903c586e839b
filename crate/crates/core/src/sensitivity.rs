//! Derivatives of the coefficients with respect to a volatility state `z`.
//!
//! Differentiating the seven coefficient equations in `z` gives the linear
//! system `J(A) A' = b`, where `J` is the coefficient Jacobian and only the
//! first equation carries a source, `b_1 = gamma sigma sigma'`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::MarketParams;
use crate::riccati::{jacobian, solve_constant_vol, CoeffsA};
use crate::scalar::Real;

/// `d/dz` of each coefficient (same slots as [`CoeffsA`]).
pub type CoeffsAPrime<T = f64> = CoeffsA<T>;

/// Source of the first derivative equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RhsConvention {
    /// `gamma sigma sigma'`, the chain rule on `gamma sigma^2 / 2`.
    #[default]
    ChainRule,
    /// `gamma sigma sigma' / 2`, kept for comparison only.
    Printed,
}

/// Matrix and right-hand side in system order `(qq, ql, qx, ll, xl, xx, 0)`.
pub fn assemble_derivative_system<T: Real>(
    p: &MarketParams<T>,
    coeffs: &CoeffsA<T>,
    sigma: T,
    sigma_prime: T,
    convention: RhsConvention,
) -> ([[T; 7]; 7], [T; 7]) {
    let m = jacobian(p, coeffs);
    let mut b = [T::zero(); 7];
    b[0] = match convention {
        RhsConvention::ChainRule => p.gamma * sigma * sigma_prime,
        RhsConvention::Printed => T::lit(0.5) * p.gamma * sigma * sigma_prime,
    };
    (m, b)
}

/// Linear solve in system order; `SingularSystem` above the condition limit.
pub fn solve_derivatives<T: Real>(matrix: [[T; 7]; 7], rhs: [T; 7]) -> Result<CoeffsAPrime<T>> {
    linalg::solve(matrix, rhs).map(CoeffsA::from_system)
}

/// `||M a - b||_inf`.
pub fn system_residual<T: Real>(matrix: &[[T; 7]; 7], rhs: &[T; 7], sol: &CoeffsAPrime<T>) -> T {
    let mx = linalg::mat_vec(matrix, &sol.to_system());
    linalg::norm_inf(&std::array::from_fn::<T, 7, _>(|i| mx[i] - rhs[i]))
}

/// Default central-difference step `1e-5 max(1, |z|)`.
pub fn default_step<T: Real>(z: T) -> T {
    T::lit(1e-5) * z.abs().max(T::one())
}

/// Default second-difference step `1e-4 max(1, |z|)`.
pub fn default_second_step<T: Real>(z: T) -> T {
    T::lit(1e-4) * z.abs().max(T::one())
}

fn solve_at<T: Real>(p: &MarketParams<T>, sigma_fn: &impl Fn(T) -> T, z: T) -> Result<CoeffsA<T>> {
    let s = sigma_fn(z);
    solve_constant_vol(p, s * s)
}

/// Central difference `(A(z+h) - A(z-h)) / 2h` of the exact solution at `sigma_fn(z)^2`.
pub fn fd_derivatives<T: Real>(p: &MarketParams<T>, sigma_fn: impl Fn(T) -> T, z: T, h: T) -> Result<CoeffsAPrime<T>> {
    let up = solve_at(p, &sigma_fn, z + h)?;
    let dn = solve_at(p, &sigma_fn, z - h)?;
    Ok(up.zip_with(&dn, |a, b| (a - b) / (T::two() * h)))
}

/// Central second difference `(A(z+h) - 2A(z) + A(z-h)) / h^2`.
pub fn second_derivatives_fd<T: Real>(p: &MarketParams<T>, sigma_fn: impl Fn(T) -> T, z: T, h: T) -> Result<CoeffsAPrime<T>> {
    let up = solve_at(p, &sigma_fn, z + h)?;
    let mid = solve_at(p, &sigma_fn, z)?;
    let dn = solve_at(p, &sigma_fn, z - h)?;
    Ok(up.zip_with(&dn, |a, b| a + b).zip_with(&mid, |s, m| (s - T::two() * m) / (h * h)))
}

/// Coefficients and their first derivative at `z`, for `sigma(z)` with derivative `sigma_prime(z)`.
pub fn coefficients_and_derivative<T: Real>(
    p: &MarketParams<T>,
    sigma: T,
    sigma_prime: T,
) -> Result<(CoeffsA<T>, CoeffsAPrime<T>)> {
    let a = solve_constant_vol(p, sigma * sigma)?;
    let (m, b) = assemble_derivative_system(p, &a, sigma, sigma_prime, RhsConvention::ChainRule);
    let d = solve_derivatives(m, b)?;
    Ok((a, d))
}

/// Relative sup-norm gap `||a - b||_inf / ||b||_inf` (absolute when `b = 0`).
pub fn relative_gap<T: Real>(a: &CoeffsA<T>, b: &CoeffsA<T>) -> T {
    let diff = linalg::norm_inf(&a.zip_with(b, |x, y| x - y).to_array());
    let scale = linalg::norm_inf(&b.to_array());
    if scale > T::zero() {
        diff / scale
    } else {
        diff
    }
}

/// Check that a solution satisfies its system to `1e-12 ||b||` (or `1e-14` when `b = 0`).
pub fn verify_solution<T: Real>(matrix: &[[T; 7]; 7], rhs: &[T; 7], sol: &CoeffsAPrime<T>) -> Result<()> {
    let r = system_residual(matrix, rhs, sol);
    let bound = (T::lit(1e-12) * linalg::norm_inf(rhs)).max(T::lit(1e-14));
    if r <= bound {
        Ok(())
    } else {
        Err(Error::SingularSystem {
            condition: f64::INFINITY,
        })
    }
}

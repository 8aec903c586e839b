//! Small-impact expansion of the coefficients in powers of `theta`.
//!
//! With `lambda -> theta lambda` and `beta -> theta beta`, each coefficient is
//! `A = A0 + theta A1 + theta^2 A2 + ...`. Evaluating the residuals on
//! truncated power series gives the order-`k` equations exactly, and each
//! order is linear in its unknowns with the zero-impact Jacobian `J0`:
//! `J0 A_k = -[theta^k] F(A0 + ... + theta^(k-1) A_(k-1); theta)`.

use crate::error::Result;
use crate::linalg::Lu;
use crate::model::MarketParams;
use crate::riccati::{closed_form_zero_impact, jacobian, residuals, CoeffsA};
use crate::scalar::{Real, Series};

/// Coefficients of `theta^0`, `theta^1`, `theta^2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CoeffsASeries<T = f64> {
    pub order0: CoeffsA<T>,
    pub order1: CoeffsA<T>,
    pub order2: CoeffsA<T>,
}

impl<T: Real> CoeffsASeries<T> {
    fn order(&self, k: usize) -> &CoeffsA<T> {
        match k {
            0 => &self.order0,
            1 => &self.order1,
            _ => &self.order2,
        }
    }

    fn order_mut(&mut self, k: usize) -> &mut CoeffsA<T> {
        match k {
            0 => &mut self.order0,
            1 => &mut self.order1,
            _ => &mut self.order2,
        }
    }

    /// The orders as one series-valued coefficient set.
    fn as_series(&self) -> CoeffsA<Series<T, 3>> {
        let (a, b, c) = (self.order0.to_array(), self.order1.to_array(), self.order2.to_array());
        CoeffsA::from_array(std::array::from_fn(|i| Series([a[i], b[i], c[i]])))
    }
}

/// Parameters with `lambda`, `beta` replaced by `theta lambda`, `theta beta` as series in `theta`.
fn series_params<T: Real>(p: &MarketParams<T>) -> MarketParams<Series<T, 3>> {
    let c = Series::<T, 3>::constant;
    MarketParams {
        rho: c(p.rho),
        gamma: c(p.gamma),
        cost_k: c(p.cost_k),
        lambda: Series::linear(T::zero(), p.lambda),
        beta: Series::linear(T::zero(), p.beta),
        kappa: c(p.kappa),
        eta: c(p.eta),
    }
}

/// `[theta^k] F` for `k = 0, 1, 2`, each in system order.
pub fn theta_residuals<T: Real>(p: &MarketParams<T>, sigma2: T, series: &CoeffsASeries<T>) -> [[T; 7]; 3] {
    let r = residuals(&series_params(p), Series::constant(sigma2), &series.as_series());
    std::array::from_fn(|k| r.map(|v| v.coeff(k)))
}

/// Expansion up to `order` (0, 1 or 2); higher orders are zero-filled.
///
/// `lambda` and `beta` in `p` are the unit-scale impact parameters.
pub fn expand_theta<T: Real>(p: &MarketParams<T>, sigma2: T, order: usize) -> Result<CoeffsASeries<T>> {
    let base = closed_form_zero_impact(&p.without_impact(), sigma2);
    let mut out = CoeffsASeries {
        order0: base,
        ..Default::default()
    };
    if order == 0 {
        return Ok(out);
    }
    let lu = Lu::new(jacobian(&p.without_impact(), &base))?;
    for k in 1..=order.min(2) {
        let rhs = theta_residuals(p, sigma2, &out)[k].map(|v| -v);
        *out.order_mut(k) = CoeffsA::from_system(lu.solve(&rhs));
    }
    Ok(out)
}

/// `order0 + theta order1 + theta^2 order2`, field-wise by Horner.
pub fn eval_series<T: Real>(s: &CoeffsASeries<T>, theta: T) -> CoeffsA<T> {
    let a = [s.order0.to_array(), s.order1.to_array(), s.order2.to_array()];
    CoeffsA::from_array(std::array::from_fn(|i| (a[0][i]) + theta * (a[1][i] + theta * a[2][i])))
}

/// Series truncated after `order`.
pub fn truncate<T: Real>(s: &CoeffsASeries<T>, order: usize) -> CoeffsASeries<T> {
    let mut out = CoeffsASeries::default();
    for k in 0..=order.min(2) {
        *out.order_mut(k) = *s.order(k);
    }
    out
}

/// Floor guarding division by exactly-zero coefficients.
pub const ERROR_FLOOR: f64 = 1e-12;

/// `|approx - exact| / max(|exact|, 1e-12)` per coefficient, storage order.
pub fn normalized_error<T: Real>(approx: &CoeffsA<T>, exact: &CoeffsA<T>) -> [T; 7] {
    let (a, e) = (approx.to_array(), exact.to_array());
    std::array::from_fn(|i| (a[i] - e[i]).abs() / e[i].abs().max(T::lit(ERROR_FLOOR)))
}

/// Storage indices of the coefficients that are nonzero at zero impact
/// (`a_qq`, `a_xx`, `a_qx`, `a_0`). For these the relative error of an order-`n`
/// truncation is `O(theta^(n+1))`; `a_ql`, `a_xl` start at `O(theta)` and `a_ll`
/// at `O(theta^2)`, so their relative errors are one or two orders lower.
pub const LEADING_NONZERO: [usize; 4] = [0, 2, 4, 6];

/// Largest normalized error over [`LEADING_NONZERO`].
pub fn max_leading_error<T: Real>(approx: &CoeffsA<T>, exact: &CoeffsA<T>) -> T {
    let e = normalized_error(approx, exact);
    LEADING_NONZERO.iter().fold(T::zero(), |m, &i| m.max(e[i]))
}

/// Largest absolute error over all seven coefficients.
pub fn max_abs_error<T: Real>(approx: &CoeffsA<T>, exact: &CoeffsA<T>) -> T {
    let (a, e) = (approx.to_array(), exact.to_array());
    (0..7).fold(T::zero(), |m, i| m.max((a[i] - e[i]).abs()))
}

/// First-order closed forms (the `a_qx` term carries a `1/K`).
pub fn first_order_closed_form<T: Real>(p: &MarketParams<T>, order0: &CoeffsA<T>) -> CoeffsA<T> {
    let k = p.cost_k;
    let two = T::two();
    let q0 = order0.a_qq;
    let x0 = order0.a_qx;
    let a_qq = two * p.lambda * q0 / (two * q0 + k * p.rho);
    let a_ql = -(p.beta * k) / (p.rho * k + q0);
    let a_qx = x0 * x0 * (p.lambda - a_qq) / k;
    let a_xx = two * x0 * a_qx / (k * (two * p.kappa + p.rho));
    CoeffsA {
        a_qq,
        a_ll: T::zero(),
        a_xx,
        a_ql,
        a_qx,
        a_xl: x0 * a_ql / (k * (p.kappa + p.rho)),
        a_0: p.eta / (two * p.rho) * a_xx,
    }
}

/// Hand-derived second-order ratios `M/N`, storage order. `a_xl` has no
/// published expression and is `None`.
pub fn second_order_transcribed<T: Real>(p: &MarketParams<T>, s: &CoeffsASeries<T>) -> [Option<T>; 7] {
    let l = |v: f64| T::lit(v);
    let (k, rho, lam, beta, kappa, eta) = (p.cost_k, p.rho, p.lambda, p.beta, p.kappa, p.eta);
    let q0 = s.order0.a_qq;
    let x0 = s.order0.a_qx;
    let q1 = s.order1.a_qq;
    let ql1 = s.order1.a_ql;
    let x1 = s.order1.a_qx;
    let xl1 = s.order1.a_xl;

    let m_qq = -q1 * q1 + l(2.0) * q1 * lam - lam * lam + l(2.0) * ql1 * q0 * lam;
    let n_qq = l(2.0) * q0 + k * rho;

    let m_ll = l(2.0) * ql1 * ql1 * q0 * q0 + l(3.0) * ql1 * ql1 * q0 * k * rho + ql1 * ql1 * k * k * rho * rho;
    let n_ll = k * rho * (l(2.0) * q0 + k * rho) * (q0 + k * rho);

    let xx_head = l(2.0) * q0 * q0 * x1 * x1 - l(4.0) * q0 * q1 * x0 * x1
        + l(4.0) * q0 * x0 * x1 * lam
        + l(4.0) * xl1 * q0 * x0 * k * lam * rho
        + l(4.0) * xl1 * kappa * q0 * x0 * k * lam
        + l(3.0) * q0 * x1 * x1 * k * rho;
    let m_xx = xx_head + l(2.0) * kappa * q0 * x1 * x1 * k + l(2.0) * q1 * q1 * x0 * x0
        - l(4.0) * q1 * x0 * x0 * lam
        - l(2.0) * q1 * x0 * x1 * k * rho
        + l(2.0) * ql1 * x0 * x0 * k * lam * rho
        + l(2.0) * x0 * x0 * lam * lam
        + l(2.0) * x0 * x1 * k * lam * rho
        + l(2.0) * xl1 * x0 * k * k * lam * rho * rho
        + l(2.0) * xl1 * kappa * x0 * k * k * lam * rho
        + x1 * x1 * k * k * rho * rho
        + kappa * x1 * x1 * k * k * rho;
    let n_xx = k * (l(2.0) * q0 + k * rho) * (l(2.0) * kappa + rho) * (q0 + k * kappa + k * rho);

    let m_qx = q1 * q1 * x0 + x0 * lam * lam - l(2.0) * q0 * q1 * x1 + l(2.0) * q0 * x1 * lam
        - l(2.0) * q1 * x0 * lam
        - l(2.0) * q0 * q0 * xl1 * lam
        - q1 * x1 * k * rho
        + x1 * k * lam * rho
        + ql1 * x0 * k * lam * rho
        - q0 * xl1 * k * lam * rho;
    let n_qx = (l(2.0) * q0 + k * rho) * (q0 + k * kappa + k * rho);

    let m_ql = l(2.0) * ql1 * q0 * q1 - l(2.0) * ql1 * q0 * lam + ql1 * k * k * beta * rho
        + l(2.0) * ql1 * q0 * k * beta
        + ql1 * q1 * k * rho
        - ql1 * k * lam * rho;
    let n_ql = (l(2.0) * q0 + k * rho) * (q0 + k * rho);

    let m_0 = eta * xx_head;
    let n_0 = l(2.0) * k * rho * (l(2.0) * q0 + k * rho) * (l(2.0) * kappa + rho) * (q0 + k * kappa + k * rho);

    [
        Some(m_qq / n_qq),
        Some(m_ll / n_ll),
        Some(m_xx / n_xx),
        Some(m_ql / n_ql),
        Some(m_qx / n_qx),
        None,
        Some(m_0 / n_0),
    ]
}

/// One coefficient's comparison between the linear-solve route and a closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct CrossCheck {
    pub name: &'static str,
    pub solved: f64,
    pub closed_form: Option<f64>,
    pub relative_diff: Option<f64>,
}

impl CrossCheck {
    /// Agreement to `tol` relative (scaled by `max(1e-12, |solved|)`); `None` when no closed form exists.
    pub fn agrees(&self, tol: f64) -> Option<bool> {
        self.relative_diff.map(|d| d <= tol)
    }
}

fn cross_check<T: Real>(solved: &CoeffsA<T>, closed: [Option<T>; 7]) -> Vec<CrossCheck> {
    let s = solved.to_array();
    CoeffsA::<T>::NAMES
        .iter()
        .zip(s)
        .zip(closed)
        .map(|((name, v), c)| {
            let v = v.to_f64_lossy();
            let c = c.map(|c| c.to_f64_lossy());
            CrossCheck {
                name,
                solved: v,
                closed_form: c,
                relative_diff: c.map(|c| (c - v).abs() / v.abs().max(ERROR_FLOOR)),
            }
        })
        .collect()
}

/// Linear-solve first order against the closed forms.
pub fn check_first_order<T: Real>(p: &MarketParams<T>, s: &CoeffsASeries<T>) -> Vec<CrossCheck> {
    cross_check(&s.order1, first_order_closed_form(p, &s.order0).to_array().map(Some))
}

/// Linear-solve second order against the hand-derived ratios.
pub fn check_second_order<T: Real>(p: &MarketParams<T>, s: &CoeffsASeries<T>) -> Vec<CrossCheck> {
    cross_check(&s.order2, second_order_transcribed(p, s))
}

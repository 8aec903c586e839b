//! Model parameters, volatility specifications and their validation.

mod config;

pub use config::{load_config, ConfigError, FullConfig, SimSettings, CONFIG_KEYS};

use crate::scalar::Real;

/// Scalar market constants.
///
/// `lambda` and `beta` are the impact magnitude and decay rate; the small-impact
/// expansion treats them as unit-scale values multiplied by `theta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarketParams<T = f64> {
    /// Discount rate (1/time).
    pub rho: T,
    /// Risk aversion.
    pub gamma: T,
    /// Instantaneous cost coefficient `K`.
    pub cost_k: T,
    /// Impact per share traded.
    pub lambda: T,
    /// Impact decay rate.
    pub beta: T,
    /// Signal mean-reversion rate.
    pub kappa: T,
    /// Signal variance rate.
    pub eta: T,
}

impl<T: Real> MarketParams<T> {
    /// Same parameters with the impact pair scaled, `lambda -> theta lambda`, `beta -> theta beta`.
    pub fn with_impact_scale(&self, theta: T) -> Self {
        MarketParams {
            lambda: self.lambda * theta,
            beta: self.beta * theta,
            ..*self
        }
    }

    pub fn without_impact(&self) -> Self {
        self.with_impact_scale(T::zero())
    }

    pub fn has_impact(&self) -> bool {
        self.lambda != T::zero() || self.beta != T::zero()
    }

    pub fn cast<U: Real>(&self) -> MarketParams<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        MarketParams {
            rho: c(self.rho),
            gamma: c(self.gamma),
            cost_k: c(self.cost_k),
            lambda: c(self.lambda),
            beta: c(self.beta),
            kappa: c(self.kappa),
            eta: c(self.eta),
        }
    }
}

/// Fast CIR variance factor: `dY = (chi/eps)(mu - Y)dt + (psi/sqrt eps) sqrt(Y) dW1`, `sigma^2 = y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastCir<T = f64> {
    pub chi: T,
    pub mu: T,
    pub psi: T,
    pub epsilon: T,
}

/// Fast exponential OU factor: `dY = -(theta_r/eps) Y dt + (sigma_hat/sqrt eps) dW1`, `sigma = m e^y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FastExpOu<T = f64> {
    pub m: T,
    pub theta_r: T,
    pub sigma_hat: T,
    pub epsilon: T,
}

/// Slow CIR variance factor: `dZ = delta (m_s - Z)dt + sqrt(delta) beta_g sqrt(Z) dW2`, `sigma^2 = z`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlowCir<T = f64> {
    pub m_s: T,
    pub beta_g: T,
    pub delta: T,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum VolModel<T = f64> {
    Constant { sigma: T },
    FastCir(FastCir<T>),
    FastExpOu(FastExpOu<T>),
    SlowCir(SlowCir<T>),
    /// `sigma^2(y, z) = y z` with the fast factor averaging to `mu`.
    Multiscale { fast: FastCir<T>, slow: SlowCir<T> },
}

/// Instantaneous correlations: `rho1 = <W0, W1>`, `rho2 = <W0, W2>`, `rho12 = <W1, W2>`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Correlations<T = f64> {
    pub rho1: T,
    pub rho2: T,
    pub rho12: T,
}

impl<T: Real> Default for Correlations<T> {
    fn default() -> Self {
        Correlations {
            rho1: T::zero(),
            rho2: T::zero(),
            rho12: T::zero(),
        }
    }
}

impl<T: Real> Correlations<T> {
    /// Determinant of the 3x3 correlation matrix of `(W0, W1, W2)`.
    pub fn determinant(&self) -> T {
        let Correlations { rho1, rho2, rho12 } = *self;
        T::one() + T::two() * rho1 * rho2 * rho12 - rho1 * rho1 - rho2 * rho2 - rho12 * rho12
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolSpec<T = f64> {
    pub model: VolModel<T>,
    pub correlations: Correlations<T>,
}

impl<T: Real> VolSpec<T> {
    pub fn constant(sigma: T) -> Self {
        VolSpec {
            model: VolModel::Constant { sigma },
            correlations: Correlations::default(),
        }
    }

    /// Instantaneous variance `sigma^2(y, z)`.
    pub fn variance(&self, y: T, z: T) -> T {
        match self.model {
            VolModel::Constant { sigma } => sigma * sigma,
            VolModel::FastCir(_) => y.max(T::zero()),
            VolModel::FastExpOu(f) => f.m * f.m * (T::two() * y).exp(),
            VolModel::SlowCir(_) => z.max(T::zero()),
            VolModel::Multiscale { .. } => y.max(T::zero()) * z.max(T::zero()),
        }
    }

    /// Variance that feeds the leading-order (constant-volatility) strategy:
    /// the fast-factor average `<sigma^2>` and/or the current slow level.
    pub fn effective_variance(&self, z: T) -> T {
        match self.model {
            VolModel::Constant { sigma } => sigma * sigma,
            VolModel::FastCir(f) => f.mu,
            VolModel::FastExpOu(f) => f.mean_variance(),
            VolModel::SlowCir(_) => z.max(T::zero()),
            VolModel::Multiscale { fast, .. } => fast.mu * z.max(T::zero()),
        }
    }

    pub fn fast_epsilon(&self) -> T {
        match self.model {
            VolModel::FastCir(f) | VolModel::Multiscale { fast: f, .. } => f.epsilon,
            VolModel::FastExpOu(f) => f.epsilon,
            _ => T::zero(),
        }
    }

    pub fn slow_delta(&self) -> T {
        match self.model {
            VolModel::SlowCir(s) | VolModel::Multiscale { slow: s, .. } => s.delta,
            _ => T::zero(),
        }
    }
}

impl<T: Real> FastExpOu<T> {
    /// `<sigma^2> = m^2 exp(2 v)` with stationary variance `v = sigma_hat^2 / (2 theta_r)`.
    pub fn mean_variance(&self) -> T {
        let v = self.sigma_hat * self.sigma_hat / (T::two() * self.theta_r);
        self.m * self.m * (T::two() * v).exp()
    }
}

impl<T: Real> SlowCir<T> {
    /// `g(z) = beta_g sqrt(z)`.
    pub fn g(&self, z: T) -> T {
        self.beta_g * z.max(T::zero()).sqrt()
    }

    /// `c(z) = m_s - z`.
    pub fn c(&self, z: T) -> T {
        self.m_s - z
    }
}

/// Point in the state space.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MarketState<T = f64> {
    /// Position (shares).
    pub q: T,
    /// Accumulated price impact.
    pub l: T,
    /// Alpha signal.
    pub x: T,
    /// Fast volatility factor.
    pub y: T,
    /// Slow volatility factor.
    pub z: T,
    /// Unaffected price.
    pub p: T,
    /// Time (years).
    pub t: T,
}

impl<T: Real> MarketState<T> {
    pub fn new(q: T, l: T, x: T) -> Self {
        MarketState {
            q,
            l,
            x,
            y: T::zero(),
            z: T::zero(),
            p: T::zero(),
            t: T::zero(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationIssue {
    pub field: &'static str,
    pub message: String,
}

/// Outcome of [`validate`]: failed checks plus non-fatal warnings.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    fn fail(&mut self, field: &'static str, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            field,
            message: message.into(),
        });
    }

    pub fn summary(&self) -> String {
        self.issues
            .iter()
            .map(|i| format!("{}: {}", i.field, i.message))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

/// Check parameter ranges, correlation admissibility and CIR positivity.
///
/// Never aborts: every failed check is listed in the report.
pub fn validate<T: Real>(params: &MarketParams<T>, vol: &VolSpec<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let zero = T::zero();
    let finite = |v: T| v.is_finite();

    let strictly_positive = [
        ("rho", params.rho),
        ("cost_k", params.cost_k),
        ("kappa", params.kappa),
        ("eta", params.eta),
    ];
    for (field, v) in strictly_positive {
        if !(finite(v) && v > zero) {
            report.fail(field, format!("must be > 0 (got {v})"));
        }
    }
    let non_negative = [
        ("gamma", params.gamma),
        ("lambda", params.lambda),
        ("beta", params.beta),
    ];
    for (field, v) in non_negative {
        if !(finite(v) && v >= zero) {
            report.fail(field, format!("must be >= 0 (got {v})"));
        }
    }

    let c = vol.correlations;
    let mut corr_ok = true;
    for (field, v) in [("rho1", c.rho1), ("rho2", c.rho2), ("rho12", c.rho12)] {
        if !(finite(v) && v > -T::one() && v < T::one()) {
            report.fail(field, format!("correlation out of open interval (-1, 1) (got {v})"));
            corr_ok = false;
        }
    }
    if corr_ok && c.determinant() <= zero {
        report.fail(
            "rho12",
            format!(
                "correlation matrix not positive definite (determinant {})",
                c.determinant()
            ),
        );
    }

    match vol.model {
        VolModel::Constant { sigma } => {
            if !(finite(sigma) && sigma > zero) {
                report.fail("sigma", format!("must be > 0 (got {sigma})"));
            }
        }
        VolModel::FastCir(f) => check_fast_cir(&mut report, &f),
        VolModel::FastExpOu(f) => {
            for (field, v) in [
                ("m_scale", f.m),
                ("theta_r", f.theta_r),
                ("sigma_hat", f.sigma_hat),
                ("epsilon", f.epsilon),
            ] {
                if !(finite(v) && v > zero) {
                    report.fail(field, format!("must be > 0 (got {v})"));
                }
            }
        }
        VolModel::SlowCir(s) => check_slow_cir(&mut report, &s),
        VolModel::Multiscale { fast, slow } => {
            check_fast_cir(&mut report, &fast);
            check_slow_cir(&mut report, &slow);
        }
    }
    report
}

fn check_fast_cir<T: Real>(report: &mut ValidationReport, f: &FastCir<T>) {
    let zero = T::zero();
    for (field, v) in [("chi", f.chi), ("mu", f.mu), ("psi", f.psi), ("epsilon", f.epsilon)] {
        if !(v.is_finite() && v > zero) {
            report.fail(field, format!("must be > 0 (got {v})"));
        }
    }
    let standard = f.psi * f.psi < T::two() * f.chi * f.mu;
    let printed = f.psi * f.psi < T::two() * f.mu;
    if !standard {
        report.fail(
            "psi",
            format!("Feller condition psi^2 < 2 chi mu violated (psi={}, chi={}, mu={})", f.psi, f.chi, f.mu),
        );
    }
    if standard != printed {
        report.warnings.push(format!(
            "fast CIR: psi^2 < 2 chi mu is {standard} but psi^2 < 2 mu is {printed}"
        ));
    }
}

fn check_slow_cir<T: Real>(report: &mut ValidationReport, s: &SlowCir<T>) {
    let zero = T::zero();
    for (field, v) in [("m_s", s.m_s), ("beta_g", s.beta_g), ("delta", s.delta)] {
        if !(v.is_finite() && v > zero) {
            report.fail(field, format!("must be > 0 (got {v})"));
        }
    }
    // the slow factor's mean-reversion rate is 1 in its own clock
    if !(s.beta_g * s.beta_g < T::two() * s.m_s) {
        report.fail(
            "beta_g",
            format!("Feller condition beta_g^2 < 2 m_s violated (beta_g={}, m_s={})", s.beta_g, s.m_s),
        );
    }
}

//! Flat `key = value` configuration documents.
//!
//! One pair per line, `#` starts a comment, reals use `.` as decimal point.
//! Keys outside [`CONFIG_KEYS`] are rejected.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Correlations, FastCir, FastExpOu, MarketParams, MarketState, SlowCir, VolModel, VolSpec};

/// Every accepted key, in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "rho",
    "gamma",
    "cost_k",
    "lambda",
    "beta",
    "kappa",
    "eta",
    "vol_model",
    "sigma",
    "chi",
    "mu",
    "psi",
    "epsilon",
    "m_scale",
    "theta_r",
    "sigma_hat",
    "m_s",
    "beta_g",
    "delta",
    "rho1",
    "rho2",
    "rho12",
    "q0",
    "l0",
    "x0",
    "y0",
    "z0",
    "horizon_years",
    "dt",
    "n_paths",
    "seed",
    "w_ref",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key \"{key}\"")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key \"{key}\"")]
    DuplicateKey { line: usize, key: String },
    #[error("missing required key \"{key}\"")]
    MissingKey { key: String },
    #[error("line {line}: invalid value for \"{key}\": {message}")]
    InvalidValue {
        line: usize,
        key: String,
        message: String,
    },
}

/// Simulation settings. `w_ref` is only required by the Monte Carlo commands.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimSettings {
    pub horizon_years: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub w_ref: Option<f64>,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            horizon_years: 2.0,
            dt: 1.0 / 2520.0,
            n_paths: 10_000,
            seed: 0,
            w_ref: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FullConfig {
    pub params: MarketParams,
    pub vol: VolSpec,
    pub initial: MarketState,
    pub sim: SimSettings,
}

struct Entries {
    map: BTreeMap<&'static str, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &'static str) -> Option<&(usize, String)> {
        self.map.get(key)
    }

    fn real_opt(&self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| ConfigError::InvalidValue {
                    line: *line,
                    key: key.to_string(),
                    message: format!("expected a finite decimal real, got \"{v}\""),
                }),
        }
    }

    fn real(&self, key: &'static str) -> Result<f64, ConfigError> {
        self.real_opt(key)?.ok_or_else(|| ConfigError::MissingKey {
            key: key.to_string(),
        })
    }

    fn real_or(&self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.real_opt(key)?.unwrap_or(default))
    }

    fn integer_or<I: std::str::FromStr>(&self, key: &'static str, default: I) -> Result<I, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v.parse::<I>().map_err(|_| ConfigError::InvalidValue {
                line: *line,
                key: key.to_string(),
                message: format!("expected a non-negative integer, got \"{v}\""),
            }),
        }
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError::Parse {
                line,
                message: format!("expected `key = value`, got \"{content}\""),
            });
        };
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Parse {
                line,
                message: "empty key or value".to_string(),
            });
        }
        let Some(known) = CONFIG_KEYS.iter().copied().find(|k| *k == key) else {
            return Err(ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            });
        };
        if map.insert(known, (line, value.to_string())).is_some() {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.to_string(),
            });
        }
    }
    Ok(Entries { map })
}

/// Parse a configuration document.
///
/// Market constants are required. `vol_model` defaults to `constant`; the
/// keys of the chosen model are then required. Correlations, initial state
/// and simulation settings have defaults.
pub fn load_config(text: &str) -> Result<FullConfig, ConfigError> {
    let e = tokenize(text)?;

    let params = MarketParams {
        rho: e.real("rho")?,
        gamma: e.real("gamma")?,
        cost_k: e.real("cost_k")?,
        lambda: e.real("lambda")?,
        beta: e.real("beta")?,
        kappa: e.real("kappa")?,
        eta: e.real("eta")?,
    };

    let fast_cir = |e: &Entries| -> Result<FastCir, ConfigError> {
        Ok(FastCir {
            chi: e.real("chi")?,
            mu: e.real("mu")?,
            psi: e.real("psi")?,
            epsilon: e.real("epsilon")?,
        })
    };
    let slow_cir = |e: &Entries| -> Result<SlowCir, ConfigError> {
        Ok(SlowCir {
            m_s: e.real("m_s")?,
            beta_g: e.real("beta_g")?,
            delta: e.real("delta")?,
        })
    };

    let model_name = e.raw("vol_model").map(|(l, v)| (*l, v.as_str())).unwrap_or((0, "constant"));
    let model = match model_name.1 {
        "constant" => VolModel::Constant {
            sigma: e.real("sigma")?,
        },
        "fast_cir" => VolModel::FastCir(fast_cir(&e)?),
        "fast_expou" => VolModel::FastExpOu(FastExpOu {
            m: e.real("m_scale")?,
            theta_r: e.real("theta_r")?,
            sigma_hat: e.real("sigma_hat")?,
            epsilon: e.real("epsilon")?,
        }),
        "slow_cir" => VolModel::SlowCir(slow_cir(&e)?),
        "multiscale" => VolModel::Multiscale {
            fast: fast_cir(&e)?,
            slow: slow_cir(&e)?,
        },
        other => {
            return Err(ConfigError::InvalidValue {
                line: model_name.0,
                key: "vol_model".to_string(),
                message: format!(
                    "expected one of constant, fast_cir, fast_expou, slow_cir, multiscale; got \"{other}\""
                ),
            })
        }
    };
    let correlations = Correlations {
        rho1: e.real_or("rho1", 0.0)?,
        rho2: e.real_or("rho2", 0.0)?,
        rho12: e.real_or("rho12", 0.0)?,
    };

    let y_default = match model {
        VolModel::FastCir(f) | VolModel::Multiscale { fast: f, .. } => f.mu,
        _ => 0.0,
    };
    let z_default = match model {
        VolModel::SlowCir(s) | VolModel::Multiscale { slow: s, .. } => s.m_s,
        _ => 0.0,
    };
    let initial = MarketState {
        q: e.real_or("q0", 0.0)?,
        l: e.real_or("l0", 0.0)?,
        x: e.real_or("x0", 0.0)?,
        y: e.real_or("y0", y_default)?,
        z: e.real_or("z0", z_default)?,
        p: 0.0,
        t: 0.0,
    };

    let defaults = SimSettings::default();
    let sim = SimSettings {
        horizon_years: e.real_or("horizon_years", defaults.horizon_years)?,
        dt: e.real_or("dt", defaults.dt)?,
        n_paths: e.integer_or("n_paths", defaults.n_paths)?,
        seed: e.integer_or("seed", defaults.seed)?,
        w_ref: e.real_opt("w_ref")?,
    };

    Ok(FullConfig {
        params,
        vol: VolSpec { model, correlations },
        initial,
        sim,
    })
}

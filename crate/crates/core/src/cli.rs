//! Command-line front end: configuration in, CSV out.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::fast_asym::{
    cir_semigroup, default_horizon, phi_cir, phi_expou_approx, phi_expou_quadrature, phi_quadrature, speed_aim_fast,
    DEFAULT_TOL,
};
use crate::impact_series::{eval_series, expand_theta, normalized_error, truncate};
use crate::model::{load_config, validate, ConfigError, FullConfig, MarketParams, MarketState, VolModel};
use crate::montecarlo::{simulate_compare, sweep, PnLStats, SimConfig, SimResult, SweepVar};
use crate::riccati::{aim_and_speed, control_rate, max_abs_residual, solve_constant_vol, CoeffsA};
use crate::sensitivity::{default_step, fd_derivatives};
use crate::slow_asym::{b_residuals, cross_check_b, d_pde_residual, solve_d, speed_aim_slow, CoeffsD, SlowModel};

const EXIT_CODES: &str = "\
Exit codes:
  0   success
  2   command-line or configuration parse error
  3   invalid parameters or input
  4   no admissible root of the coefficient equations
  5   iteration or quadrature did not converge
  6   singular linear system
  7   degenerate tracking speed
  8   unstable simulation step (reduce dt)
  9   file input/output error
  10  correction integrand does not decay
  11  closed-form slow correction undefined (Gamma near zero)

No output file is written when the exit code is nonzero.";

#[derive(Debug, Parser)]
#[command(
    name = "sv-trading",
    version,
    about = "Optimal trading with transaction costs, price impact, return signal and stochastic volatility",
    after_help = EXIT_CODES
)]
pub struct Cli {
    /// Configuration file (`key = value` lines).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output CSV file; standard output when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the constant-volatility coefficients.
    Solve(SolveArgs),
    /// Compare the small-impact expansion with the exact coefficients.
    Expand(ExpandArgs),
    /// Derivatives of the coefficients along the slow factor.
    Sensitivity(ZArgs),
    /// Fast-factor correction along the fast factor.
    FastCorrection(YArgs),
    /// Slow-factor correction coefficients along the slow factor.
    SlowCorrection(ZArgs),
    /// Monte Carlo comparison of baseline and corrected strategies.
    Simulate(SimulateArgs),
    /// Monte Carlo comparison over initial factor levels.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Impact scales multiplying lambda and beta.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub theta_grid: Option<Vec<f64>>,
    /// Transaction cost levels K.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub k_grid: Option<Vec<f64>>,
    /// Slow factor levels (slow_cir and multiscale models).
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub z_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// Impact scales multiplying lambda and beta.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub theta_grid: Option<Vec<f64>>,
    /// Transaction cost levels K.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub k_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ZArgs {
    /// Slow factor levels; defaults to z0.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub z_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct YArgs {
    /// Fast factor levels; defaults to y0.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub y_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Also write per-path results to this CSV file.
    #[arg(long, value_name = "PATH")]
    pub paths_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Initial slow factor levels.
    #[arg(long, value_delimiter = ',', value_name = "LIST", conflicts_with = "y_grid")]
    pub z_grid: Option<Vec<f64>>,
    /// Initial fast factor levels.
    #[arg(long, value_delimiter = ',', value_name = "LIST")]
    pub y_grid: Option<Vec<f64>>,
}

/// Failure with its exit code and one-line diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Self::new(3, message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidInput(_) => 3,
            Error::NoAdmissibleRoot => 4,
            Error::NonConvergence { .. } => 5,
            Error::SingularSystem { .. } => 6,
            Error::DegenerateSpeed => 7,
            Error::UnstableStep { .. } => 8,
            Error::NonDecayingIntegrand { .. } => 10,
            Error::DegenerateGamma { .. } => 11,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::new(2, format!("config: {e}"))
    }
}

/// Fixed formatting with 12 significant digits, independent of locale.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "NaN".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let rounded: f64 = format!("{v:.11e}").parse().unwrap_or(v);
    let a = rounded.abs();
    if rounded == 0.0 {
        "0".into()
    } else if (1e-5..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:.11e}")
    }
}

struct Csv(String);

impl Csv {
    fn new(header: &[&str]) -> Self {
        Csv(header.join(",") + "\n")
    }

    fn row(&mut self, fields: impl IntoIterator<Item = String>) {
        let line = fields.into_iter().collect::<Vec<_>>().join(",");
        let _ = writeln!(self.0, "{line}");
    }
}

fn nums(values: impl IntoIterator<Item = f64>) -> impl Iterator<Item = String> {
    values.into_iter().map(fmt_num)
}

const A_COLUMNS: [&str; 7] = CoeffsA::<f64>::NAMES;

fn grid_or(grid: &Option<Vec<f64>>, default: f64, name: &str) -> Result<Vec<f64>, CliError> {
    match grid {
        None => Ok(vec![default]),
        Some(v) if v.is_empty() => Err(CliError::invalid(format!("--{name} is empty"))),
        Some(v) if v.iter().any(|x| !x.is_finite()) => Err(CliError::invalid(format!("--{name} has a non-finite value"))),
        Some(v) => Ok(v.clone()),
    }
}

/// Slow-factor pipeline implied by the configured model.
fn slow_model(cfg: &FullConfig, params: MarketParams) -> Result<SlowModel, CliError> {
    let rho2 = cfg.vol.correlations.rho2;
    match cfg.vol.model {
        VolModel::SlowCir(factor) => Ok(SlowModel {
            params,
            factor,
            rho2,
            scale: 1.0,
        }),
        VolModel::Multiscale { fast, slow } => Ok(SlowModel {
            params,
            factor: slow,
            rho2,
            scale: fast.mu,
        }),
        _ => Err(CliError::invalid("this command requires vol_model = slow_cir or multiscale")),
    }
}

fn depends_on_z(cfg: &FullConfig) -> bool {
    matches!(cfg.vol.model, VolModel::SlowCir(_) | VolModel::Multiscale { .. })
}

fn cmd_solve(cfg: &FullConfig, a: &SolveArgs) -> Result<String, CliError> {
    let thetas = grid_or(&a.theta_grid, 1.0, "theta-grid")?;
    let ks = grid_or(&a.k_grid, cfg.params.cost_k, "k-grid")?;
    if a.z_grid.is_some() && !depends_on_z(cfg) {
        return Err(CliError::invalid("--z-grid requires vol_model = slow_cir or multiscale"));
    }
    let zs = grid_or(&a.z_grid, cfg.initial.z, "z-grid")?;
    let mut header = vec!["theta", "cost_k", "z", "sigma2"];
    header.extend(A_COLUMNS);
    header.extend(["max_residual", "speed", "aim"]);
    let mut csv = Csv::new(&header);
    for &theta in &thetas {
        for &k in &ks {
            let p = MarketParams {
                cost_k: k,
                ..cfg.params.with_impact_scale(theta)
            };
            check_params(&p, cfg)?;
            for &z in &zs {
                let sigma2 = cfg.vol.effective_variance(z);
                let c = solve_constant_vol(&p, sigma2)?;
                let (speed, aim) = aim_and_speed(&p, &c, &cfg.initial)?;
                let mut row = vec![theta, k, z, sigma2];
                row.extend(c.to_array());
                row.extend([max_abs_residual(&p, sigma2, &c), speed, aim]);
                csv.row(nums(row));
            }
        }
    }
    Ok(csv.0)
}

fn cmd_expand(cfg: &FullConfig, a: &ExpandArgs) -> Result<String, CliError> {
    let thetas = grid_or(&a.theta_grid, 1.0, "theta-grid")?;
    let ks = grid_or(&a.k_grid, cfg.params.cost_k, "k-grid")?;
    let sigma2 = cfg.vol.effective_variance(cfg.initial.z);
    let mut csv = Csv::new(&["cost_k", "theta", "order", "coefficient", "exact", "series", "normalized_error"]);
    for &k in &ks {
        let unit = MarketParams { cost_k: k, ..cfg.params };
        check_params(&unit, cfg)?;
        let series = expand_theta(&unit, sigma2, 2)?;
        for &theta in &thetas {
            let exact = solve_constant_vol(&unit.with_impact_scale(theta), sigma2)?;
            for order in [1usize, 2] {
                let approx = eval_series(&truncate(&series, order), theta);
                let err = normalized_error(&approx, &exact);
                for i in 0..7 {
                    let mut row = vec![fmt_num(k), fmt_num(theta), order.to_string(), A_COLUMNS[i].to_string()];
                    row.extend(nums([exact.to_array()[i], approx.to_array()[i], err[i]]));
                    csv.row(row);
                }
            }
        }
    }
    Ok(csv.0)
}

fn cmd_sensitivity(cfg: &FullConfig, a: &ZArgs) -> Result<String, CliError> {
    let model = slow_model(cfg, cfg.params)?;
    let zs = grid_or(&a.z_grid, cfg.initial.z, "z-grid")?;
    let mut csv = Csv::new(&["z", "coefficient", "value", "derivative", "fd_derivative", "relative_diff"]);
    for &z in &zs {
        let (c, d) = model.coefficients(z)?;
        let scale = model.scale;
        let fd = fd_derivatives(&model.params, move |zz: f64| (scale * zz).sqrt(), z, default_step(z).min(0.5 * z))?;
        for i in 0..7 {
            let (v, dv, f) = (c.to_array()[i], d.to_array()[i], fd.to_array()[i]);
            let rel = (dv - f).abs() / dv.abs().max(1e-12);
            let mut row = vec![fmt_num(z), A_COLUMNS[i].to_string()];
            row.extend(nums([v, dv, f, rel]));
            csv.row(row);
        }
    }
    Ok(csv.0)
}

fn cmd_fast(cfg: &FullConfig, a: &YArgs) -> Result<String, CliError> {
    let p = &cfg.params;
    let ys = grid_or(&a.y_grid, cfg.initial.y, "y-grid")?;
    let z = cfg.initial.z;
    let base = solve_constant_vol(p, cfg.vol.effective_variance(z))?;
    let (phi_at, quad_at, epsilon): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> crate::error::Result<f64>>, f64) =
        match cfg.vol.model {
            VolModel::FastCir(f) => (
                Box::new(move |y| phi_cir(p.gamma, f.chi, f.mu, y)),
                Box::new(move |y| phi_quadrature(p.gamma, cir_semigroup(f.chi, f.mu, y), default_horizon(f.chi), DEFAULT_TOL)),
                f.epsilon,
            ),
            VolModel::Multiscale { fast: f, .. } => (
                Box::new(move |y| z * phi_cir(p.gamma, f.chi, f.mu, y)),
                Box::new(move |y| {
                    phi_quadrature(p.gamma, cir_semigroup(f.chi, f.mu, y), default_horizon(f.chi), DEFAULT_TOL).map(|v| z * v)
                }),
                f.epsilon,
            ),
            VolModel::FastExpOu(f) => (
                Box::new(move |y| phi_expou_approx(p.gamma, f.m, f.theta_r, f.sigma_hat, y)),
                Box::new(move |y| phi_expou_quadrature(p.gamma, &f, y, DEFAULT_TOL)),
                f.epsilon,
            ),
            _ => return Err(CliError::invalid("fast-correction requires vol_model = fast_cir, fast_expou or multiscale")),
        };
    let mut csv = Csv::new(&["y", "phi", "phi_quadrature", "speed_base", "aim_base", "speed", "aim", "control"]);
    let (speed_c, aim_c) = aim_and_speed(p, &base, &cfg.initial)?;
    for &y in &ys {
        let st = MarketState { y, ..cfg.initial };
        let phi = phi_at(y);
        let (speed, aim) = speed_aim_fast(p, &base, phi, epsilon, &st)?;
        let u = control_rate(p, &base, &st) - epsilon / p.cost_k * st.q * phi;
        csv.row(nums([y, phi, quad_at(y)?, speed_c, aim_c, speed, aim, u]));
    }
    Ok(csv.0)
}

const PDE_PROBES: [(f64, f64, f64); 3] = [(1.0, 0.0, 0.0), (-0.7, 0.3, 1.9), (2.0, -1.0, -0.5)];

fn cmd_slow(cfg: &FullConfig, a: &ZArgs) -> Result<String, CliError> {
    let model = slow_model(cfg, cfg.params)?;
    let p = &model.params;
    let delta = model.factor.delta;
    let zs = grid_or(&a.z_grid, cfg.initial.z, "z-grid")?;
    let mut header = vec!["z", "b_q", "b_l", "b_x", "b_residual", "gamma", "closed_b_q", "closed_b_l", "closed_b_x", "closed_agrees"];
    header.extend(CoeffsD::<f64>::NAMES);
    header.extend(["d_pde_residual", "speed_base", "aim_base", "speed", "aim"]);
    let mut csv = Csv::new(&header);
    for &z in &zs {
        let (pt, forcing) = model.d_forcing(z)?;
        let g = model.factor.g(z);
        let b_res = b_residuals(p, &pt.a, &pt.a_prime, g, model.rho2, &pt.b).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let check = cross_check_b(p, &pt.a, &pt.a_prime, g, model.rho2)?;
        let d = solve_d(p, &pt.a, &forcing)?;
        let st = cfg.initial;
        let pde = PDE_PROBES
            .iter()
            .chain(std::iter::once(&(st.q, st.l, st.x)))
            .map(|&(q, l, x)| d_pde_residual(p, &pt.a, &forcing, &d, q, l, x).abs())
            .fold(0.0f64, f64::max);
        let (speed_c, aim_c) = aim_and_speed(p, &pt.a, &st)?;
        let (speed, aim) = speed_aim_slow(p, &pt.a, &pt.b, delta, &st)?;
        let mut row: Vec<String> = nums([z]).chain(nums(pt.b.to_array())).chain(nums([b_res, check.gamma])).collect();
        match check.closed_form {
            Some(c) => row.extend(nums(c.to_array())),
            None => row.extend(["".to_string(), "".to_string(), "".to_string()]),
        }
        row.push(u8::from(check.agrees).to_string());
        row.extend(nums(d.to_array()));
        row.extend(nums([pde, speed_c, aim_c, speed, aim]));
        csv.row(row);
    }
    Ok(csv.0)
}

const STATS_COLUMNS: [&str; 9] = ["mean", "std", "ci_lo", "ci_hi", "mean_bps", "std_bps", "ci_lo_bps", "ci_hi_bps", "n"];

fn stats_fields(s: &PnLStats) -> Vec<String> {
    let mut v: Vec<String> = nums([s.mean, s.std, s.ci95_lo, s.ci95_hi, s.mean_bps, s.std_bps, s.ci95_lo_bps, s.ci95_hi_bps]).collect();
    v.push(s.n.to_string());
    v
}

fn sim_setup(cfg: &FullConfig) -> Result<SimConfig, CliError> {
    Ok(SimConfig::from_settings(&cfg.sim)?)
}

fn summary_rows(csv: &mut Csv, r: &SimResult) {
    for (name, s) in [
        ("baseline", &r.baseline),
        ("corrected", &r.corrected),
        ("gain", &r.gain),
        ("objective_baseline", &r.objective_baseline),
        ("objective_corrected", &r.objective_corrected),
        ("objective_gain", &r.objective_gain),
    ] {
        let mut row = vec![name.to_string()];
        row.extend(stats_fields(s));
        csv.row(row);
    }
}

fn paths_csv(r: &SimResult) -> String {
    let mut csv = Csv::new(&["path_id", "pnl_baseline", "pnl_corrected", "gain", "objective_baseline", "objective_corrected", "objective_gain"]);
    for p in &r.paths {
        let mut row = vec![p.path_id.to_string()];
        row.extend(nums([p.pnl_baseline, p.pnl_corrected, p.gain(), p.objective_baseline, p.objective_corrected, p.objective_gain()]));
        csv.row(row);
    }
    csv.0
}

fn cmd_simulate(cfg: &FullConfig) -> Result<(String, SimResult), CliError> {
    let sim = sim_setup(cfg)?;
    let r = simulate_compare(&sim, &cfg.params, &cfg.vol, &cfg.initial)?;
    let mut header = vec!["strategy"];
    header.extend(STATS_COLUMNS);
    let mut csv = Csv::new(&header);
    summary_rows(&mut csv, &r);
    Ok((csv.0, r))
}

fn cmd_sweep(cfg: &FullConfig, a: &SweepArgs) -> Result<String, CliError> {
    let sim = sim_setup(cfg)?;
    let (var, name, values) = match (&a.z_grid, &a.y_grid) {
        (Some(z), None) => (SweepVar::Z0, "z0", grid_or(&Some(z.clone()), 0.0, "z-grid")?),
        (None, Some(y)) => (SweepVar::Y0, "y0", grid_or(&Some(y.clone()), 0.0, "y-grid")?),
        _ => return Err(CliError::invalid("sweep needs exactly one of --z-grid or --y-grid")),
    };
    if var == SweepVar::Z0 && !depends_on_z(cfg) {
        return Err(CliError::invalid("--z-grid requires vol_model = slow_cir or multiscale"));
    }
    let results = sweep(&sim, &cfg.params, &cfg.vol, &cfg.initial, var, &values)?;
    let mut header = vec![name];
    header.extend(STATS_COLUMNS);
    header.extend(["objective_mean", "objective_ci_lo", "objective_ci_hi", "var_baseline", "var_corrected"]);
    let mut csv = Csv::new(&header);
    for (v, r) in &results {
        let mut row = vec![fmt_num(*v)];
        row.extend(stats_fields(&r.gain));
        let o = &r.objective_gain;
        row.extend(nums([o.mean, o.ci95_lo, o.ci95_hi, r.baseline.variance(), r.corrected.variance()]));
        csv.row(row);
    }
    Ok(csv.0)
}

fn check_params(p: &MarketParams, cfg: &FullConfig) -> Result<(), CliError> {
    let report = validate(p, &cfg.vol);
    if report.is_valid() {
        Ok(())
    } else {
        Err(CliError::invalid(format!("invalid parameters: {}", report.summary())))
    }
}

/// Run a parsed command against configuration text; returns the files to
/// write as `(path or None for stdout, contents)`.
pub fn execute(cli: &Cli, config_text: &str) -> Result<Vec<(Option<PathBuf>, String)>, CliError> {
    let cfg = load_config(config_text)?;
    check_params(&cfg.params, &cfg)?;
    let main = |text: String| (cli.out.clone(), text);
    Ok(match &cli.command {
        Command::Solve(a) => vec![main(cmd_solve(&cfg, a)?)],
        Command::Expand(a) => vec![main(cmd_expand(&cfg, a)?)],
        Command::Sensitivity(a) => vec![main(cmd_sensitivity(&cfg, a)?)],
        Command::FastCorrection(a) => vec![main(cmd_fast(&cfg, a)?)],
        Command::SlowCorrection(a) => vec![main(cmd_slow(&cfg, a)?)],
        Command::Simulate(a) => {
            let (text, r) = cmd_simulate(&cfg)?;
            let mut files = vec![main(text)];
            if let Some(path) = &a.paths_out {
                files.push((Some(path.clone()), paths_csv(&r)));
            }
            files
        }
        Command::Sweep(a) => vec![main(cmd_sweep(&cfg, a)?)],
    })
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(9, format!("{}: {e}", path.display()))
}

/// Write through a sibling temporary file so that a failed write leaves no partial output.
fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, text).map_err(|e| io_error(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        io_error(path, e)
    })
}

/// Full run: read the configuration, compute, then write every output.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::new(2, "missing required --config PATH"))?;
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let outputs = execute(cli, &text)?;
    for (target, contents) in outputs {
        match target {
            Some(p) => write_atomic(&p, &contents)?,
            None => print!("{contents}"),
        }
    }
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    const FIG1: &str = "rho = 0.2\ngamma = 5\ncost_k = 1\nlambda = 1\nbeta = 1\nkappa = 1\neta = 1\nsigma = 1\n";

    const SLOW: &str = "\
rho = 0.2
gamma = 5
cost_k = 1
lambda = 0.1
beta = 0.1
kappa = 1
eta = 1
vol_model = slow_cir
m_s = 0.2
beta_g = 0.25
delta = 0.0625
rho2 = 0.5
x0 = 2
z0 = 0.3
horizon_years = 0.1
dt = 0.01
n_paths = 50
seed = 11
w_ref = 100
";

    /// Run the command line in-process with `config` written to a file in `dir`.
    fn run_in(dir: &Path, config: &str, args: &[&str]) -> i32 {
        let cfg = dir.join("run.conf");
        std::fs::write(&cfg, config).unwrap();
        let mut argv = vec!["sv-trading".to_string(), "--config".to_string(), cfg.display().to_string()];
        argv.extend(args.iter().map(|a| a.to_string()));
        main_with_args(argv)
    }

    fn table(path: &Path) -> Vec<Vec<String>> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt_num(0.0), "0");
        assert_eq!(fmt_num(1.0), "1");
        assert_eq!(fmt_num(0.1 + 0.2), "0.3");
        assert_eq!(fmt_num(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt_num(-1234.5678901234567), "-1234.56789012");
        assert_eq!(fmt_num(1.5e-9), "1.50000000000e-9");
        assert_eq!(fmt_num(f64::NAN), "NaN");
    }

    #[test]
    fn error_codes_are_distinct() {
        let errs = [
            Error::InvalidInput(String::new()),
            Error::NoAdmissibleRoot,
            Error::NonConvergence { iterations: 1, residual: 1.0 },
            Error::SingularSystem { condition: 1.0 },
            Error::DegenerateSpeed,
            Error::UnstableStep { time: 0.0 },
            Error::NonDecayingIntegrand { tail: 1.0, tol: 1.0 },
            Error::DegenerateGamma { gamma: 0.0 },
        ];
        let mut codes: Vec<i32> = errs.into_iter().map(|e| CliError::from(e).code).collect();
        codes.push(CliError::from(ConfigError::MissingKey { key: "rho".into() }).code);
        codes.push(9);
        let n = codes.len();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), n);
        assert!(codes.iter().all(|&c| c > 0));
    }

    #[test]
    fn help_documents_exit_codes() {
        let text = Cli::command().render_long_help().to_string();
        for code in 2..=11 {
            assert!(text.contains(&format!("  {code} ")), "{code}");
        }
        for cmd in ["solve", "expand", "sensitivity", "fast-correction", "slow-correction", "simulate", "sweep"] {
            assert!(text.contains(cmd), "{cmd}");
        }
    }

    #[test]
    fn solve_writes_residual_column() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("solve.csv");
        assert_eq!(run_in(dir.path(), FIG1, &["solve", "--theta-grid", "0.1,0.05", "--out", out.to_str().unwrap()]), 0);
        let t = table(&out);
        assert_eq!(t.len(), 3);
        let col = t[0].iter().position(|h| h == "max_residual").unwrap();
        for r in &t[1..] {
            assert!(r[col].parse::<f64>().unwrap() < 1e-10);
        }
    }

    #[test]
    fn failures_leave_no_output() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("never.csv");
        let o = out.to_str().unwrap();
        assert_eq!(run_in(dir.path(), "rho 0.2\n", &["solve", "--out", o]), 2);
        assert_eq!(run_in(dir.path(), &FIG1.replace("rho = 0.2", "rho = -1"), &["solve", "--out", o]), 3);
        assert_eq!(run_in(dir.path(), FIG1, &["solve", "--theta-grid", "0.1,abc", "--out", o]), 2);
        assert_eq!(run_in(dir.path(), FIG1, &["slow-correction", "--out", o]), 3);
        assert_eq!(run_in(dir.path(), SLOW, &["sweep", "--out", o]), 3);
        let unstable = SLOW
            .replace("dt = 0.01", "dt = 0.05")
            .replace("horizon_years = 0.1", "horizon_years = 50")
            .replace("kappa = 1", "kappa = 50");
        assert_eq!(run_in(dir.path(), &unstable, &["simulate", "--out", o]), 8);
        assert!(!out.exists());
        assert_eq!(main_with_args(["sv-trading", "--config", "/nonexistent/x.conf", "solve"]), 9);
    }

    #[test]
    fn sweep_and_path_dump_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sweep.csv");
        let code = run_in(dir.path(), SLOW, &["sweep", "--z-grid", "0.1,0.2,0.3,0.4,0.5,0.6", "--out", out.to_str().unwrap()]);
        assert_eq!(code, 0);
        let t = table(&out);
        assert_eq!(t.len(), 7);
        assert_eq!(&t[0][..5], ["z0", "mean", "std", "ci_lo", "ci_hi"]);

        let summary = dir.path().join("sim.csv");
        let paths = dir.path().join("paths.csv");
        let args = ["simulate", "--out", summary.to_str().unwrap(), "--paths-out", paths.to_str().unwrap()];
        assert_eq!(run_in(dir.path(), SLOW, &args), 0);
        let t = table(&paths);
        assert_eq!(t.len(), 51);
        assert_eq!(t[0][..4], ["path_id", "pnl_baseline", "pnl_corrected", "gain"]);
        let s = table(&summary);
        let names: Vec<&str> = s.iter().skip(1).map(|r| r[0].as_str()).collect();
        assert_eq!(names[..3], ["baseline", "corrected", "gain"]);
    }

    #[test]
    fn execute_targets_stdout_without_out_flag() {
        let cli = Cli::try_parse_from(["sv-trading", "slow-correction", "--z-grid", "0.2,0.4"]).unwrap();
        let files = execute(&cli, SLOW).unwrap();
        assert_eq!(files.len(), 1);
        assert!(files[0].0.is_none());
        let lines: Vec<&str> = files[0].1.lines().collect();
        assert_eq!(lines.len(), 3);
        let col = lines[0].split(',').position(|h| h == "closed_agrees").unwrap();
        assert!(lines[1..].iter().all(|l| l.split(',').nth(col) == Some("1")));
    }
}

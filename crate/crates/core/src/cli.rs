//! Command-line front end: configuration resolution, experiment dispatch and
//! artifact emission.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::backward::{Backend, CauchyReport, RegressionBasis};
use crate::error::{Error, Result};
use crate::fracnoise::{CoefficientKind, FgnCovariance, HurstParam, InnovationSystem, NoiseEnsemble};
use crate::invest::{run_experiment, AdjointProblem, Artifacts, ClampCounts, Consumption, InvestConfig, InvestModel};
use crate::io::write_json;
use crate::linalg;
use crate::smp::{check_necessary_condition_with, duality_check, hamiltonian_with_prediction, verify_convexity, ConvexityReport, DualityReport, HamiltonianArgs, NecessaryReport};
use crate::spaces::{Direction, WeightedNormParams};

/// Name of the resolved-configuration snapshot written beside every output.
pub const SNAPSHOT: &str = "config.resolved.json";

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "FRACCTRL_THREADS";

/// Model parameters of the investment experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvestParams {
    pub mu: f64,
    pub r: f64,
    pub sigma: f64,
    pub beta_exp: f64,
    pub c: f64,
    pub q_weight: f64,
    pub r_weight: f64,
    pub consumption: Consumption,
    pub x0: f64,
    pub adjoint_margin: usize,
}

impl Default for InvestParams {
    fn default() -> Self {
        let d = InvestConfig::default();
        Self {
            mu: d.mu,
            r: d.r,
            sigma: d.sigma,
            beta_exp: d.beta_exp,
            c: d.c,
            q_weight: d.q_weight,
            r_weight: d.r_weight,
            consumption: d.consumption,
            x0: d.x0,
            adjoint_margin: d.adjoint_margin,
        }
    }
}

/// Everything a run depends on. Serialized verbatim as the snapshot, which
/// can be fed back through `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub hurst: f64,
    /// Hurst exponents swept by `invest`.
    pub hurst_values: Vec<f64>,
    pub horizon: usize,
    pub paths: usize,
    pub theta: f64,
    /// norm exponent base `b`; powers are `2b` tempered by the δ products
    pub b: f64,
    pub lambda: f64,
    pub gamma_exp: f64,
    pub n_list: Vec<usize>,
    pub trials: usize,
    pub tolerance: f64,
    pub convexity_pairs: usize,
    pub invest: InvestParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("out"),
            hurst: 0.75,
            hurst_values: vec![0.75, 0.25],
            horizon: 50,
            paths: 1000,
            theta: 2.0,
            b: 1.0,
            lambda: 1.0,
            gamma_exp: 1.1,
            n_list: vec![20, 40, 80, 160],
            trials: 100,
            tolerance: 1e-8,
            convexity_pairs: 2000,
            invest: InvestParams::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for h in std::iter::once(self.hurst).chain(self.hurst_values.iter().copied()) {
            HurstParam::new(h).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.hurst_values.is_empty() {
            return bad("hurst_values must not be empty".into());
        }
        if self.horizon == 0 || self.paths == 0 {
            return bad("horizon and paths must be positive".into());
        }
        if self.theta <= 1.0 || self.b <= 0.0 || !self.theta.is_finite() || !self.b.is_finite() {
            return bad(format!("need theta > 1 and b > 0, got theta={}, b={}", self.theta, self.b));
        }
        if self.lambda <= 0.0 || self.gamma_exp <= 1.0 || !self.lambda.is_finite() || !self.gamma_exp.is_finite() {
            return bad(format!(
                "need lambda > 0 and gamma_exp > 1, got lambda={}, gamma_exp={}",
                self.lambda, self.gamma_exp
            ));
        }
        if self.n_list.is_empty() || self.n_list[0] == 0 || self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return bad("n_list must be positive and strictly ascending".into());
        }
        if self.tolerance < 0.0 || self.tolerance.is_nan() {
            return bad("tolerance must be non-negative".into());
        }
        self.invest_config(self.hurst)?.validate()
    }

    pub fn invest_config(&self, hurst: f64) -> Result<InvestConfig> {
        let p = &self.invest;
        Ok(InvestConfig {
            mu: p.mu,
            r: p.r,
            sigma: p.sigma,
            lambda: self.lambda,
            beta_exp: p.beta_exp,
            c: p.c,
            q_weight: p.q_weight,
            r_weight: p.r_weight,
            consumption: p.consumption.clone(),
            hurst,
            x0: p.x0,
            horizon: self.horizon,
            paths: self.paths,
            seed: self.seed,
            gamma_exp: self.gamma_exp,
            adjoint_margin: p.adjoint_margin,
        })
    }

    pub fn norm(&self, direction: Direction) -> Result<WeightedNormParams> {
        WeightedNormParams::new(self.lambda, self.gamma_exp, 2.0 * self.b, direction, self.theta)
    }

    /// Seed for auxiliary draws (trial controls, convexity pairs), derived
    /// from the run seed.
    pub fn aux_seed(&self, salt: u64) -> u64 {
        self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

#[derive(Debug, Parser)]
#[command(name = "fracctrl", version, about = "Control experiments under fractional Gaussian noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the innovation factorization, predictions and whiteness.
    NoiseCheck,
    /// Distances between truncated adjoint solutions.
    BsdeConverge,
    /// Necessary-condition, convexity and duality checks on the investment model.
    SmpCheck,
    /// Simulate optimal wealth and control for each Hurst exponent.
    Invest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::NoiseCheck => "noise-check",
            Command::BsdeConverge => "bsde-converge",
            Command::SmpCheck => "smp-check",
            Command::Invest => "invest",
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON configuration file
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Hurst exponent
    #[arg(long = "H", global = true, value_name = "FLOAT")]
    pub hurst: Option<f64>,
    /// horizon
    #[arg(long = "N", global = true, value_name = "INT")]
    pub horizon: Option<usize>,
    #[arg(long, global = true)]
    pub paths: Option<usize>,
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long = "gamma-exp", global = true)]
    pub gamma_exp: Option<f64>,
    /// comma-separated truncations
    #[arg(long = "N-list", global = true, value_delimiter = ',', value_name = "INTS")]
    pub n_list: Option<Vec<usize>>,
    /// override any configuration key, e.g. `--set invest.mu=0.2`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

fn config_err<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> Error + '_ {
    move |e| Error::Config(format!("{what}: {e}"))
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_key(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut slot = root;
    for part in key.split('.') {
        if part.is_empty() {
            return Err(Error::Config(format!("malformed key `{key}`")));
        }
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("`{key}` descends into a non-object")))?;
        slot = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    *slot = value;
    Ok(())
}

/// Defaults, then the config file, then flags, then `--set` pairs.
pub fn resolve(command: Command, flags: &Flags) -> Result<RunConfig> {
    let mut value = serde_json::to_value(RunConfig::default())?;
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path).map_err(config_err(&format!("reading {}", path.display())))?;
        let file: Value = serde_json::from_str(&text).map_err(config_err(&format!("parsing {}", path.display())))?;
        if !file.is_object() {
            return Err(Error::Config(format!("{} must hold a JSON object", path.display())));
        }
        merge(&mut value, file);
    }
    let mut direct: Vec<(&str, Value)> = Vec::new();
    if let Some(v) = flags.seed {
        direct.push(("seed", v.into()));
    }
    if let Some(v) = &flags.out {
        direct.push(("out", v.to_string_lossy().into_owned().into()));
    }
    if let Some(v) = flags.hurst {
        direct.push(("hurst", v.into()));
        if command == Command::Invest {
            direct.push(("hurst_values", vec![v].into()));
        }
    }
    if let Some(v) = flags.horizon {
        direct.push(("horizon", v.into()));
    }
    if let Some(v) = flags.paths {
        direct.push(("paths", v.into()));
    }
    if let Some(v) = flags.theta {
        direct.push(("theta", v.into()));
    }
    if let Some(v) = flags.lambda {
        direct.push(("lambda", v.into()));
    }
    if let Some(v) = flags.gamma_exp {
        direct.push(("gamma_exp", v.into()));
    }
    if let Some(v) = &flags.n_list {
        direct.push(("n_list", v.clone().into()));
    }
    for (k, v) in direct {
        set_key(&mut value, k, v)?;
    }
    for pair in &flags.set {
        let (k, raw) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{pair}`")))?;
        let v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_key(&mut value, k.trim(), v)?;
    }
    let cfg: RunConfig = serde_json::from_value(value).map_err(config_err("configuration"))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parse `argv`, run, and map the outcome to an exit status: 0 on success,
/// 1 on numerical failure, 2 on configuration errors.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("fracctrl {}: {e}", cli.command.name());
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    #[cfg(feature = "parallel")]
    {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

/// Resolve the configuration, write the snapshot and run the command.
/// Returns a short human-readable summary.
pub fn run(cli: &Cli) -> Result<String> {
    configure_threads()?;
    let cfg = resolve(cli.command, &cli.flags)?;
    std::fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join(SNAPSHOT), &cfg)?;
    match cli.command {
        Command::NoiseCheck => {
            let r = noise_check(&cfg)?;
            Ok(format!(
                "noise-check H={} N={}: reconstruction {:.3e}, inversion {:.3e}, max|γ| {:.3e}, prediction {:.3e}",
                r.hurst, r.horizon, r.reconstruction_error, r.inversion_error, r.max_abs_gamma, r.prediction_max_error
            ))
        }
        Command::BsdeConverge => {
            let r = bsde_converge(&cfg)?;
            let mut s = String::from("M,N,total\n");
            for p in &r.report.pairs {
                s.push_str(&format!("{},{},{:.6e}\n", p.m, p.n, p.total));
            }
            s.push_str(&format!("strictly decreasing: {}", r.report.strictly_decreasing));
            Ok(s)
        }
        Command::SmpCheck => {
            let r = smp_check(&cfg)?;
            Ok(format!(
                "smp-check: {} violations over {} trials (min product {:.3e}); duality gap {:.3e}",
                r.necessary.violation_count, r.necessary.trials, r.necessary.min_bracket_product, r.duality.difference
            ))
        }
        Command::Invest => {
            let runs = invest(&cfg)?;
            let lines: Vec<String> = runs
                .iter()
                .map(|r| format!("H={}: {}", r.hurst, r.artifacts.wealth.display()))
                .collect();
            Ok(lines.join("\n"))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WhitenessReport {
    pub paths: usize,
    /// largest `|mean(η_n)|·√M` over n
    pub max_mean_z: f64,
    /// largest `|corr(η_n, η_{n+1})|·√M` over n
    pub max_lag1_z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseReport {
    pub hurst: f64,
    pub horizon: usize,
    pub seed: u64,
    pub reconstruction_error: f64,
    pub inversion_error: f64,
    pub max_abs_gamma: f64,
    pub all_gamma_zero: bool,
    /// largest gap between `Σγξ` and the direct Gaussian conditional mean
    pub prediction_max_error: f64,
    pub prediction_prefixes: usize,
    pub whiteness: WhitenessReport,
}

pub fn noise_check(cfg: &RunConfig) -> Result<NoiseReport> {
    let hurst = HurstParam::new(cfg.hurst)?;
    let n = cfg.horizon;
    let sys = InnovationSystem::build(hurst, n)?;
    let noise = NoiseEnsemble::sample(&sys, cfg.seed, cfg.paths);
    let cov = FgnCovariance::new(hurst, n)?;

    let prefixes = cfg.paths.min(100);
    let mut pred_err: f64 = 0.0;
    for len in 1..n {
        let mut block = Vec::with_capacity(len * len);
        for i in 0..len {
            block.extend((0..len).map(|j| cov.get(i, j)));
        }
        let rhs: Vec<f64> = (0..len).map(|j| cov.get(len, j)).collect();
        let w = linalg::solve_spd(&block, &rhs)?;
        for p in 0..prefixes {
            let prefix = &noise.paths[p].xi[..len];
            let direct = linalg::dot(&w, prefix);
            pred_err = pred_err.max((sys.predict_next(prefix)? - direct).abs());
        }
    }

    let m = noise.len() as f64;
    let mut max_mean_z: f64 = 0.0;
    let mut max_lag1_z: f64 = 0.0;
    for k in 0..n {
        let mean = (0..noise.len()).map(|p| noise.eta(p, k)).sum::<f64>() / m;
        max_mean_z = max_mean_z.max(mean.abs() * m.sqrt());
        if k + 1 < n {
            let c = (0..noise.len()).map(|p| noise.eta(p, k) * noise.eta(p, k + 1)).sum::<f64>() / m;
            max_lag1_z = max_lag1_z.max(c.abs() * m.sqrt());
        }
    }

    let max_abs_gamma = sys.max_abs_gamma();
    let report = NoiseReport {
        hurst: cfg.hurst,
        horizon: n,
        seed: cfg.seed,
        reconstruction_error: sys.reconstruction_error(),
        inversion_error: sys.inversion_error(),
        max_abs_gamma,
        all_gamma_zero: max_abs_gamma == 0.0,
        prediction_max_error: pred_err,
        prediction_prefixes: prefixes,
        whiteness: WhitenessReport {
            paths: noise.len(),
            max_mean_z,
            max_lag1_z,
        },
    };
    write_json(&cfg.out.join("noise_report.json"), &report)?;
    for (name, kind) in [
        ("beta.csv", CoefficientKind::Beta),
        ("alpha.csv", CoefficientKind::Alpha),
        ("gamma.csv", CoefficientKind::Gamma),
    ] {
        sys.write_csv(kind, BufWriter::new(File::create(cfg.out.join(name))?))?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeReport {
    pub hurst: f64,
    pub n_list: Vec<usize>,
    #[serde(flatten)]
    pub report: CauchyReport,
}

/// Cauchy diagnostic of the investment adjoint over `n_list`.
pub fn bsde_converge(cfg: &RunConfig) -> Result<ConvergeReport> {
    let model = InvestModel::new(cfg.invest_config(cfg.hurst)?)?;
    let top = *cfg.n_list.last().expect("validated non-empty");
    let sys = InnovationSystem::build(HurstParam::new(cfg.hurst)?, top + 1)?;
    let problem = AdjointProblem::new(&model, &sys, top)?;
    let report = problem.cauchy(&cfg.n_list, &cfg.norm(Direction::Backward)?)?;
    let out = ConvergeReport {
        hurst: cfg.hurst,
        n_list: cfg.n_list.clone(),
        report,
    };
    write_json(&cfg.out.join("cauchy.json"), &out)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct SmpReport {
    pub hurst: f64,
    pub horizon: usize,
    pub paths: usize,
    pub necessary: NecessaryReport,
    /// `max |k_n + (1+λ/2)^{n−1}|` relative to `|k_n|`
    pub k_max_rel_error: f64,
    pub q_max_abs: f64,
    pub convexity: ConvexityReport,
    pub duality: DualityReport,
}

pub fn smp_check(cfg: &RunConfig) -> Result<SmpReport> {
    let icfg = cfg.invest_config(cfg.hurst)?;
    let res = run_experiment(&icfg)?;
    let brackets = res.brackets()?;
    let trial_seed = cfg.aux_seed(1);
    let necessary = check_necessary_condition_with(&brackets, &res.state, cfg.trials, cfg.tolerance, |t, p| {
        res.random_admissible(trial_seed, t, p)
    })?;

    let growth = 1.0 + 0.5 * cfg.lambda;
    let k_max_rel_error = (1..=res.adjoint.pq.truncation)
        .map(|n| {
            let want = -growth.powi(n as i32 - 1);
            ((res.adjoint.k(0, n) - want) / want).abs()
        })
        .fold(0.0, f64::max);
    let q_max_abs = res.adjoint.pq.z.iter().flatten().fold(0.0, |m: f64, q| m.max(q.abs()));

    // H in (x, y, z, u) at n = 1 with the adjoint values found above
    let n = 1.min(res.horizon());
    let frozen = HamiltonianArgs {
        n,
        x: 0.0,
        y: 0.0,
        z: 0.0,
        u: 0.0,
        p: res.adjoint.p(0, n),
        q: res.adjoint.q(0, n),
        k: res.adjoint.k(0, n),
    };
    let beta_nn = res.sys.beta(n, n);
    let pred = res.noise.prediction(0, n);
    let convexity = verify_convexity(
        |w| {
            let a = HamiltonianArgs {
                x: w[0],
                y: w[1],
                z: w[2],
                u: w[3],
                ..frozen
            };
            hamiltonian_with_prediction(&res.model, &res.model, beta_nn, pred, &a).value
        },
        &[0.0, -1.0, -1.0, 0.0],
        &[2.0, 1.0, 1.0, 1.0],
        cfg.convexity_pairs,
        cfg.aux_seed(2),
        cfg.tolerance,
    )?;

    let direction: Vec<Vec<f64>> = (0..res.state.paths())
        .map(|p| {
            res.random_admissible(cfg.aux_seed(3), 0, p)
                .iter()
                .zip(&res.state.u[p])
                .map(|(t, u)| t - u)
                .collect()
        })
        .collect();
    let duality = duality_check(
        &res.model,
        &res.model,
        &res.state,
        None,
        &brackets,
        &direction,
        &res.noise,
        &icfg.discount()?,
        &Backend::Regression(RegressionBasis::default()),
    )?;

    let report = SmpReport {
        hurst: cfg.hurst,
        horizon: cfg.horizon,
        paths: cfg.paths,
        necessary,
        k_max_rel_error,
        q_max_abs,
        convexity,
        duality,
    };
    write_json(&cfg.out.join("smp_report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct InvestRun {
    pub hurst: f64,
    pub artifacts: Artifacts,
    pub admissibility_gap: f64,
    pub mean_terminal_wealth: f64,
    pub clamp: Vec<ClampCounts>,
}

/// Run the investment experiment for every configured Hurst exponent, each
/// into its own subdirectory `H<value>`.
pub fn invest(cfg: &RunConfig) -> Result<Vec<InvestRun>> {
    let mut runs = Vec::new();
    for &h in &cfg.hurst_values {
        let res = run_experiment(&cfg.invest_config(h)?)?;
        let dir = hurst_dir(&cfg.out, h);
        let artifacts = res.write_artifacts(&dir)?;
        runs.push(InvestRun {
            hurst: h,
            artifacts,
            admissibility_gap: res.admissibility_gap(),
            mean_terminal_wealth: res.state.mean_at(res.horizon()),
            clamp: res.clamp,
        });
    }
    write_json(&cfg.out.join("invest_summary.json"), &runs)?;
    Ok(runs)
}

pub fn hurst_dir(out: &Path, h: f64) -> PathBuf {
    out.join(format!("H{h}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags() -> Flags {
        Flags::default()
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = resolve(Command::Invest, &flags()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn flags_and_sets() {
        let f = Flags {
            hurst: Some(0.3),
            n_list: Some(vec![5, 10]),
            set: vec!["invest.mu=0.2".into(), "invest.consumption={\"at\":[3]}".into()],
            ..flags()
        };
        let cfg = resolve(Command::Invest, &f).unwrap();
        assert_eq!(cfg.hurst_values, vec![0.3]);
        assert_eq!(cfg.n_list, vec![5, 10]);
        assert_eq!(cfg.invest.mu, 0.2);
        assert!(cfg.invest.consumption.contains(3));
        let cfg = resolve(Command::NoiseCheck, &f).unwrap();
        assert_eq!(cfg.hurst, 0.3);
        assert_eq!(cfg.hurst_values, vec![0.75, 0.25]);
    }

    #[test]
    fn rejects_bad_config() {
        for set in ["nope=1", "invest.mew=1", "hurst=1.5", "invest.r=0.5", "n_list=[3,2]", "seed"] {
            let f = Flags {
                set: vec![set.into()],
                ..flags()
            };
            let err = resolve(Command::SmpCheck, &f).unwrap_err();
            assert!(err.is_config(), "{set}: {err}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(main_with_args(["fracctrl", "frobnicate"]), 2);
        assert_eq!(main_with_args(["fracctrl", "invest", "--set", "bogus=1"]), 2);
    }
}

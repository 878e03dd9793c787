//! Optimal investment with periodic consumption under fractional noise.
//!
//! Wealth follows `X_{n+1} = (1+r)(X_n − c X_n χ_n) + (μ−r) v_n + σ v_n ξ_n`
//! where `χ_n` marks consumption times, and the cost is
//! `f(n,x,y,z,v) = (λ/2) y − Q x χ_n + R |v|^β`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backward::{cauchy_diagnostic, solve_truncated, Backend, CauchyReport, Discount};
use crate::error::{Error, Result};
use crate::forward::{simulate_state, Control, InitialState, StateCoefficients, StatePath};
use crate::fracnoise::{HurstParam, InnovationSystem, NoiseEnsemble};
use crate::io::{fmt17, plot_script};
use crate::par;
use crate::smp::{brackets_along, Brackets, solve_adjoint_k, AdjointDriver, AdjointTriple, CostFunction};
use crate::spaces::WeightedNormParams;

/// Consumption calendar: every `every` steps (excluding 0), or an explicit list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Consumption {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<Vec<usize>>,
}

impl Consumption {
    pub fn every(period: usize) -> Self {
        Self {
            every: Some(period),
            at: None,
        }
    }

    pub fn at(times: Vec<usize>) -> Self {
        Self {
            every: None,
            at: Some(times),
        }
    }

    pub fn contains(&self, n: usize) -> bool {
        match (&self.every, &self.at) {
            (Some(p), _) => n > 0 && n.is_multiple_of(*p),
            (None, Some(at)) => at.contains(&n),
            (None, None) => false,
        }
    }

    fn validate(&self) -> Result<()> {
        match (&self.every, &self.at) {
            (Some(0), _) => Err(Error::Config("consumption.every must be positive".into())),
            (Some(_), Some(_)) => Err(Error::Config("consumption takes either `every` or `at`, not both".into())),
            (None, None) => Err(Error::Config("consumption needs `every` or `at`".into())),
            _ => Ok(()),
        }
    }
}

impl Default for Consumption {
    fn default() -> Self {
        Self::every(10)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvestConfig {
    pub mu: f64,
    pub r: f64,
    pub sigma: f64,
    pub lambda: f64,
    /// exponent of the control penalty
    pub beta_exp: f64,
    pub c: f64,
    pub q_weight: f64,
    pub r_weight: f64,
    pub consumption: Consumption,
    pub hurst: f64,
    pub x0: f64,
    pub horizon: usize,
    pub paths: usize,
    pub seed: u64,
    pub gamma_exp: f64,
    /// extra steps beyond the horizon used to truncate the adjoint equation
    pub adjoint_margin: usize,
}

impl Default for InvestConfig {
    fn default() -> Self {
        Self {
            mu: 0.15,
            r: 0.05,
            sigma: 0.2,
            lambda: 1.0,
            beta_exp: 2.0,
            c: 0.5,
            q_weight: 1.0,
            r_weight: 0.01,
            consumption: Consumption::default(),
            hurst: 0.75,
            x0: 1.0,
            horizon: 50,
            paths: 1000,
            seed: 42,
            gamma_exp: 1.1,
            adjoint_margin: 20,
        }
    }
}

impl InvestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let finite = [
            self.mu,
            self.r,
            self.sigma,
            self.lambda,
            self.beta_exp,
            self.c,
            self.q_weight,
            self.r_weight,
            self.x0,
            self.gamma_exp,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("invest parameters must be finite");
        }
        if self.r >= self.mu {
            return bad("need r < mu");
        }
        if self.sigma <= 0.0 {
            return bad("need sigma > 0");
        }
        if self.c <= 0.0 || self.c >= 1.0 {
            return bad("need c in (0, 1)");
        }
        if self.beta_exp <= 1.0 {
            return bad("need beta_exp > 1");
        }
        if self.q_weight <= 0.0 || self.r_weight <= 0.0 {
            return bad("need Q, R > 0");
        }
        if self.lambda <= 0.0 || self.gamma_exp <= 1.0 {
            return bad("need lambda > 0 and gamma_exp > 1");
        }
        if self.horizon == 0 || self.paths == 0 {
            return bad("horizon and paths must be positive");
        }
        HurstParam::new(self.hurst).map_err(|e| Error::Config(e.to_string()))?;
        self.consumption.validate()
    }

    pub fn discount(&self) -> Result<Discount> {
        Discount::new(self.lambda, self.gamma_exp)
    }

    /// Truncation used for `p`.
    pub fn truncation(&self) -> usize {
        self.horizon + self.adjoint_margin
    }
}

/// Which side of the admissible interval the control sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Clamp {
    Lower,
    Interior,
    Upper,
}

#[derive(Debug, Clone)]
pub struct InvestModel {
    cfg: InvestConfig,
}

impl InvestModel {
    pub fn new(cfg: InvestConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }

    pub fn config(&self) -> &InvestConfig {
        &self.cfg
    }

    pub fn chi(&self, n: usize) -> f64 {
        if self.cfg.consumption.contains(n) {
            1.0
        } else {
            0.0
        }
    }

    /// Upper end of the admissible control interval `[0, X(1 − cχ_n)]`,
    /// floored at zero.
    pub fn cap(&self, n: usize, x: f64) -> f64 {
        (x * (1.0 - self.cfg.c * self.chi(n))).max(0.0)
    }

    /// The closed-form pointwise minimizer of the necessary-condition
    /// bracket, with the clamp that was active.
    pub fn closed_form_detail(&self, n: usize, p: f64, k: f64, x: f64, pred: f64) -> Result<(f64, Clamp)> {
        let c = &self.cfg;
        let cap = self.cap(n, x);
        let a = (c.mu - c.r) * p + c.sigma * p * pred;
        if k == 0.0 {
            if n > 0 {
                return Err(Error::Contract(format!("k_{n} = 0, closed form undefined")));
            }
            // no running cost at n = 0: bang-bang on the sign of the bracket
            return Ok(if a < 0.0 && cap > 0.0 {
                (cap, Clamp::Upper)
            } else {
                (0.0, Clamp::Lower)
            });
        }
        let ratio = a / (c.beta_exp * k * c.r_weight);
        if ratio <= 0.0 {
            return Ok((0.0, Clamp::Lower));
        }
        let interior = ratio.powf(1.0 / (c.beta_exp - 1.0));
        if interior >= cap {
            Ok((cap, if cap == 0.0 { Clamp::Lower } else { Clamp::Upper }))
        } else {
            Ok((interior, Clamp::Interior))
        }
    }

    pub fn closed_form(&self, n: usize, p: f64, k: f64, x: f64, pred: f64) -> Result<f64> {
        self.closed_form_detail(n, p, k, x, pred).map(|r| r.0)
    }

    /// Telescoped cost of one path truncated at `horizon`:
    /// `Σ_{j=1}^{N} e^{−λj^γ} (1+λ/2)^{j−1} (−Q X_j χ_j + R |v_j|^β)`.
    pub fn pathwise_cost(&self, x: &[f64], v: &[f64], horizon: usize, discount: &Discount) -> f64 {
        let growth = 1.0 + 0.5 * self.cfg.lambda;
        (1..=horizon)
            .map(|j| {
                let running = -self.cfg.q_weight * x[j] * self.chi(j) + self.cfg.r_weight * v[j].abs().powf(self.cfg.beta_exp);
                (discount.ln_weight(j) + (j as f64 - 1.0) * growth.ln()).exp() * running
            })
            .sum()
    }
}

impl StateCoefficients for InvestModel {
    fn drift(&self, n: usize, x: f64, u: f64) -> f64 {
        let c = &self.cfg;
        (1.0 + c.r) * (x - c.c * x * self.chi(n)) - x + (c.mu - c.r) * u
    }

    fn diffusion(&self, _n: usize, _x: f64, u: f64) -> f64 {
        self.cfg.sigma * u
    }

    fn drift_x(&self, n: usize, _x: f64, _u: f64) -> f64 {
        (1.0 + self.cfg.r) * (1.0 - self.cfg.c * self.chi(n)) - 1.0
    }

    fn drift_u(&self, _n: usize, _x: f64, _u: f64) -> f64 {
        self.cfg.mu - self.cfg.r
    }

    fn diffusion_x(&self, _n: usize, _x: f64, _u: f64) -> f64 {
        0.0
    }

    fn diffusion_u(&self, _n: usize, _x: f64, _u: f64) -> f64 {
        self.cfg.sigma
    }

    fn lipschitz(&self) -> f64 {
        let c = &self.cfg;
        let bx = c.r.abs().max(((1.0 + c.r) * (1.0 - c.c) - 1.0).abs());
        bx.max(c.mu - c.r) + c.sigma
    }
}

impl CostFunction for InvestModel {
    fn f(&self, n: usize, x: f64, y: f64, _z: f64, u: f64) -> f64 {
        let c = &self.cfg;
        0.5 * c.lambda * y - c.q_weight * x * self.chi(n) + c.r_weight * u.abs().powf(c.beta_exp)
    }

    fn f_x(&self, n: usize, _x: f64, _y: f64, _z: f64, _u: f64) -> f64 {
        -self.cfg.q_weight * self.chi(n)
    }

    fn f_y(&self, _n: usize, _x: f64, _y: f64, _z: f64, _u: f64) -> f64 {
        0.5 * self.cfg.lambda
    }

    fn f_z(&self, _n: usize, _x: f64, _y: f64, _z: f64, _u: f64) -> f64 {
        0.0
    }

    fn f_u(&self, _n: usize, _x: f64, _y: f64, _z: f64, u: f64) -> f64 {
        let c = &self.cfg;
        c.beta_exp * c.r_weight * u.abs().powf(c.beta_exp - 1.0) * u.signum()
    }
}

/// The deterministic adjoint equations, solvable at any truncation up to the
/// one they were built for.
pub struct AdjointProblem {
    driver: AdjointDriver,
    k: Vec<Vec<f64>>,
    carrier: StatePath,
    probe: NoiseEnsemble,
    discount: Discount,
}

impl AdjointProblem {
    pub fn new(model: &InvestModel, sys: &InnovationSystem, max_truncation: usize) -> Result<Self> {
        let cfg = model.config();
        if sys.horizon() < max_truncation {
            return Err(Error::Contract(format!(
                "innovation horizon {} shorter than adjoint truncation {max_truncation}",
                sys.horizon()
            )));
        }
        // the adjoint driver never looks at the noise; a single path carries it
        let probe = NoiseEnsemble::sample(sys, cfg.seed, 1);
        let half = 0.5 * cfg.lambda;
        let k = solve_adjoint_k(|_, _| half, |_, _| 0.0, &probe, max_truncation)?;
        let carrier = StatePath::zeros(1, max_truncation);
        let driver = AdjointDriver::along(model, model, &carrier, None, &k, sys, max_truncation)?;
        Ok(Self {
            driver,
            k,
            carrier,
            probe,
            discount: cfg.discount()?,
        })
    }

    pub fn solve(&self, truncation: usize) -> Result<AdjointTriple> {
        let pq = solve_truncated(&self.driver, &self.carrier, &self.probe, &self.discount, truncation, &Backend::Exact)?;
        let k = self.k.iter().map(|row| row[..=truncation].to_vec()).collect();
        Ok(AdjointTriple { k, pq })
    }

    /// Distances between consecutive truncations of `p`.
    pub fn cauchy(&self, n_list: &[usize], norm: &WeightedNormParams) -> Result<CauchyReport> {
        cauchy_diagnostic(&self.driver, &self.carrier, &self.probe, &self.discount, n_list, &Backend::Exact, norm)
    }
}

/// `k` and the truncated `(p, q)`, all deterministic.
pub fn solve_adjoint(model: &InvestModel, sys: &InnovationSystem) -> Result<AdjointTriple> {
    let t = model.config().truncation();
    AdjointProblem::new(model, sys, t)?.solve(t)
}

/// Feedback rule `v*_n(X_n, ξ_0..ξ_{n−1})`.
pub struct ClosedFormPolicy<'a> {
    pub model: &'a InvestModel,
    pub adjoint: &'a AdjointTriple,
}

impl Control for ClosedFormPolicy<'_> {
    fn value(&self, path: usize, n: usize, x: f64, noise: &NoiseEnsemble) -> f64 {
        let (p, k) = (self.adjoint.p(0, n), self.adjoint.k(0, n));
        self.model
            .closed_form(n, p, k, x, noise.prediction(path, n))
            .unwrap_or(f64::NAN)
    }

    fn validate(&self, _paths: usize, horizon: usize) -> Result<()> {
        if self.adjoint.pq.truncation < horizon {
            return Err(Error::Contract("adjoint truncated before the horizon".into()));
        }
        match (1..=horizon).find(|&n| self.adjoint.k(0, n) == 0.0) {
            Some(n) => Err(Error::Contract(format!("k_{n} = 0"))),
            None => Ok(()),
        }
    }
}

/// Clamp counts at one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClampCounts {
    pub n: usize,
    pub lower: usize,
    pub interior: usize,
    pub upper: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifacts {
    pub wealth: PathBuf,
    pub adjoint: PathBuf,
    pub plot_script: PathBuf,
}

#[derive(Debug, Clone)]
pub struct InvestResult {
    pub model: InvestModel,
    pub sys: InnovationSystem,
    pub noise: NoiseEnsemble,
    /// `X*` with `v*` as its control
    pub state: StatePath,
    pub adjoint: AdjointTriple,
    pub clamp: Vec<ClampCounts>,
}

/// Build the noise, solve the adjoint, and simulate wealth under `v*`.
pub fn run_experiment(cfg: &InvestConfig) -> Result<InvestResult> {
    let model = InvestModel::new(cfg.clone())?;
    let hurst = HurstParam::new(cfg.hurst)?;
    let sys = InnovationSystem::build(hurst, cfg.truncation() + 1)?;
    let adjoint = solve_adjoint(&model, &sys)?;
    let noise = NoiseEnsemble::sample(&sys, cfg.seed, cfg.paths);
    let policy = ClosedFormPolicy {
        model: &model,
        adjoint: &adjoint,
    };
    let state = simulate_state(&model, &policy, &noise, &InitialState::Constant(cfg.x0), cfg.horizon)?;
    let clamp = clamp_activity(&model, &adjoint, &state, &noise)?;
    Ok(InvestResult {
        model,
        sys,
        noise,
        state,
        adjoint,
        clamp,
    })
}

fn clamp_activity(
    model: &InvestModel,
    adjoint: &AdjointTriple,
    state: &StatePath,
    noise: &NoiseEnsemble,
) -> Result<Vec<ClampCounts>> {
    let per_path = par::try_map_indexed(state.paths(), |path| {
        (0..=state.horizon)
            .map(|n| {
                model
                    .closed_form_detail(n, adjoint.p(0, n), adjoint.k(0, n), state.x[path][n], noise.prediction(path, n))
                    .map(|r| r.1)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut counts: Vec<ClampCounts> = (0..=state.horizon)
        .map(|n| ClampCounts {
            n,
            ..Default::default()
        })
        .collect();
    for row in &per_path {
        for (n, c) in row.iter().enumerate() {
            match c {
                Clamp::Lower => counts[n].lower += 1,
                Clamp::Interior => counts[n].interior += 1,
                Clamp::Upper => counts[n].upper += 1,
            }
        }
    }
    Ok(counts)
}

impl InvestResult {
    pub fn horizon(&self) -> usize {
        self.state.horizon
    }

    /// Necessary-condition brackets along `(X*, v*)`.
    pub fn brackets(&self) -> Result<Brackets> {
        brackets_along(&self.model, &self.model, &self.state, None, &self.adjoint, &self.sys, &self.noise)
    }

    /// Largest violation of `0 ≤ v*_n ≤ X*_n(1 − cχ_n)` (zero when admissible).
    pub fn admissibility_gap(&self) -> f64 {
        let h = self.horizon();
        par::map_indexed(self.state.paths(), |p| {
            (0..=h)
                .map(|n| {
                    let v = self.state.u[p][n];
                    let hi = self.model.cap(n, self.state.x[p][n]);
                    (-v).max(v - hi).max(0.0)
                })
                .fold(0.0, f64::max)
        })
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// One admissible trial control on `path`, uniform on `[0, cap(X*_n)]`,
    /// reproducible from `(seed, trial, path)`.
    pub fn random_admissible(&self, seed: u64, trial: usize, path: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((trial as u64) << 32) | path as u64);
        (0..=self.horizon())
            .map(|n| {
                let hi = self.model.cap(n, self.state.x[path][n]);
                if hi > 0.0 {
                    rng.random_range(0.0..=hi)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `wealth.csv` (path_id, n, X, v) and `adjoint.csv` (n, p, q, k) plus a
    /// plotting script, all under `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<Artifacts> {
        std::fs::create_dir_all(dir)?;
        let wealth = dir.join("wealth.csv");
        self.write_wealth_csv(BufWriter::new(File::create(&wealth)?))?;
        let adjoint = dir.join("adjoint.csv");
        self.write_adjoint_csv(BufWriter::new(File::create(&adjoint)?))?;
        let plot = dir.join("plot.py");
        let title = format!("H = {}", self.model.config().hurst);
        std::fs::write(&plot, plot_script(&title))?;
        Ok(Artifacts {
            wealth,
            adjoint,
            plot_script: plot,
        })
    }

    pub fn write_wealth_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "path_id,n,X,v")?;
        for p in 0..self.state.paths() {
            for n in 0..=self.horizon() {
                writeln!(out, "{p},{n},{},{}", fmt17(self.state.x[p][n]), fmt17(self.state.u[p][n]))?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_adjoint_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,p,q,k")?;
        for n in 0..=self.adjoint.pq.truncation {
            writeln!(
                out,
                "{n},{},{},{}",
                fmt17(self.adjoint.p(0, n)),
                fmt17(self.adjoint.q(0, n)),
                fmt17(self.adjoint.k(0, n))
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small() -> InvestConfig {
        InvestConfig {
            consumption: Consumption::at(vec![2]),
            horizon: 2,
            paths: 4,
            gamma_exp: 2.0,
            adjoint_margin: 0,
            ..Default::default()
        }
    }

    #[test]
    fn hand_adjoint() {
        let model = InvestModel::new(small()).unwrap();
        let sys = InnovationSystem::build(HurstParam::new(0.75).unwrap(), 3).unwrap();
        let adj = solve_adjoint(&model, &sys).unwrap();
        assert_eq!(adj.pq.truncation, 2);
        assert_eq!(adj.p(0, 2), 0.0);
        assert_abs_diff_eq!(adj.p(0, 1), -1.5 * (-3.0f64).exp(), epsilon = 1e-15);
        assert!(adj.pq.z[0].iter().all(|&q| q == 0.0));
    }

    #[test]
    fn k_closed_form() {
        let cfg = InvestConfig::default();
        let model = InvestModel::new(cfg.clone()).unwrap();
        let sys = InnovationSystem::build(HurstParam::new(0.75).unwrap(), cfg.truncation() + 1).unwrap();
        let adj = solve_adjoint(&model, &sys).unwrap();
        assert_eq!(adj.k(0, 0), 0.0);
        for n in 1..=cfg.truncation() {
            let want = -(1.5f64).powi(n as i32 - 1);
            assert!((adj.k(0, n) - want).abs() <= 1e-12 * want.abs());
        }
    }

    #[test]
    fn control_cases() {
        let model = InvestModel::new(InvestConfig::default()).unwrap();
        assert_eq!(model.closed_form(3, 0.0, -1.5, 10.0, 0.0).unwrap(), 0.0);
        let v = model.closed_form(3, -0.0747, -1.5, 10.0, 0.0).unwrap();
        assert_abs_diff_eq!(v, 0.249, epsilon = 1e-12);
        assert_eq!(model.closed_form(10, -0.0747, -1.5, 0.2, 0.0).unwrap(), 0.1);
        assert_eq!(model.closed_form_detail(3, 0.1, -1.5, 1.0, 0.0).unwrap().1, Clamp::Lower);
        assert!(model.closed_form(3, -0.1, 0.0, 1.0, 0.0).is_err());
        assert_eq!(model.closed_form(0, -0.1, 0.0, 2.0, 0.0).unwrap(), 2.0);
        assert_eq!(model.closed_form(0, 0.1, 0.0, 2.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn config_validation() {
        let bad = InvestConfig {
            r: 0.2,
            ..Default::default()
        };
        assert!(bad.validate().unwrap_err().is_config());
        let json = r#"{"mu":0.2,"consumption":{"at":[2,4]}}"#;
        let cfg: InvestConfig = serde_json::from_str(json).unwrap();
        assert!(cfg.consumption.contains(4) && !cfg.consumption.contains(3));
        assert!(serde_json::from_str::<InvestConfig>(r#"{"mew":0.2}"#).is_err());
        let both = InvestConfig {
            consumption: Consumption {
                every: Some(3),
                at: Some(vec![1]),
            },
            ..Default::default()
        };
        assert!(both.validate().is_err());
    }

    #[test]
    fn small_run_is_admissible() {
        let cfg = InvestConfig {
            horizon: 30,
            paths: 200,
            ..Default::default()
        };
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.admissibility_gap(), 0.0);
        let total: usize = res.clamp.iter().map(|c| c.lower + c.interior + c.upper).sum();
        assert_eq!(total, 200 * 31);
        let mut buf = Vec::new();
        res.write_adjoint_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,p,q,k\n0,"));
    }
}

//! Backward stochastic difference equations
//!
//! ```text
//! e^{−λn^γ}(Y_n + Z_n η_n) = e^{−λ(n+1)^γ}[Y_{n+1} + f(n+1, Y_{n+1}, Z_{n+1})
//!                           + g(n+1, Y_{n+1}, Z_{n+1}) E[ξ_{n+1} | F_{n+1}]]
//! ```
//!
//! solved on a finite horizon `N` with `Y_N = 0`. At each step the
//! right-hand side `T` is projected on step-`n` information:
//! `Y_n = E[T | F_n]`, `Z_n = E[η_n T | F_n]`. The last step uses the
//! driver's terminal simplification `f₁(N, y)`, `g₁(N, y)`.
//!
//! Everything is carried in undiscounted variables with the one-step factor
//! `e^{−λ((n+1)^γ − n^γ)}`; multiplying through by `e^{−λn^γ}` gives the
//! discounted pair, which underflows long before the undiscounted one does.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::StatePath;
use crate::fracnoise::NoiseEnsemble;
use crate::linalg;
use crate::par;
use crate::spaces::{weighted_norm, WeightedNormParams};

/// Where a driver is being evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub path: usize,
    pub step: usize,
    pub x: f64,
    pub u: f64,
}

/// Generator of a backward equation. `f` multiplies nothing; `g` multiplies
/// the one-step prediction `E[ξ_n | F_n]`.
pub trait Driver: Sync {
    fn f(&self, at: &Point, y: f64, z: f64) -> f64;

    fn g(&self, _at: &Point, _y: f64, _z: f64) -> f64 {
        0.0
    }

    /// `f₁(N, y)` used at the truncation step. Defaults to `f(N, y, 0)`.
    fn f_terminal(&self, at: &Point, y: f64) -> f64 {
        self.f(at, y, 0.0)
    }

    /// `g₁(N, y)`. Defaults to `g(N, y, 0)`.
    fn g_terminal(&self, at: &Point, y: f64) -> f64 {
        self.g(at, y, 0.0)
    }

    /// Whether `f_terminal`/`g_terminal` are genuine rather than the default.
    fn has_terminal_rule(&self) -> bool {
        false
    }
}

/// `e^{−λ n^γ}` discounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discount {
    pub lambda: f64,
    pub gamma_exp: f64,
}

impl Discount {
    pub fn new(lambda: f64, gamma_exp: f64) -> Result<Self> {
        if lambda.is_nan() || lambda <= 0.0 || gamma_exp.is_nan() || gamma_exp <= 1.0 {
            return Err(Error::Domain(format!(
                "need λ > 0 and discount exponent > 1, got λ={lambda}, γ={gamma_exp}"
            )));
        }
        Ok(Self { lambda, gamma_exp })
    }

    pub fn ln_weight(&self, n: usize) -> f64 {
        -self.lambda * (n as f64).powf(self.gamma_exp)
    }

    /// `e^{−λn^γ}`
    pub fn weight(&self, n: usize) -> f64 {
        self.ln_weight(n).exp()
    }

    /// `e^{−λ((n+1)^γ − n^γ)}`
    pub fn step_factor(&self, n: usize) -> f64 {
        let a = (n as f64).powf(self.gamma_exp);
        let b = ((n + 1) as f64).powf(self.gamma_exp);
        (-self.lambda * (b - a)).exp()
    }
}

/// Polynomial basis in the last `window` increments (and optionally `X_n`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegressionBasis {
    pub degree: usize,
    pub window: usize,
    pub include_state: bool,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        Self {
            degree: 2,
            window: 3,
            include_state: false,
        }
    }
}

impl RegressionBasis {
    /// Exponent tuples of total degree `≤ degree` in `vars` variables,
    /// constant first.
    fn exponents(&self, vars: usize) -> Vec<Vec<usize>> {
        fn rec(vars: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == vars {
                out.push(cur.clone());
                return;
            }
            for e in 0..=left {
                cur.push(e);
                rec(vars, left - e, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(vars, self.degree, &mut Vec::new(), &mut out);
        out.sort_by_key(|e| (e.iter().sum::<usize>(), std::cmp::Reverse(e.clone())));
        out
    }

    /// Feature matrix at step `n`: functions of `ξ_{n−w}..ξ_{n−1}` (and `X_n`).
    pub fn design(&self, n: usize, noise: &NoiseEnsemble, state: Option<&StatePath>) -> Design {
        let lags = self.window.min(n);
        let use_state = self.include_state && state.is_some();
        let vars = lags + usize::from(use_state);
        let exps = self.exponents(vars);
        let names: Vec<String> = (1..=lags)
            .map(|l| format!("xi[n-{l}]"))
            .chain(use_state.then(|| "x[n]".to_string()))
            .collect();
        let labels = exps
            .iter()
            .map(|e| {
                let parts: Vec<String> = e
                    .iter()
                    .zip(&names)
                    .filter(|(&k, _)| k > 0)
                    .map(|(&k, name)| if k == 1 { name.clone() } else { format!("{name}^{k}") })
                    .collect();
                if parts.is_empty() { "1".to_string() } else { parts.join("*") }
            })
            .collect();
        let dim = exps.len();
        let rows = par::map_indexed(noise.len(), |p| {
            let vals: Vec<f64> = (1..=lags)
                .map(|l| noise.xi(p, n - l))
                .chain(use_state.then(|| state.map_or(0.0, |s| s.x[p][n])))
                .collect();
            exps.iter()
                .map(|e| e.iter().zip(&vals).map(|(&k, &v)| v.powi(k as i32)).product())
                .collect::<Vec<f64>>()
        });
        Design {
            dim,
            rows: rows.concat(),
            labels,
        }
    }
}

/// Row-major feature matrix, one row per path.
#[derive(Debug, Clone)]
pub struct Design {
    pub dim: usize,
    pub rows: Vec<f64>,
    pub labels: Vec<String>,
}

impl Design {
    pub fn paths(&self) -> usize {
        self.rows.len() / self.dim.max(1)
    }

    #[inline]
    pub fn row(&self, p: usize) -> &[f64] {
        &self.rows[p * self.dim..(p + 1) * self.dim]
    }
}

/// How `E[· | F_n]` is realized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Targets must not vary across paths; the expectation is the value itself.
    Exact,
    /// Least-squares projection on a polynomial basis.
    Regression(RegressionBasis),
}

impl Backend {
    pub fn tag(&self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Regression(_) => "regression",
        }
    }
}

/// Least-squares fit of each target column on the design. Returns fitted
/// values per column.
pub fn project(design: &Design, targets: &[&[f64]], step: usize) -> Result<Vec<Vec<f64>>> {
    let m = design.paths();
    let d = design.dim;
    if m < d {
        return Err(Error::Contract(format!(
            "{m} paths cannot support a basis of dimension {d}"
        )));
    }
    let k = targets.len();
    let width = d * d + k * d;
    let sums = par::sum_vec(m, width, |p, acc| {
        let row = design.row(p);
        for i in 0..d {
            for j in 0..=i {
                acc[i * d + j] += row[i] * row[j];
            }
        }
        for (c, t) in targets.iter().enumerate() {
            let base = d * d + c * d;
            for i in 0..d {
                acc[base + i] += row[i] * t[p];
            }
        }
    });
    let mut gram = sums[..d * d].to_vec();
    for i in 0..d {
        for j in 0..i {
            gram[j * d + i] = gram[i * d + j];
        }
    }
    // Jacobi scaling so the pivot floor is relative to unit-scaled columns
    let scale: Vec<f64> = (0..d).map(|i| gram[i * d + i].sqrt()).collect();
    if let Some(i) = scale.iter().position(|&s| s == 0.0 || !s.is_finite()) {
        return Err(Error::RankDeficient {
            step,
            basis: format!("column {} ({}) vanishes", i, design.labels[i]),
        });
    }
    for i in 0..d {
        for j in 0..d {
            gram[i * d + j] /= scale[i] * scale[j];
        }
    }
    let mut fitted = Vec::with_capacity(k);
    for c in 0..k {
        let rhs: Vec<f64> = (0..d).map(|i| sums[d * d + c * d + i] / scale[i]).collect();
        let coef = linalg::solve_spd(&gram, &rhs).map_err(|_| Error::RankDeficient {
            step,
            basis: design.labels.join(", "),
        })?;
        let coef: Vec<f64> = coef.iter().zip(&scale).map(|(c, s)| c / s).collect();
        fitted.push(par::map_indexed(m, |p| linalg::dot(design.row(p), &coef)));
    }
    Ok(fitted)
}

/// `E[target | F_n]` per path. With [`Backend::Exact`] the targets must be
/// identical across paths.
pub fn conditional_expectation(
    targets: &[f64],
    n: usize,
    noise: &NoiseEnsemble,
    state: Option<&StatePath>,
    backend: &Backend,
) -> Result<Vec<f64>> {
    match backend {
        Backend::Exact => {
            let c = constant_value(targets, n)?;
            Ok(vec![c; targets.len()])
        }
        Backend::Regression(basis) => {
            let design = basis.design(n, noise, state);
            Ok(project(&design, &[targets], n)?.remove(0))
        }
    }
}

fn constant_value(targets: &[f64], step: usize) -> Result<f64> {
    let first = *targets
        .first()
        .ok_or_else(|| Error::Contract("no paths to take an expectation over".into()))?;
    let tol = 1e-12 * first.abs().max(1.0);
    if let Some(p) = targets.iter().position(|t| (t - first).abs() > tol) {
        return Err(Error::Contract(format!(
            "exact backend needs deterministic targets, but step {step} differs on path {p} \
             ({} vs {first})",
            targets[p]
        )));
    }
    Ok(first)
}

/// Per-step bookkeeping.
#[derive(Debug, Clone, Serialize)]
pub struct StepDiagnostic {
    pub step: usize,
    /// RMS of `T − E[T | F_n]` over paths.
    pub residual_rms: f64,
    pub basis_dim: usize,
}

/// `y[path][n]` for `n = 0..=N` and `z[path][n]` likewise (with `Z_N = 0`).
#[derive(Debug, Clone, Serialize)]
pub struct BsdeSolution {
    pub truncation: usize,
    pub backend: String,
    pub y: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub diagnostics: Vec<StepDiagnostic>,
    /// Set when the driver did not supply its own terminal simplification.
    pub default_terminal_rule: bool,
}

impl BsdeSolution {
    pub fn paths(&self) -> usize {
        self.y.len()
    }

    /// Mean of `Y_n` over paths.
    pub fn mean_y(&self, n: usize) -> f64 {
        par::mean(self.paths(), |p| self.y[p][n])
    }

    /// `e^{−λn^γ} Y_n` on one path.
    pub fn discounted_y(&self, path: usize, n: usize, discount: &Discount) -> f64 {
        discount.weight(n) * self.y[path][n]
    }
}

/// Solve the backward equation with `Y_N = 0` by backward projection.
pub fn solve_truncated<D>(
    driver: &D,
    state: &StatePath,
    noise: &NoiseEnsemble,
    discount: &Discount,
    truncation: usize,
    backend: &Backend,
) -> Result<BsdeSolution>
where
    D: Driver + ?Sized,
{
    let big_n = truncation;
    if big_n == 0 {
        return Err(Error::Domain("truncation must be at least 1".into()));
    }
    let m = noise.len();
    if m == 0 || state.paths() != m {
        return Err(Error::Contract(format!(
            "state has {} paths, noise has {m}",
            state.paths()
        )));
    }
    if state.horizon < big_n {
        return Err(Error::Contract(format!(
            "state horizon {} shorter than truncation {big_n}",
            state.horizon
        )));
    }
    if noise.horizon() < big_n {
        return Err(Error::Contract(format!(
            "noise horizon {} shorter than truncation {big_n}",
            noise.horizon()
        )));
    }
    let predictable = noise.horizon();

    // time-major while sweeping
    let mut ys = vec![vec![0.0; m]; big_n + 1];
    let mut zs = vec![vec![0.0; m]; big_n + 1];
    let mut diagnostics = Vec::with_capacity(big_n);

    for n in (0..big_n).rev() {
        let j = n + 1;
        let factor = discount.step_factor(n);
        let (y_next, z_next) = (&ys[j], &zs[j]);
        let targets = par::try_map_indexed(m, |p| {
            let at = Point {
                path: p,
                step: j,
                x: state.x[p][j],
                u: state.u[p][j],
            };
            let (fv, gv) = if j == big_n {
                (driver.f_terminal(&at, y_next[p]), driver.g_terminal(&at, y_next[p]))
            } else {
                (driver.f(&at, y_next[p], z_next[p]), driver.g(&at, y_next[p], z_next[p]))
            };
            let noise_term = if gv != 0.0 {
                if j >= predictable {
                    return Err(Error::Contract(format!(
                        "prediction of ξ_{j} needs a noise horizon beyond {predictable}"
                    )));
                }
                gv * noise.prediction(p, j)
            } else {
                0.0
            };
            Ok(factor * (y_next[p] + fv + noise_term))
        })?;

        let (y_n, z_n, dim) = match backend {
            Backend::Exact => {
                let c = constant_value(&targets, n)?;
                (vec![c; m], vec![0.0; m], 1)
            }
            Backend::Regression(basis) => {
                let design = basis.design(n, noise, Some(state));
                let weighted: Vec<f64> = (0..m).map(|p| noise.eta(p, n) * targets[p]).collect();
                let mut fits = project(&design, &[&targets, &weighted], n)?;
                let z = fits.pop().unwrap_or_default();
                let y = fits.pop().unwrap_or_default();
                (y, z, design.dim)
            }
        };
        let rss = par::sum(m, |p| (targets[p] - y_n[p]).powi(2));
        diagnostics.push(StepDiagnostic {
            step: n,
            residual_rms: (rss / m as f64).sqrt(),
            basis_dim: dim,
        });
        ys[n] = y_n;
        zs[n] = z_n;
    }
    diagnostics.reverse();

    Ok(BsdeSolution {
        truncation: big_n,
        backend: backend.tag().to_string(),
        y: transpose(&ys, m),
        z: transpose(&zs, m),
        diagnostics,
        default_terminal_rule: !driver.has_terminal_rule(),
    })
}

fn transpose(time_major: &[Vec<f64>], paths: usize) -> Vec<Vec<f64>> {
    (0..paths)
        .map(|p| time_major.iter().map(|row| row[p]).collect())
        .collect()
}

/// One consecutive pair of truncations.
#[derive(Debug, Clone, Serialize)]
pub struct CauchyPair {
    pub m: usize,
    pub n: usize,
    pub y_norm: f64,
    pub z_norm: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TailTerm {
    pub n: usize,
    /// `e^{−λ(N−1)^γ} mean|Y^N_{N−1}|^{p(N−1)}`: the last non-trivial term.
    pub tail: f64,
}

/// Backward weighted-norm distances between truncated solutions.
#[derive(Debug, Clone, Serialize)]
pub struct CauchyReport {
    pub norm: WeightedNormParams,
    pub backend: String,
    pub pairs: Vec<CauchyPair>,
    pub tails: Vec<TailTerm>,
    pub strictly_decreasing: bool,
    pub default_terminal_rule: bool,
}

/// `Y^{M,N}` padded to `N+1` entries: `Y^N − Y^M` below `M`, `Y^N` on `[M, N)`.
fn truncation_gap(long: &[Vec<f64>], short: &[Vec<f64>], m: usize) -> Vec<Vec<f64>> {
    long.iter()
        .zip(short)
        .map(|(a, b)| {
            a.iter()
                .enumerate()
                .map(|(n, &v)| if n < m { v - b[n] } else { v })
                .collect()
        })
        .collect()
}

/// Solve at each truncation in `n_list` and report distances between
/// consecutive solutions.
pub fn cauchy_diagnostic<D>(
    driver: &D,
    state: &StatePath,
    noise: &NoiseEnsemble,
    discount: &Discount,
    n_list: &[usize],
    backend: &Backend,
    norm: &WeightedNormParams,
) -> Result<CauchyReport>
where
    D: Driver + ?Sized,
{
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("truncation list must be non-empty and strictly ascending".into()));
    }
    let solutions = n_list
        .iter()
        .map(|&n| solve_truncated(driver, state, noise, discount, n, backend))
        .collect::<Result<Vec<_>>>()?;
    let mut pairs = Vec::new();
    for (a, b) in solutions.iter().zip(solutions.iter().skip(1)) {
        let (m, n) = (a.truncation, b.truncation);
        let dy = truncation_gap(&b.y, &a.y, m);
        let dz = truncation_gap(&b.z, &a.z, m);
        let y_norm = weighted_norm(&dy, norm, n)?.value;
        let z_norm = weighted_norm(&dz, norm, n)?.value;
        pairs.push(CauchyPair {
            m,
            n,
            y_norm,
            z_norm,
            total: y_norm + z_norm,
        });
    }
    let tails = solutions
        .iter()
        .map(|s| {
            let n = s.truncation;
            let r = weighted_norm(&s.y, norm, n - 1)?;
            Ok(TailTerm { n, tail: r.last_term })
        })
        .collect::<Result<Vec<_>>>()?;
    let strictly_decreasing = pairs.windows(2).all(|w| w[1].total < w[0].total);
    Ok(CauchyReport {
        norm: *norm,
        backend: backend.tag().to_string(),
        pairs,
        tails,
        strictly_decreasing,
        default_terminal_rule: solutions.iter().any(|s| s.default_terminal_rule),
    })
}

/// `path_id,n,Y,Z`
pub fn write_solution_csv<W: Write>(sol: &BsdeSolution, mut out: W) -> Result<()> {
    use crate::io::fmt17;
    writeln!(out, "path_id,n,Y,Z")?;
    for (p, (y, z)) in sol.y.iter().zip(&sol.z).enumerate() {
        for n in 0..=sol.truncation {
            writeln!(out, "{p},{n},{},{}", fmt17(y[n]), fmt17(z[n]))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracnoise::{HurstParam, InnovationSystem};
    use approx::assert_abs_diff_eq;

    struct Constant(f64);
    impl Driver for Constant {
        fn f(&self, _: &Point, _: f64, _: f64) -> f64 {
            self.0
        }
    }

    /// `f = x`: depends on the (random) state.
    struct StateDriven;
    impl Driver for StateDriven {
        fn f(&self, at: &Point, _: f64, _: f64) -> f64 {
            at.x
        }
    }

    fn noise(h: f64, n: usize, m: usize, seed: u64) -> NoiseEnsemble {
        let sys = InnovationSystem::build(HurstParam::new(h).unwrap(), n).unwrap();
        NoiseEnsemble::sample(&sys, seed, m)
    }

    #[test]
    fn zero_driver_gives_zero() {
        let nz = noise(0.7, 6, 8, 1);
        let st = StatePath::zeros(8, 6);
        let d = Discount::new(1.0, 2.0).unwrap();
        let sol = solve_truncated(&Constant(0.0), &st, &nz, &d, 6, &Backend::Exact).unwrap();
        assert!(sol.y.iter().flatten().all(|&v| v == 0.0));
        assert!(sol.z.iter().flatten().all(|&v| v == 0.0));
        assert!(sol.default_terminal_rule);
    }

    #[test]
    fn constant_driver_hand_recursion() {
        let nz = noise(0.7, 3, 4, 1);
        let st = StatePath::zeros(4, 3);
        let d = Discount::new(1.0, 2.0).unwrap();
        let c = 2.0;
        let sol = solve_truncated(&Constant(c), &st, &nz, &d, 3, &Backend::Exact).unwrap();
        assert_eq!(sol.y[0][3], 0.0);
        assert_abs_diff_eq!(sol.y[0][2], c * (-5.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(sol.y[0][1], c * ((-3.0f64).exp() + (-8.0f64).exp()), epsilon = 1e-15);
        assert!(sol.z.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_backend_rejects_random_targets() {
        let nz = noise(0.7, 5, 6, 2);
        let st = crate::forward::simulate_state(
            &UnitNoise,
            &crate::forward::ControlProcess::Constant(0.0),
            &nz,
            &crate::forward::InitialState::Constant(0.0),
            5,
        )
        .unwrap();
        let d = Discount::new(1.0, 1.5).unwrap();
        let r = solve_truncated(&StateDriven, &st, &nz, &d, 5, &Backend::Exact);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    struct UnitNoise;
    impl crate::forward::StateCoefficients for UnitNoise {
        fn drift(&self, _: usize, _: f64, _: f64) -> f64 {
            0.0
        }
        fn diffusion(&self, _: usize, _: f64, _: f64) -> f64 {
            1.0
        }
        fn drift_x(&self, _: usize, _: f64, _: f64) -> f64 {
            0.0
        }
        fn drift_u(&self, _: usize, _: f64, _: f64) -> f64 {
            0.0
        }
        fn diffusion_x(&self, _: usize, _: f64, _: f64) -> f64 {
            0.0
        }
        fn diffusion_u(&self, _: usize, _: f64, _: f64) -> f64 {
            0.0
        }
        fn lipschitz(&self) -> f64 {
            0.0
        }
    }

    #[test]
    fn regression_reproduces_linear_conditional_mean() {
        // f = x with X = partial sums of ξ: Y_n = Σ_j D·(X_j + …) is affine in
        // ξ_0..ξ_{n−1} plus predictions, so a full-window degree-1 basis is exact
        // up to Monte Carlo error in the coefficients.
        let horizon = 4;
        let m = 20_000;
        let nz = noise(0.75, horizon + 1, m, 5);
        let st = crate::forward::simulate_state(
            &UnitNoise,
            &crate::forward::ControlProcess::Constant(0.0),
            &nz,
            &crate::forward::InitialState::Constant(0.0),
            horizon,
        )
        .unwrap();
        let d = Discount::new(0.5, 1.2).unwrap();
        let basis = RegressionBasis {
            degree: 1,
            window: horizon,
            include_state: false,
        };
        let sol = solve_truncated(&StateDriven, &st, &nz, &d, horizon, &Backend::Regression(basis)).unwrap();
        // Y_{N−1} = D_{N−1}·X_N = D_{N−1}(X_{N−1} + E[ξ_{N−1}|F_{N−1}])
        let n = horizon - 1;
        let f = d.step_factor(n);
        let err = (0..m)
            .map(|p| {
                let exact = f * (st.x[p][n] + nz.prediction(p, n));
                (sol.y[p][n] - exact).powi(2)
            })
            .sum::<f64>()
            / m as f64;
        assert!(err.sqrt() < 1e-2, "rms {}", err.sqrt());
    }

    #[test]
    fn fitted_values_are_functions_of_the_window() {
        let m = 2_000;
        let mut nz = noise(0.6, 6, m, 9);
        // make path 1 share ξ_0..ξ_2 with path 0 but differ afterwards
        let head: Vec<f64> = nz.paths[0].xi[..3].to_vec();
        nz.paths[1].xi[..3].copy_from_slice(&head);
        let st = StatePath::zeros(m, 6);
        let targets: Vec<f64> = (0..m).map(|p| nz.xi(p, 3) + nz.xi(p, 4).powi(2)).collect();
        let fit = conditional_expectation(&targets, 3, &nz, Some(&st), &Backend::Regression(RegressionBasis::default()))
            .unwrap();
        assert_eq!(fit[0], fit[1]);
    }

    #[test]
    fn regression_contract_and_rank_errors() {
        let nz = noise(0.6, 4, 5, 1);
        let targets = vec![1.0; 5];
        let basis = Backend::Regression(RegressionBasis { degree: 2, window: 3, include_state: false });
        assert!(matches!(
            conditional_expectation(&targets, 3, &nz, None, &basis),
            Err(Error::Contract(_))
        ));
        // duplicated paths make the quadratic basis singular
        let mut nz = noise(0.6, 4, 30, 1);
        for p in 1..30 {
            let first = nz.paths[p % 3].clone();
            nz.paths[p] = first;
        }
        let targets = vec![1.0; 30];
        assert!(matches!(
            conditional_expectation(&targets, 3, &nz, None, &basis),
            Err(Error::RankDeficient { step: 3, .. })
        ));
    }

    #[test]
    fn constant_targets_project_to_themselves() {
        let nz = noise(0.8, 5, 500, 4);
        let t = vec![3.25; 500];
        for backend in [Backend::Exact, Backend::Regression(RegressionBasis::default())] {
            let fit = conditional_expectation(&t, 4, &nz, None, &backend).unwrap();
            assert!(fit.iter().all(|v| (v - 3.25).abs() < 1e-10));
        }
    }

    #[test]
    fn basis_enumeration() {
        let b = RegressionBasis::default();
        assert_eq!(b.exponents(3).len(), 10);
        assert_eq!(b.exponents(0), vec![Vec::<usize>::new()]);
        let nz = noise(0.6, 6, 3, 1);
        let d = b.design(1, &nz, None);
        assert_eq!(d.labels, vec!["1", "xi[n-1]", "xi[n-1]^2"]);
    }

    #[test]
    fn cauchy_on_zero_and_constant_drivers() {
        let nz = noise(0.7, 40, 2, 1);
        let st = StatePath::zeros(2, 40);
        let d = Discount::new(1.0, 2.0).unwrap();
        let norm = WeightedNormParams::new(1.0, 2.0, 2.0, crate::spaces::Direction::Backward, 2.0).unwrap();
        let zero = cauchy_diagnostic(&Constant(0.0), &st, &nz, &d, &[5, 10, 20], &Backend::Exact, &norm).unwrap();
        assert!(zero.pairs.iter().all(|p| p.total == 0.0));
        let c = cauchy_diagnostic(&Constant(1.0), &st, &nz, &d, &[2, 3, 4], &Backend::Exact, &norm).unwrap();
        assert!(c.strictly_decreasing);
        assert!(c.pairs[1].total < c.pairs[0].total * 1e-2);
        assert!(cauchy_diagnostic(&Constant(1.0), &st, &nz, &d, &[4, 3], &Backend::Exact, &norm).is_err());
    }

    #[test]
    fn solution_csv_layout() {
        let nz = noise(0.7, 2, 1, 1);
        let st = StatePath::zeros(1, 2);
        let d = Discount::new(1.0, 2.0).unwrap();
        let sol = solve_truncated(&Constant(1.0), &st, &nz, &d, 2, &Backend::Exact).unwrap();
        let mut buf = Vec::new();
        write_solution_csv(&sol, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("path_id,n,Y,Z\n0,0,"));
        assert_eq!(text.lines().count(), 4);
    }
}

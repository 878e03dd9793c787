//! Stochastic maximum principle machinery: the forward multiplier `k`, the
//! adjoint backward pair `(p, q)`, the Hamiltonian, a pointwise checker for
//! the first-order necessary condition, the duality bookkeeping between that
//! condition and the variational cost, and a midpoint-convexity harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backward::{solve_truncated, Backend, BsdeSolution, Discount, Driver, Point};
use crate::error::{Error, Result};
use crate::forward::{simulate_variation, StateCoefficients, StatePath};
use crate::fracnoise::{InnovationSystem, NoiseEnsemble};
use crate::par;

/// Running cost `f(n, x, y, z, u)` of the recursive cost equation, with partials.
pub trait CostFunction: Sync {
    fn f(&self, n: usize, x: f64, y: f64, z: f64, u: f64) -> f64;
    fn f_x(&self, n: usize, x: f64, y: f64, z: f64, u: f64) -> f64;
    fn f_y(&self, n: usize, x: f64, y: f64, z: f64, u: f64) -> f64;
    fn f_z(&self, n: usize, x: f64, y: f64, z: f64, u: f64) -> f64;
    fn f_u(&self, n: usize, x: f64, y: f64, z: f64, u: f64) -> f64;
}

/// Cost equation `Y_n + Z_n η_n = D_n (Y_{n+1} + f(n+1, X, Y, Z, u))` as a
/// backward driver. `J(u) = Y_0`.
pub struct CostDriver<'a, C: ?Sized>(pub &'a C);

impl<C: CostFunction + ?Sized> Driver for CostDriver<'_, C> {
    fn f(&self, at: &Point, y: f64, z: f64) -> f64 {
        self.0.f(at.step, at.x, y, z, at.u)
    }
}

/// Evaluate `h(n, X*, Y*, Z*, u*)` on every `(path, n)`; `Y*`, `Z*` default
/// to zero when the cost solution is not supplied.
fn along<F>(state: &StatePath, cost_sol: Option<&BsdeSolution>, h: F) -> Vec<Vec<f64>>
where
    F: Fn(usize, f64, f64, f64, f64) -> f64 + Sync + Send,
{
    par::map_indexed(state.paths(), |p| {
        (0..=state.horizon)
            .map(|n| {
                let (y, z) = cost_sol
                    .filter(|s| n <= s.truncation)
                    .map_or((0.0, 0.0), |s| (s.y[p][n], s.z[p][n]));
                h(n, state.x[p][n], y, z, state.u[p][n])
            })
            .collect()
    })
}

/// `k_0 = 0`, `k_1 = −1`, `k_{n+1} = k_n + f_y(n) k_n + f_z(n) k_n η_n` for
/// `n ≥ 1`. Partials are given per `(path, n)`; returns `k[path][n]` for
/// `n = 0..=horizon`.
pub fn solve_adjoint_k<FY, FZ>(f_y: FY, f_z: FZ, noise: &NoiseEnsemble, horizon: usize) -> Result<Vec<Vec<f64>>>
where
    FY: Fn(usize, usize) -> f64 + Sync + Send,
    FZ: Fn(usize, usize) -> f64 + Sync + Send,
{
    if horizon == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    if noise.horizon() + 1 < horizon {
        return Err(Error::Contract(format!(
            "k up to {horizon} needs innovations up to {}",
            horizon - 1
        )));
    }
    Ok(par::map_indexed(noise.len(), |p| {
        let mut k = Vec::with_capacity(horizon + 1);
        k.push(0.0);
        k.push(-1.0);
        for n in 1..horizon {
            let kn = k[n];
            let fz = f_z(p, n);
            let shock = if fz == 0.0 { 0.0 } else { fz * kn * noise.eta(p, n) };
            k.push(kn + f_y(p, n) * kn + shock);
        }
        k
    }))
}

/// The three adjoint processes on shared paths.
#[derive(Debug, Clone, Serialize)]
pub struct AdjointTriple {
    /// `k[path][n]`
    pub k: Vec<Vec<f64>>,
    /// `(p, q)` as `(y, z)` of a backward solution.
    pub pq: BsdeSolution,
}

impl AdjointTriple {
    pub fn p(&self, path: usize, n: usize) -> f64 {
        self.pq.y[path.min(self.pq.paths() - 1)][n]
    }

    pub fn q(&self, path: usize, n: usize) -> f64 {
        self.pq.z[path.min(self.pq.paths() - 1)][n]
    }

    pub fn k(&self, path: usize, n: usize) -> f64 {
        self.k[path.min(self.k.len() - 1)][n]
    }
}

/// Driver of the adjoint equation
/// `p_n + q_n η_n = D_n (p + b_x p + β(n,n) σ_x q − f_x k + σ_x p E[ξ|F])`
/// evaluated at step `n+1`, with partials frozen along `(X*, u*)`.
pub struct AdjointDriver {
    b_x: Vec<Vec<f64>>,
    s_x: Vec<Vec<f64>>,
    f_x: Vec<Vec<f64>>,
    k: Vec<Vec<f64>>,
    beta_diag: Vec<f64>,
}

impl AdjointDriver {
    /// Freeze the partials on every `(path, n)` up to `truncation`.
    pub fn along<C, F>(
        coeffs: &C,
        cost: &F,
        optimal: &StatePath,
        cost_sol: Option<&BsdeSolution>,
        k: &[Vec<f64>],
        sys: &InnovationSystem,
        truncation: usize,
    ) -> Result<Self>
    where
        C: StateCoefficients + ?Sized,
        F: CostFunction + ?Sized,
    {
        if k.is_empty() || k.iter().any(|row| row.len() <= truncation) {
            return Err(Error::Contract(format!("k must cover n = 0..={truncation}")));
        }
        if k.len() != 1 && k.len() != optimal.paths() {
            return Err(Error::Contract("k must be shared or given per path".into()));
        }
        let b_x = along(optimal, None, |n, x, _, _, u| coeffs.drift_x(n, x, u));
        let s_x = along(optimal, None, |n, x, _, _, u| coeffs.diffusion_x(n, x, u));
        let f_x = along(optimal, cost_sol, |n, x, y, z, u| cost.f_x(n, x, y, z, u));
        let needs_beta = s_x.iter().flatten().any(|&v| v != 0.0);
        if needs_beta && sys.horizon() <= truncation {
            return Err(Error::Contract(format!(
                "β(n,n) needed up to {truncation} but the innovation horizon is {}",
                sys.horizon()
            )));
        }
        let beta_diag = (0..sys.horizon().min(truncation + 1)).map(|n| sys.beta(n, n)).collect();
        Ok(Self {
            b_x,
            s_x,
            f_x,
            k: k.to_vec(),
            beta_diag,
        })
    }
}

impl Driver for AdjointDriver {
    fn f(&self, at: &Point, y: f64, z: f64) -> f64 {
        let (p, n) = (at.path, at.step);
        let sx = self.s_x[p][n];
        let vol = if sx == 0.0 { 0.0 } else { self.beta_diag[n] * sx * z };
        self.b_x[p][n] * y + vol - self.f_x[p][n] * self.k[p.min(self.k.len() - 1)][n]
    }

    fn g(&self, at: &Point, y: f64, _z: f64) -> f64 {
        self.s_x[at.path][at.step] * y
    }
}

/// Solve for `(p, q)` along `(X*, u*)` with truncation `truncation`.
#[allow(clippy::too_many_arguments)]
pub fn solve_adjoint_pq<C, F>(
    coeffs: &C,
    cost: &F,
    optimal: &StatePath,
    cost_sol: Option<&BsdeSolution>,
    k: &[Vec<f64>],
    sys: &InnovationSystem,
    noise: &NoiseEnsemble,
    discount: &Discount,
    truncation: usize,
    backend: &Backend,
) -> Result<BsdeSolution>
where
    C: StateCoefficients + ?Sized,
    F: CostFunction + ?Sized,
{
    let driver = AdjointDriver::along(coeffs, cost, optimal, cost_sol, k, sys, truncation)?;
    solve_truncated(&driver, optimal, noise, discount, truncation, backend)
}

/// Arguments of the Hamiltonian at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianArgs {
    pub n: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub u: f64,
    pub p: f64,
    pub q: f64,
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HamiltonianEval {
    pub value: f64,
    pub h_x: f64,
    pub h_u: f64,
}

/// `H = b p + σ p E[ξ_n|F_n] + β(n,n) σ q + f k` and its `x`, `u` partials.
/// The prediction comes from `prefix = ξ_0..ξ_{n−1}`.
pub fn hamiltonian<C, F>(
    coeffs: &C,
    cost: &F,
    sys: &InnovationSystem,
    a: &HamiltonianArgs,
    prefix: &[f64],
) -> Result<HamiltonianEval>
where
    C: StateCoefficients + ?Sized,
    F: CostFunction + ?Sized,
{
    if prefix.len() != a.n {
        return Err(Error::Contract(format!(
            "prefix length {} does not match step {}",
            prefix.len(),
            a.n
        )));
    }
    let pred = sys.predict_next(prefix)?;
    Ok(hamiltonian_with_prediction(coeffs, cost, sys.beta(a.n, a.n), pred, a))
}

/// [`hamiltonian`] with the prediction and `β(n,n)` already in hand.
pub fn hamiltonian_with_prediction<C, F>(
    coeffs: &C,
    cost: &F,
    beta_nn: f64,
    pred: f64,
    a: &HamiltonianArgs,
) -> HamiltonianEval
where
    C: StateCoefficients + ?Sized,
    F: CostFunction + ?Sized,
{
    let HamiltonianArgs { n, x, y, z, u, p, q, k } = *a;
    let vol_weight = p * pred + beta_nn * q;
    HamiltonianEval {
        value: coeffs.drift(n, x, u) * p + coeffs.diffusion(n, x, u) * vol_weight + cost.f(n, x, y, z, u) * k,
        h_x: coeffs.drift_x(n, x, u) * p + coeffs.diffusion_x(n, x, u) * vol_weight + cost.f_x(n, x, y, z, u) * k,
        h_u: coeffs.drift_u(n, x, u) * p + coeffs.diffusion_u(n, x, u) * vol_weight + cost.f_u(n, x, y, z, u) * k,
    }
}

/// The necessary-condition bracket
/// `b_u p + σ_u p Σγ(n,k)ξ_k + β(n,n) σ_u q − f_u k`.
pub fn bracket<C, F>(coeffs: &C, cost: &F, beta_nn: f64, pred: f64, a: &HamiltonianArgs) -> f64
where
    C: StateCoefficients + ?Sized,
    F: CostFunction + ?Sized,
{
    bracket_with_scale(coeffs, cost, beta_nn, pred, a).0
}

/// Necessary-condition brackets on every `(path, n)`, with the magnitude of
/// the terms they were summed from.
#[derive(Debug, Clone)]
pub struct Brackets {
    pub value: Vec<Vec<f64>>,
    /// `|b_u p| + |σ_u p pred| + |β σ_u q| + |f_u k|`
    pub scale: Vec<Vec<f64>>,
}

impl Brackets {
    /// Brackets with no scale information; tolerances stay absolute.
    pub fn unscaled(value: Vec<Vec<f64>>) -> Self {
        let scale = value.iter().map(|r| vec![0.0; r.len()]).collect();
        Self { value, scale }
    }
}

/// The bracket and its term magnitude.
pub fn bracket_with_scale<C, F>(coeffs: &C, cost: &F, beta_nn: f64, pred: f64, a: &HamiltonianArgs) -> (f64, f64)
where
    C: StateCoefficients + ?Sized,
    F: CostFunction + ?Sized,
{
    let HamiltonianArgs { n, x, y, z, u, p, q, k } = *a;
    let su = coeffs.diffusion_u(n, x, u);
    let terms = [
        coeffs.drift_u(n, x, u) * p,
        su * p * pred,
        su * beta_nn * q,
        -cost.f_u(n, x, y, z, u) * k,
    ];
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
}

/// Brackets on every `(path, n)` for `n = 0..=horizon` along the optimum.
#[allow(clippy::too_many_arguments)]
pub fn brackets_along<C, F>(
    coeffs: &C,
    cost: &F,
    optimal: &StatePath,
    cost_sol: Option<&BsdeSolution>,
    adjoint: &AdjointTriple,
    sys: &InnovationSystem,
    noise: &NoiseEnsemble,
) -> Result<Brackets>
where
    C: StateCoefficients + ?Sized,
    F: CostFunction + ?Sized,
{
    let horizon = optimal.horizon;
    if adjoint.pq.truncation < horizon || adjoint.k.iter().any(|k| k.len() <= horizon) {
        return Err(Error::Contract("adjoint processes shorter than the state horizon".into()));
    }
    if sys.horizon() <= horizon {
        return Err(Error::Contract(format!(
            "innovation horizon {} cannot predict step {horizon}",
            sys.horizon()
        )));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = par::map_indexed(optimal.paths(), |path| {
        (0..=horizon)
            .map(|n| {
                let (y, z) = cost_sol
                    .filter(|s| n <= s.truncation)
                    .map_or((0.0, 0.0), |s| (s.y[path][n], s.z[path][n]));
                let a = HamiltonianArgs {
                    n,
                    x: optimal.x[path][n],
                    y,
                    z,
                    u: optimal.u[path][n],
                    p: adjoint.p(path, n),
                    q: adjoint.q(path, n),
                    k: adjoint.k(path, n),
                };
                bracket_with_scale(coeffs, cost, sys.beta(n, n), noise.prediction(path, n), &a)
            })
            .unzip()
    });
    let (value, scale) = rows.into_iter().unzip();
    Ok(Brackets { value, scale })
}

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub trial: usize,
    pub path: usize,
    pub n: usize,
    pub value: f64,
}

/// Outcome of the pointwise necessary-condition check.
#[derive(Debug, Clone, Serialize)]
pub struct NecessaryReport {
    pub min_bracket_product: f64,
    /// smallest product divided by its tolerance threshold
    pub min_relative_product: f64,
    pub violations: Vec<Violation>,
    pub violation_count: usize,
    pub tolerance: f64,
    pub trials: usize,
    pub points_checked: usize,
}

/// Cap on violations listed individually in a report.
pub const MAX_LISTED_VIOLATIONS: usize = 1000;

/// For each trial control and each `(path, n)`, evaluate
/// `bracket(n) · (u_n − u*_n)`. A value is a violation when it falls below
/// `−tolerance · max(1, scale(n) · |u_n − u*_n|)`, so the tolerance is
/// absolute for terms of order one and relative for large ones.
pub fn check_necessary_condition(
    brackets: &Brackets,
    optimal: &StatePath,
    trials: &[Vec<Vec<f64>>],
    tolerance: f64,
) -> Result<NecessaryReport> {
    for (t, trial) in trials.iter().enumerate() {
        if trial.len() != optimal.paths() {
            return Err(Error::Contract(format!("trial {t} does not match the optimal control shape")));
        }
    }
    check_necessary_condition_with(brackets, optimal, trials.len(), tolerance, |t, p| trials[t][p].clone())
}

/// [`check_necessary_condition`] with trial controls generated on demand:
/// `trial(t, path)` returns the values of trial `t` on `path`.
pub fn check_necessary_condition_with<T>(
    brackets: &Brackets,
    optimal: &StatePath,
    trials: usize,
    tolerance: f64,
    trial: T,
) -> Result<NecessaryReport>
where
    T: Fn(usize, usize) -> Vec<f64> + Sync + Send,
{
    let horizon = optimal.horizon;
    if brackets.value.len() != optimal.paths() || brackets.value.iter().any(|b| b.len() <= horizon) {
        return Err(Error::Contract("brackets do not cover the optimal path".into()));
    }
    // one unit of work per (trial, path)
    let paths = optimal.paths();
    let per_unit = par::try_map_indexed(trials * paths, |i| {
        let (t, path) = (i / paths, i % paths);
        let row = trial(t, path);
        if row.len() <= horizon {
            return Err(Error::Contract(format!("trial {t} on path {path} is too short")));
        }
        let mut min = f64::INFINITY;
        let mut rel = f64::INFINITY;
        let mut bad = Vec::new();
        for (n, &trial_u) in row.iter().enumerate().take(horizon + 1) {
            let du = trial_u - optimal.u[path][n];
            let v = brackets.value[path][n] * du;
            let threshold = tolerance * (brackets.scale[path][n] * du.abs()).max(1.0);
            min = min.min(v);
            rel = rel.min(v / threshold);
            if v < -threshold {
                bad.push(Violation { trial: t, path, n, value: v });
            }
        }
        Ok((min, rel, bad))
    })?;
    let mut report = NecessaryReport {
        min_bracket_product: f64::INFINITY,
        min_relative_product: f64::INFINITY,
        violations: Vec::new(),
        violation_count: 0,
        tolerance,
        trials,
        points_checked: trials * paths * (horizon + 1),
    };
    for (min, rel, bad) in per_unit {
        report.min_bracket_product = report.min_bracket_product.min(min);
        report.min_relative_product = report.min_relative_product.min(rel);
        report.violation_count += bad.len();
        let room = MAX_LISTED_VIOLATIONS.saturating_sub(report.violations.len());
        report.violations.extend(bad.into_iter().take(room));
    }
    Ok(report)
}

/// Driver of the variational cost equation:
/// `f_x X̂ + f_y Ŷ + f_z Ẑ + f_u v` with partials frozen along the optimum.
struct VariationalDriver {
    f_x: Vec<Vec<f64>>,
    f_y: Vec<Vec<f64>>,
    f_z: Vec<Vec<f64>>,
    f_u: Vec<Vec<f64>>,
}

impl Driver for VariationalDriver {
    fn f(&self, at: &Point, y: f64, z: f64) -> f64 {
        let (p, n) = (at.path, at.step);
        // here `at.x` is X̂ and `at.u` is v
        self.f_x[p][n] * at.x + self.f_y[p][n] * y + self.f_z[p][n] * z + self.f_u[p][n] * at.u
    }
}

/// Both sides of the duality identity.
#[derive(Debug, Clone, Serialize)]
pub struct DualityReport {
    /// mean over paths of `Σ_n e^{−λn^γ} bracket(n) v_n`
    pub bracket_sum: f64,
    pub bracket_sum_stderr: f64,
    /// `Ŷ_0` of the variational cost equation
    pub y_hat0: f64,
    pub difference: f64,
}

/// Compare `E Σ e^{−λn^γ} bracket(n)·v_n` with `Ŷ_0` for direction `v`.
#[allow(clippy::too_many_arguments)]
pub fn duality_check<C, F>(
    coeffs: &C,
    cost: &F,
    optimal: &StatePath,
    cost_sol: Option<&BsdeSolution>,
    brackets: &Brackets,
    direction: &[Vec<f64>],
    noise: &NoiseEnsemble,
    discount: &Discount,
    backend: &Backend,
) -> Result<DualityReport>
where
    C: StateCoefficients + ?Sized,
    F: CostFunction + ?Sized,
{
    let horizon = optimal.horizon;
    let variation = simulate_variation(coeffs, optimal, direction, noise)?;
    let driver = VariationalDriver {
        f_x: along(optimal, cost_sol, |n, x, y, z, u| cost.f_x(n, x, y, z, u)),
        f_y: along(optimal, cost_sol, |n, x, y, z, u| cost.f_y(n, x, y, z, u)),
        f_z: along(optimal, cost_sol, |n, x, y, z, u| cost.f_z(n, x, y, z, u)),
        f_u: along(optimal, cost_sol, |n, x, y, z, u| cost.f_u(n, x, y, z, u)),
    };
    let hat = solve_truncated(&driver, &variation, noise, discount, horizon, backend)?;
    let y_hat0 = hat.mean_y(0);
    let weights: Vec<f64> = (0..=horizon).map(|n| discount.weight(n)).collect();
    let per_path: Vec<f64> = par::map_indexed(optimal.paths(), |p| {
        (0..=horizon)
            .map(|n| weights[n] * brackets.value[p][n] * direction[p][n])
            .sum()
    });
    let m = per_path.len() as f64;
    let mean = per_path.iter().sum::<f64>() / m;
    let var = per_path.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    Ok(DualityReport {
        bracket_sum: mean,
        bracket_sum_stderr: (var / m).sqrt(),
        y_hat0,
        difference: mean - y_hat0,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub pairs_tested: usize,
    pub violations: usize,
    /// Largest `H(mid) − (H(a)+H(b))/2`.
    pub worst_gap: f64,
    pub tolerance: f64,
}

/// Midpoint convexity of `h` on the box `[lo, hi]` over `pairs` random pairs
/// drawn from ChaCha8 with `seed`.
pub fn verify_convexity<H>(h: H, lo: &[f64], hi: &[f64], pairs: usize, seed: u64, tolerance: f64) -> Result<ConvexityReport>
where
    H: Fn(&[f64]) -> f64,
{
    if lo.len() != hi.len() || lo.iter().zip(hi).any(|(a, b)| a > b) {
        return Err(Error::Domain("convexity box is malformed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        lo.iter()
            .zip(hi)
            .map(|(&a, &b)| if a == b { a } else { rng.random_range(a..=b) })
            .collect()
    };
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let gap = h(&mid) - 0.5 * (h(&a) + h(&b));
        worst = worst.max(gap);
        if gap > tolerance {
            violations += 1;
        }
    }
    Ok(ConvexityReport {
        pairs_tested: pairs,
        violations,
        worst_gap: worst,
        tolerance,
    })
}

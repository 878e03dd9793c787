//! Forward recursion `X_{n+1} = X_n + b(n,X_n,u_n) + σ(n,X_n,u_n) ξ_n` over a
//! path ensemble, the linear variation equation, and the convex control
//! perturbation used to measure first-order sensitivities.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fracnoise::NoiseEnsemble;
use crate::par;
use crate::spaces::{weighted_norm, WeightedNormParams};

/// Drift and diffusion of a scalar controlled state, with partials.
///
/// Implementations must be stateless so they can be evaluated concurrently.
pub trait StateCoefficients: Sync {
    fn drift(&self, n: usize, x: f64, u: f64) -> f64;
    fn diffusion(&self, n: usize, x: f64, u: f64) -> f64;
    fn drift_x(&self, n: usize, x: f64, u: f64) -> f64;
    fn drift_u(&self, n: usize, x: f64, u: f64) -> f64;
    fn diffusion_x(&self, n: usize, x: f64, u: f64) -> f64;
    fn diffusion_u(&self, n: usize, x: f64, u: f64) -> f64;
    /// Declared Lipschitz constant in `(x, u)`.
    fn lipschitz(&self) -> f64;
}

/// Closed convex interval of admissible control values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::Domain(format!("empty interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded() -> Self {
        Self {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

/// A control evaluated along a path: open-loop values or a feedback rule of
/// the current state and the noise observed so far (`ξ_0..ξ_{n-1}`).
pub trait Control: Sync {
    fn value(&self, path: usize, n: usize, x: f64, noise: &NoiseEnsemble) -> f64;

    /// Checked once before simulating `paths` paths up to `horizon`.
    fn validate(&self, _paths: usize, _horizon: usize) -> Result<()> {
        Ok(())
    }
}

/// Open-loop control.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlProcess {
    Constant(f64),
    /// `values[path][n]`
    Values(Vec<Vec<f64>>),
}

impl ControlProcess {
    /// Every value inside `set`?
    pub fn admissible(&self, set: &Interval) -> bool {
        match self {
            ControlProcess::Constant(c) => set.contains(*c),
            ControlProcess::Values(v) => v.iter().flatten().all(|&u| set.contains(u)),
        }
    }

    /// Materialize as `[path][n]` values for `n = 0..=horizon`.
    pub fn to_values(&self, paths: usize, horizon: usize) -> Vec<Vec<f64>> {
        match self {
            ControlProcess::Constant(c) => vec![vec![*c; horizon + 1]; paths],
            ControlProcess::Values(v) => v.iter().map(|p| p[..=horizon].to_vec()).collect(),
        }
    }
}

impl Control for ControlProcess {
    fn value(&self, path: usize, n: usize, _x: f64, _noise: &NoiseEnsemble) -> f64 {
        match self {
            ControlProcess::Constant(c) => *c,
            ControlProcess::Values(v) => v[path][n],
        }
    }

    fn validate(&self, paths: usize, horizon: usize) -> Result<()> {
        if let ControlProcess::Values(v) = self {
            if v.len() < paths {
                return Err(Error::Contract(format!(
                    "control has {} paths, noise has {paths}",
                    v.len()
                )));
            }
            if let Some(i) = v.iter().take(paths).position(|p| p.len() <= horizon) {
                return Err(Error::Contract(format!(
                    "control path {i} has {} steps, need {}",
                    v[i].len(),
                    horizon + 1
                )));
            }
        }
        Ok(())
    }
}

/// `u^ε = (1−ε) u* + ε ũ`.
pub fn perturb_control(
    optimal: &[Vec<f64>],
    trial: &[Vec<f64>],
    eps: f64,
) -> Result<ControlProcess> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!("ε must lie in [0,1], got {eps}")));
    }
    if optimal.len() != trial.len() {
        return Err(Error::Contract("controls live on different path sets".into()));
    }
    let values = optimal
        .iter()
        .zip(trial)
        .map(|(a, b)| {
            if eps == 0.0 {
                a.clone()
            } else if eps == 1.0 {
                b.clone()
            } else {
                a.iter().zip(b).map(|(u, v)| (1.0 - eps) * u + eps * v).collect()
            }
        })
        .collect();
    Ok(ControlProcess::Values(values))
}

/// Law of `X_0`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Constant(f64),
    /// One pre-sampled value per path.
    Values(Vec<f64>),
}

impl InitialState {
    fn at(&self, path: usize) -> f64 {
        match self {
            InitialState::Constant(x) => *x,
            InitialState::Values(v) => v[path],
        }
    }
}

/// Simulated trajectories: `x[path][n]` and the control `u[path][n]` applied,
/// both for `n = 0..=horizon`.
#[derive(Debug, Clone, PartialEq)]
pub struct StatePath {
    pub horizon: usize,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl StatePath {
    pub fn paths(&self) -> usize {
        self.x.len()
    }

    /// Zero state and control on `paths` paths, for drivers that ignore them.
    pub fn zeros(paths: usize, horizon: usize) -> Self {
        Self {
            horizon,
            x: vec![vec![0.0; horizon + 1]; paths],
            u: vec![vec![0.0; horizon + 1]; paths],
        }
    }

    /// Mean of `X_n` over paths.
    pub fn mean_at(&self, n: usize) -> f64 {
        par::mean(self.paths(), |p| self.x[p][n])
    }
}

fn check_noise(noise: &NoiseEnsemble, horizon: usize) -> Result<()> {
    if noise.is_empty() {
        return Err(Error::Contract("empty noise ensemble".into()));
    }
    if noise.horizon() < horizon {
        return Err(Error::Contract(format!(
            "noise horizon {} is shorter than the state horizon {horizon}",
            noise.horizon()
        )));
    }
    Ok(())
}

/// Run the state recursion on every noise path up to `horizon`.
pub fn simulate_state<C, U>(
    coeffs: &C,
    control: &U,
    noise: &NoiseEnsemble,
    x0: &InitialState,
    horizon: usize,
) -> Result<StatePath>
where
    C: StateCoefficients + ?Sized,
    U: Control + ?Sized,
{
    check_noise(noise, horizon)?;
    if let InitialState::Values(v) = x0 {
        if v.len() < noise.len() {
            return Err(Error::Contract("fewer initial values than paths".into()));
        }
    }
    control.validate(noise.len(), horizon)?;
    let rows = par::try_map_indexed(noise.len(), |p| {
        let mut x = Vec::with_capacity(horizon + 1);
        let mut u = Vec::with_capacity(horizon + 1);
        let mut xn = x0.at(p);
        for n in 0..horizon {
            let un = control.value(p, n, xn, noise);
            x.push(xn);
            u.push(un);
            xn += coeffs.drift(n, xn, un) + coeffs.diffusion(n, xn, un) * noise.xi(p, n);
            if !xn.is_finite() {
                return Err(Error::NonFinite { path: p, step: n + 1 });
            }
        }
        x.push(xn);
        u.push(control.value(p, horizon, xn, noise));
        Ok((x, u))
    })?;
    let (x, u) = rows.into_iter().unzip();
    Ok(StatePath { horizon, x, u })
}

/// `X̂_{n+1} = X̂_n + b_x X̂_n + b_u v_n + (σ_x X̂_n + σ_u v_n) ξ_n`, `X̂_0 = 0`,
/// partials evaluated along `(X*, u*)`. The returned path carries `v` as its
/// control.
pub fn simulate_variation<C>(
    coeffs: &C,
    optimal: &StatePath,
    direction: &[Vec<f64>],
    noise: &NoiseEnsemble,
) -> Result<StatePath>
where
    C: StateCoefficients + ?Sized,
{
    let horizon = optimal.horizon;
    check_noise(noise, horizon)?;
    if optimal.paths() != noise.len() || direction.len() != noise.len() {
        return Err(Error::Contract("state, direction and noise must share paths".into()));
    }
    if direction.iter().any(|v| v.len() <= horizon) {
        return Err(Error::Contract(format!("direction must cover n = 0..={horizon}")));
    }
    let x = par::try_map_indexed(noise.len(), |p| {
        let xs = &optimal.x[p];
        let us = &optimal.u[p];
        let v = &direction[p];
        let mut out = Vec::with_capacity(horizon + 1);
        let mut hat = 0.0;
        out.push(hat);
        for n in 0..horizon {
            let (xn, un) = (xs[n], us[n]);
            let drift = coeffs.drift_x(n, xn, un) * hat + coeffs.drift_u(n, xn, un) * v[n];
            let vol = coeffs.diffusion_x(n, xn, un) * hat + coeffs.diffusion_u(n, xn, un) * v[n];
            hat += drift + vol * noise.xi(p, n);
            if !hat.is_finite() {
                return Err(Error::NonFinite { path: p, step: n + 1 });
            }
            out.push(hat);
        }
        Ok(out)
    })?;
    let u = direction.iter().map(|v| v[..=horizon].to_vec()).collect();
    Ok(StatePath { horizon, x, u })
}

/// Worst observed `(|Δb| + |Δσ|) / (|Δx| + |Δu|)` over sampled pairs.
#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub declared: f64,
    pub worst_ratio: f64,
    pub samples: usize,
    pub holds: bool,
}

/// Spot-check the declared Lipschitz constant on pairs
/// `(n, x1, u1, x2, u2)`.
pub fn check_lipschitz<C>(coeffs: &C, pairs: &[(usize, f64, f64, f64, f64)]) -> LipschitzReport
where
    C: StateCoefficients + ?Sized,
{
    let worst = pairs
        .iter()
        .filter_map(|&(n, x1, u1, x2, u2)| {
            let dist = (x1 - x2).abs() + (u1 - u2).abs();
            (dist > 0.0).then(|| {
                let db = (coeffs.drift(n, x1, u1) - coeffs.drift(n, x2, u2)).abs();
                let ds = (coeffs.diffusion(n, x1, u1) - coeffs.diffusion(n, x2, u2)).abs();
                (db + ds) / dist
            })
        })
        .fold(0.0, f64::max);
    let declared = coeffs.lipschitz();
    LipschitzReport {
        declared,
        worst_ratio: worst,
        samples: pairs.len(),
        holds: worst <= declared * (1.0 + 1e-12),
    }
}

/// Largest gap between declared partials and central differences with step `h`.
pub fn check_partials<C>(coeffs: &C, points: &[(usize, f64, f64)], h: f64) -> f64
where
    C: StateCoefficients + ?Sized,
{
    points
        .iter()
        .map(|&(n, x, u)| {
            let fd = |f: &dyn Fn(f64, f64) -> f64, dx: f64, du: f64| {
                (f(x + dx, u + du) - f(x - dx, u - du)) / (2.0 * h)
            };
            let b = |x: f64, u: f64| coeffs.drift(n, x, u);
            let s = |x: f64, u: f64| coeffs.diffusion(n, x, u);
            [
                (fd(&b, h, 0.0) - coeffs.drift_x(n, x, u)).abs(),
                (fd(&b, 0.0, h) - coeffs.drift_u(n, x, u)).abs(),
                (fd(&s, h, 0.0) - coeffs.diffusion_x(n, x, u)).abs(),
                (fd(&s, 0.0, h) - coeffs.diffusion_u(n, x, u)).abs(),
            ]
            .into_iter()
            .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// One row of the first-order sensitivity table.
#[derive(Debug, Clone, Serialize)]
pub struct SensitivityRow {
    pub eps: f64,
    /// `Σ e^{−λn^γ} E|X^ε_n − X*_n|²`
    pub state_gap: f64,
    /// `Σ e^{−λn^γ} E|(X^ε_n − X*_n)/ε − X̂_n|²`
    pub remainder: f64,
}

/// Perturb `u*` toward `trial` by each `ε` and measure how the state moves
/// relative to the variation process.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_table<C>(
    coeffs: &C,
    optimal: &StatePath,
    trial: &[Vec<f64>],
    noise: &NoiseEnsemble,
    x0: &InitialState,
    eps_list: &[f64],
    norm: &WeightedNormParams,
) -> Result<Vec<SensitivityRow>>
where
    C: StateCoefficients + ?Sized,
{
    let horizon = optimal.horizon;
    let direction: Vec<Vec<f64>> = optimal
        .u
        .iter()
        .zip(trial)
        .map(|(u, t)| u.iter().zip(t).map(|(a, b)| b - a).collect())
        .collect();
    let hat = simulate_variation(coeffs, optimal, &direction, noise)?;
    eps_list
        .iter()
        .map(|&eps| {
            let control = perturb_control(&optimal.u, trial, eps)?;
            let moved = simulate_state(coeffs, &control, noise, x0, horizon)?;
            let gap: Vec<Vec<f64>> = moved
                .x
                .iter()
                .zip(&optimal.x)
                .map(|(a, b)| a.iter().zip(b).map(|(p, q)| p - q).collect())
                .collect();
            let rem: Vec<Vec<f64>> = gap
                .iter()
                .zip(&hat.x)
                .map(|(g, h)| g.iter().zip(h).map(|(d, v)| d / eps - v).collect())
                .collect();
            Ok(SensitivityRow {
                eps,
                state_gap: weighted_norm(&gap, norm, horizon)?.value,
                remainder: weighted_norm(&rem, norm, horizon)?.value,
            })
        })
        .collect()
}

/// `path_id,n,X,u,xi`; `xi` is blank where the noise horizon ends.
pub fn write_trajectory_csv<W: Write>(
    state: &StatePath,
    noise: &NoiseEnsemble,
    mut out: W,
) -> Result<()> {
    use crate::io::fmt17;
    writeln!(out, "path_id,n,X,u,xi")?;
    for p in 0..state.paths() {
        for n in 0..=state.horizon {
            let xi = noise.paths[p].xi.get(n).map(|&v| fmt17(v)).unwrap_or_default();
            writeln!(
                out,
                "{p},{n},{},{},{xi}",
                fmt17(state.x[p][n]),
                fmt17(state.u[p][n])
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracnoise::{HurstParam, InnovationSystem};
    use approx::assert_abs_diff_eq;

    /// `b = a x + c u`, `σ = s x + t u`.
    struct Linear {
        a: f64,
        c: f64,
        s: f64,
        t: f64,
    }

    impl StateCoefficients for Linear {
        fn drift(&self, _: usize, x: f64, u: f64) -> f64 {
            self.a * x + self.c * u
        }
        fn diffusion(&self, _: usize, x: f64, u: f64) -> f64 {
            self.s * x + self.t * u
        }
        fn drift_x(&self, _: usize, _: f64, _: f64) -> f64 {
            self.a
        }
        fn drift_u(&self, _: usize, _: f64, _: f64) -> f64 {
            self.c
        }
        fn diffusion_x(&self, _: usize, _: f64, _: f64) -> f64 {
            self.s
        }
        fn diffusion_u(&self, _: usize, _: f64, _: f64) -> f64 {
            self.t
        }
        fn lipschitz(&self) -> f64 {
            self.a.abs().max(self.c.abs()) + self.s.abs().max(self.t.abs())
        }
    }

    /// `b = 0`, `σ = 1`.
    struct UnitNoise;

    impl StateCoefficients for UnitNoise {
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

    fn ensemble(h: f64, n: usize, m: usize) -> NoiseEnsemble {
        let sys = InnovationSystem::build(HurstParam::new(h).unwrap(), n).unwrap();
        NoiseEnsemble::sample(&sys, 3, m)
    }

    #[test]
    fn frozen_state() {
        let noise = ensemble(0.7, 10, 4);
        let zero = Linear { a: 0.0, c: 0.0, s: 0.0, t: 0.0 };
        let st = simulate_state(&zero, &ControlProcess::Constant(1.0), &noise, &InitialState::Constant(2.5), 10)
            .unwrap();
        assert!(st.x.iter().flatten().all(|&x| x == 2.5));
    }

    #[test]
    fn telescoping_noise_sums() {
        let noise = ensemble(0.3, 12, 5);
        let st = simulate_state(&UnitNoise, &ControlProcess::Constant(0.0), &noise, &InitialState::Constant(0.0), 12)
            .unwrap();
        for p in 0..5 {
            let mut acc = 0.0;
            for n in 0..=12 {
                assert_abs_diff_eq!(st.x[p][n], acc, epsilon = 1e-12);
                if n < 12 {
                    acc += noise.xi(p, n);
                }
            }
        }
    }

    #[test]
    fn non_finite_state_is_reported() {
        let noise = ensemble(0.5, 200, 2);
        let explode = Linear { a: 1e200, c: 0.0, s: 0.0, t: 0.0 };
        let err = simulate_state(&explode, &ControlProcess::Constant(0.0), &noise, &InitialState::Constant(1.0), 200)
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { path: 0, step: 2 }));
    }

    #[test]
    fn short_noise_is_rejected() {
        let noise = ensemble(0.5, 5, 2);
        let r = simulate_state(&UnitNoise, &ControlProcess::Constant(0.0), &noise, &InitialState::Constant(0.0), 6);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn variation_examples() {
        let noise = ensemble(0.75, 8, 3);
        let drift_only = Linear { a: 0.0, c: 1.0, s: 0.0, t: 0.0 };
        let st = simulate_state(&drift_only, &ControlProcess::Constant(0.2), &noise, &InitialState::Constant(1.0), 8)
            .unwrap();
        let zero = simulate_variation(&drift_only, &st, &vec![vec![0.0; 9]; 3], &noise).unwrap();
        assert!(zero.x.iter().flatten().all(|&v| v == 0.0));
        let ones = simulate_variation(&drift_only, &st, &vec![vec![1.0; 9]; 3], &noise).unwrap();
        for p in 0..3 {
            for n in 0..=8 {
                assert_eq!(ones.x[p][n], n as f64);
            }
        }
    }

    #[test]
    fn perturbation_examples() {
        let a = vec![vec![0.2; 4]];
        let b = vec![vec![0.6; 4]];
        assert_eq!(perturb_control(&a, &b, 0.0).unwrap(), ControlProcess::Values(a.clone()));
        assert_eq!(perturb_control(&a, &b, 1.0).unwrap(), ControlProcess::Values(b.clone()));
        let ControlProcess::Values(mid) = perturb_control(&a, &b, 0.5).unwrap() else { unreachable!() };
        assert!(mid[0].iter().all(|&v| (v - 0.4).abs() < 1e-15));
        assert!(perturb_control(&a, &b, 1.5).is_err());
        assert!(perturb_control(&a, &b, -0.1).is_err());
    }

    #[test]
    fn lipschitz_and_partials() {
        let lin = Linear { a: 0.3, c: -0.2, s: 0.1, t: 0.4 };
        let pairs: Vec<_> = (0..50)
            .map(|i| {
                let f = i as f64;
                (i, f.sin(), f.cos(), (2.0 * f).sin(), 0.5 * f.cos())
            })
            .collect();
        assert!(check_lipschitz(&lin, &pairs).holds);
        let pts: Vec<_> = (0..10).map(|i| (i, i as f64 * 0.1, 1.0 - i as f64 * 0.2)).collect();
        assert!(check_partials(&lin, &pts, 1e-5) < 1e-9);
    }

    #[test]
    fn nonlinear_sensitivity_rates() {
        // b = sin(u) makes X^ε − X* genuinely nonlinear in ε
        struct Sine;
        impl StateCoefficients for Sine {
            fn drift(&self, _: usize, x: f64, u: f64) -> f64 {
                -0.1 * x + u.sin()
            }
            fn diffusion(&self, _: usize, _: f64, u: f64) -> f64 {
                0.2 * u * u
            }
            fn drift_x(&self, _: usize, _: f64, _: f64) -> f64 {
                -0.1
            }
            fn drift_u(&self, _: usize, _: f64, u: f64) -> f64 {
                u.cos()
            }
            fn diffusion_x(&self, _: usize, _: f64, _: f64) -> f64 {
                0.0
            }
            fn diffusion_u(&self, _: usize, _: f64, u: f64) -> f64 {
                0.4 * u
            }
            fn lipschitz(&self) -> f64 {
                2.0
            }
        }
        let noise = ensemble(0.7, 20, 200);
        let st = simulate_state(&Sine, &ControlProcess::Constant(0.3), &noise, &InitialState::Constant(1.0), 20)
            .unwrap();
        let trial = vec![vec![0.8; 21]; 200];
        let norm = WeightedNormParams::squared(1.0, 1.5).unwrap();
        let rows = sensitivity_table(&Sine, &st, &trial, &noise, &InitialState::Constant(1.0), &[1e-1, 1e-2, 1e-3], &norm)
            .unwrap();
        for w in rows.windows(2) {
            let ratio = w[0].state_gap / w[1].state_gap;
            assert!(ratio > 100.0 / 3.0 && ratio < 300.0, "ratio {ratio}");
            // remainder is O(ε), so its square drops ~100× per decade
            assert!(w[1].remainder < w[0].remainder / 30.0);
        }
    }

    #[test]
    fn trajectory_csv_layout() {
        let noise = ensemble(0.5, 2, 1);
        let st = simulate_state(&UnitNoise, &ControlProcess::Constant(0.0), &noise, &InitialState::Constant(0.0), 2)
            .unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&st, &noise, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "path_id,n,X,u,xi");
        assert_eq!(lines.len(), 4);
        assert!(lines[3].ends_with(','));
    }
}

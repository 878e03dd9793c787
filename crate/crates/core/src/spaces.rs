//! Weighted sequence spaces: the tempering sequence `δ_n = 1 − (n+2)^{−θ}`,
//! its running products, and discounted norms
//! `Σ_n e^{−λ n^γ} E|X_n|^{p(n)}` with `p(n) = β δ_1⋯δ_n` (forward) or
//! `β δ_1⁻¹⋯δ_n⁻¹` (backward).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// `δ_n = 1 − (n+2)^{−θ}`.
pub fn delta_term(theta: f64, n: usize) -> Result<f64> {
    check_theta(theta)?;
    if n == 0 {
        return Err(Error::Domain("δ is indexed from n = 1".into()));
    }
    Ok(1.0 - ((n + 2) as f64).powf(-theta))
}

/// Closed-form lower bound `exp(2^{1−θ}/(1−θ) + 2^{1−2θ}/(1−2θ))` on every
/// running product `δ_1⋯δ_n`.
pub fn product_lower_bound(theta: f64) -> f64 {
    let a = 2f64.powf(1.0 - theta) / (1.0 - theta);
    let b = 2f64.powf(1.0 - 2.0 * theta) / (1.0 - 2.0 * theta);
    (a + b).exp()
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 1.0 && theta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("θ must exceed 1, got {theta}")))
    }
}

/// The sequence `δ_1, δ_2, …` for a fixed `θ > 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaVector {
    theta: f64,
}

impl DeltaVector {
    pub fn new(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn term(&self, n: usize) -> f64 {
        1.0 - ((n + 2) as f64).powf(-self.theta)
    }

    /// `ln δ_n`, accurate when `δ_n` is close to one.
    pub fn ln_term(&self, n: usize) -> f64 {
        (-((n + 2) as f64).powf(-self.theta)).ln_1p()
    }

    /// `ln(δ_1⋯δ_n)` for `n = 0..=upto` (entry 0 is the empty product).
    pub fn ln_running_products(&self, upto: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(upto + 1);
        let mut acc = 0.0;
        out.push(acc);
        for n in 1..=upto {
            acc += self.ln_term(n);
            out.push(acc);
        }
        out
    }

    pub fn running_product(&self, n: usize) -> f64 {
        (1..=n).map(|i| self.ln_term(i)).sum::<f64>().exp()
    }

    /// Lower bound on `|δ| = lim δ_1⋯δ_n`.
    pub fn limit_lower_bound(&self) -> f64 {
        product_lower_bound(self.theta)
    }

    /// `a·|δ|² ≥ b ≥ 1`, checked with the closed-form lower bound on `|δ|`.
    pub fn compatible(&self, a: f64, b: f64) -> bool {
        let d = self.limit_lower_bound();
        b >= 1.0 && a * d * d >= b
    }
}

/// Which tempering the exponent receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `β δ_1⋯δ_n`
    Forward,
    /// `β δ_1⁻¹⋯δ_n⁻¹`
    Backward,
    /// plain `β` at every step
    Untempered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNormParams {
    pub lambda: f64,
    pub gamma_exp: f64,
    pub base_power: f64,
    pub direction: Direction,
    pub delta: DeltaVector,
}

impl WeightedNormParams {
    pub fn new(
        lambda: f64,
        gamma_exp: f64,
        base_power: f64,
        direction: Direction,
        theta: f64,
    ) -> Result<Self> {
        if lambda.is_nan() || lambda <= 0.0 {
            return Err(Error::Domain(format!("λ must be positive, got {lambda}")));
        }
        if gamma_exp.is_nan() || gamma_exp <= 1.0 {
            return Err(Error::Domain(format!("discount exponent must exceed 1, got {gamma_exp}")));
        }
        if base_power.is_nan() || base_power <= 0.0 {
            return Err(Error::Domain(format!("base power must be positive, got {base_power}")));
        }
        Ok(Self {
            lambda,
            gamma_exp,
            base_power,
            direction,
            delta: DeltaVector::new(theta)?,
        })
    }

    /// Plain `Σ e^{−λn^γ} E|X_n|²`.
    pub fn squared(lambda: f64, gamma_exp: f64) -> Result<Self> {
        Self::new(lambda, gamma_exp, 2.0, Direction::Untempered, 2.0)
    }

    /// `ln e^{−λ n^γ}`.
    pub fn ln_discount(&self, n: usize) -> f64 {
        -self.lambda * (n as f64).powf(self.gamma_exp)
    }

    /// Exponents `p(0..=upto)`; products taken in log space.
    pub fn powers(&self, upto: usize) -> Vec<f64> {
        match self.direction {
            Direction::Untempered => vec![self.base_power; upto + 1],
            Direction::Forward => self
                .delta
                .ln_running_products(upto)
                .into_iter()
                .map(|l| self.base_power * l.exp())
                .collect(),
            Direction::Backward => self
                .delta
                .ln_running_products(upto)
                .into_iter()
                .map(|l| self.base_power * (-l).exp())
                .collect(),
        }
    }
}

/// Truncated weighted norm with its per-index terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub value: f64,
    pub truncation: usize,
    pub terms: Vec<f64>,
    pub last_term: f64,
}

/// `Σ_{n=0}^{N} e^{−λ n^γ} mean_paths |x_n|^{p(n)}` over a path-major ensemble.
pub fn weighted_norm(
    paths: &[Vec<f64>],
    params: &WeightedNormParams,
    truncation: usize,
) -> Result<NormReport> {
    if paths.is_empty() {
        return Err(Error::Domain("weighted norm of an empty ensemble".into()));
    }
    if let Some((i, p)) = paths.iter().enumerate().find(|(_, p)| p.len() <= truncation) {
        return Err(Error::Domain(format!(
            "path {i} has {} entries, truncation {truncation} needs {}",
            p.len(),
            truncation + 1
        )));
    }
    let powers = params.powers(truncation);
    let ln_m = (paths.len() as f64).ln();
    let terms: Vec<f64> = par::map_indexed(truncation + 1, |n| {
        let p = powers[n];
        // log-sum-exp of p·ln|x| keeps huge and tiny magnitudes representable
        let logs: Vec<f64> = paths.iter().map(|path| p * path[n].abs().ln()).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return 0.0;
        }
        let lse = top + logs.iter().map(|l| (l - top).exp()).sum::<f64>().ln();
        (params.ln_discount(n) + lse - ln_m).exp()
    });
    let value = terms.iter().sum();
    let last_term = *terms.last().unwrap_or(&0.0);
    Ok(NormReport {
        value,
        truncation,
        terms,
        last_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn delta_examples() {
        assert_abs_diff_eq!(delta_term(2.0, 1).unwrap(), 8.0 / 9.0, epsilon = 1e-15);
        assert!((delta_term(50.0, 1).unwrap() - 1.0).abs() < 1e-15);
        assert_abs_diff_eq!(delta_term(1.5, 2).unwrap(), 0.875, epsilon = 1e-15);
        assert!(delta_term(1.0, 1).is_err());
        assert!(DeltaVector::new(0.5).is_err());
    }

    #[test]
    fn bound_examples() {
        // exp(−1/2 − 1/24)
        assert_abs_diff_eq!(product_lower_bound(2.0), 0.581_777_814_209_808_3, epsilon = 1e-12);
        // exp(−1/8 − 1/160)
        assert_abs_diff_eq!(product_lower_bound(3.0), 0.876_998_497_358_217, epsilon = 1e-12);
        let b10 = product_lower_bound(10.0);
        assert!(b10 > 0.998 && b10 < 1.0);
    }

    #[test]
    fn constant_path_norm() {
        let params = WeightedNormParams::new(1.0, 2.0, 3.0, Direction::Forward, 2.0).unwrap();
        let paths = vec![vec![1.0; 60]; 3];
        let r5 = weighted_norm(&paths, &params, 5).unwrap();
        // Σ_{n=0}^{5} e^{−n²}
        assert_abs_diff_eq!(r5.value, 1.386_318_602_413_326, epsilon = 1e-12);
        let r50 = weighted_norm(&paths, &params, 50).unwrap();
        assert!((r50.value - r5.value).abs() < 1e-10);
        assert_abs_diff_eq!(r5.last_term, (-25.0f64).exp(), epsilon = 1e-20);
    }

    #[test]
    fn zero_and_empty_paths() {
        let params = WeightedNormParams::squared(1.0, 1.5).unwrap();
        let zero = vec![vec![0.0; 10]; 4];
        assert_eq!(weighted_norm(&zero, &params, 9).unwrap().value, 0.0);
        assert!(weighted_norm(&[], &params, 0).is_err());
        assert!(weighted_norm(&zero, &params, 10).is_err());
    }

    #[test]
    fn powers_follow_direction() {
        let fwd = WeightedNormParams::new(1.0, 2.0, 2.0, Direction::Forward, 2.0).unwrap();
        let bwd = WeightedNormParams { direction: Direction::Backward, ..fwd };
        let pf = fwd.powers(3);
        let pb = bwd.powers(3);
        assert_eq!(pf[0], 2.0);
        assert_abs_diff_eq!(pf[1], 2.0 * 8.0 / 9.0, epsilon = 1e-14);
        assert_abs_diff_eq!(pb[2], 2.0 / (8.0 / 9.0 * 15.0 / 16.0), epsilon = 1e-14);
    }

    #[test]
    fn compatibility() {
        let d = DeltaVector::new(3.0).unwrap();
        assert!(d.compatible(2.0, 1.0));
        assert!(!d.compatible(1.0, 1.0));
        assert!(!d.compatible(5.0, 0.5));
    }
}

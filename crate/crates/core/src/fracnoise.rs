//! Fractional Gaussian noise: autocovariance, the innovation (Cholesky)
//! representation `ξ = β·η`, its inverse `η = α·ξ`, one-step prediction
//! coefficients `γ(n,k)`, and seeded exact sampling.
//!
//! Index convention: `F_n = σ(ξ_0, …, ξ_{n-1})`, so [`InnovationSystem::predict_next`]
//! with a prefix of length `n` returns `E[ξ_n | F_n]`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, LowerTriangular};
use crate::par;

/// Hurst exponent, strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(Error::Domain(format!("Hurst parameter must lie in (0,1), got {h}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `H = 1/2`: increments are independent.
    pub fn is_white(self) -> bool {
        self.0 == 0.5
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

/// `ρ_H(k) = ½(|k+1|^{2H} − 2|k|^{2H} + |k−1|^{2H})`.
pub fn fgn_autocovariance(h: HurstParam, lag: usize) -> f64 {
    let two_h = 2.0 * h.0;
    let k = lag as f64;
    let below = (k - 1.0).abs();
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + below.powf(two_h))
}

/// `E|N(0,1)|^m = 2^{m/2} Γ((m+1)/2) / √π`.
pub fn gaussian_abs_moment(m: f64) -> Result<f64> {
    if m.is_nan() || m <= 0.0 || m.is_infinite() {
        return Err(Error::Domain(format!("moment order must be positive, got {m}")));
    }
    if m.fract() == 0.0 && m <= 40.0 {
        // integer orders in closed form: (m-1)!! for even m, 2^j j! √(2/π) for m = 2j+1
        let m = m as u32;
        return Ok(if m.is_multiple_of(2) {
            (1..m).step_by(2).map(f64::from).product()
        } else {
            let j = (m - 1) / 2;
            (1..=j).map(|i| 2.0 * f64::from(i)).product::<f64>() * (2.0 / std::f64::consts::PI).sqrt()
        });
    }
    let ln = 0.5 * m * std::f64::consts::LN_2 + statrs::function::gamma::ln_gamma(0.5 * (m + 1.0))
        - 0.5 * std::f64::consts::PI.ln();
    Ok(ln.exp())
}

/// Toeplitz covariance of `ξ_0..ξ_{N-1}`, stored dense row-major.
#[derive(Debug, Clone)]
pub struct FgnCovariance {
    pub hurst: HurstParam,
    pub horizon: usize,
    pub matrix: Vec<f64>,
}

impl FgnCovariance {
    pub fn new(hurst: HurstParam, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        let lags: Vec<f64> = (0..horizon).map(|k| fgn_autocovariance(hurst, k)).collect();
        let mut matrix = vec![0.0; horizon * horizon];
        for i in 0..horizon {
            for j in 0..horizon {
                matrix[i * horizon + j] = lags[i.abs_diff(j)];
            }
        }
        Ok(Self { hurst, horizon, matrix })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.horizon + j]
    }
}

/// Innovation loadings for a fixed Hurst exponent and horizon. Immutable
/// after construction; share it freely across threads.
#[derive(Debug, Clone)]
pub struct InnovationSystem {
    hurst: HurstParam,
    horizon: usize,
    beta: LowerTriangular,
    alpha: LowerTriangular,
    // strictly lower; diagonal left at zero
    gamma: LowerTriangular,
}

impl InnovationSystem {
    /// Cholesky factor `β` of the covariance, `α = β⁻¹`, and
    /// `γ(n,k) = Σ_{l=0}^{n-1} β(n,l) α(l,k)`.
    pub fn build(hurst: HurstParam, horizon: usize) -> Result<Self> {
        let cov = FgnCovariance::new(hurst, horizon)?;
        let beta = linalg::cholesky(&cov.matrix, horizon)?;
        let alpha = beta.inverse()?;
        let rows = par::map_indexed(horizon, |n| {
            let b = beta.row(n);
            (0..n)
                .map(|k| (k..n).map(|l| b[l] * alpha.get(l, k)).sum::<f64>())
                .collect::<Vec<f64>>()
        });
        let mut gamma = LowerTriangular::zeros(horizon);
        for (n, row) in rows.into_iter().enumerate() {
            for (k, g) in row.into_iter().enumerate() {
                gamma.set(n, k, g);
            }
        }
        Ok(Self {
            hurst,
            horizon,
            beta,
            alpha,
            gamma,
        })
    }

    pub fn hurst(&self) -> HurstParam {
        self.hurst
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn beta(&self, n: usize, k: usize) -> f64 {
        self.beta.get(n, k)
    }

    pub fn alpha(&self, n: usize, k: usize) -> f64 {
        self.alpha.get(n, k)
    }

    /// Prediction coefficient `γ(n,k)`; zero unless `k < n`.
    pub fn gamma(&self, n: usize, k: usize) -> f64 {
        if k >= n {
            0.0
        } else {
            self.gamma.get(n, k)
        }
    }

    pub fn beta_matrix(&self) -> &LowerTriangular {
        &self.beta
    }

    pub fn alpha_matrix(&self) -> &LowerTriangular {
        &self.alpha
    }

    /// `E[ξ_n | ξ_0..ξ_{n-1}]` where `n = prefix.len()`.
    pub fn predict_next(&self, prefix: &[f64]) -> Result<f64> {
        let n = prefix.len();
        if n >= self.horizon {
            return Err(Error::Range(format!(
                "prefix of length {n} leaves nothing to predict within horizon {}",
                self.horizon
            )));
        }
        Ok(self.predict_unchecked(n, prefix))
    }

    #[inline]
    fn predict_unchecked(&self, n: usize, xi: &[f64]) -> f64 {
        if n == 0 {
            return 0.0;
        }
        linalg::dot(&self.gamma.row(n)[..n], &xi[..n])
    }

    /// All one-step predictions along a path: entry `n` is `E[ξ_n | F_n]`.
    pub fn predictions(&self, xi: &[f64]) -> Vec<f64> {
        let len = xi.len().min(self.horizon);
        (0..len).map(|n| self.predict_unchecked(n, xi)).collect()
    }

    /// Recover innovations `η = α·ξ`.
    pub fn whiten(&self, xi: &[f64]) -> Vec<f64> {
        self.alpha.mul_vec(xi)
    }

    /// Color innovations `ξ = β·η`.
    pub fn color(&self, eta: &[f64]) -> Vec<f64> {
        self.beta.mul_vec(eta)
    }

    /// One path from stream 0 of `seed`.
    pub fn sample_path(&self, seed: u64) -> NoisePath {
        self.sample_path_stream(seed, 0)
    }

    /// Innovations are drawn from ChaCha8 (`seed_from_u64(seed)`, then
    /// `set_stream(stream)`) with the ziggurat standard normal of `rand_distr`.
    pub fn sample_path_stream(&self, seed: u64, stream: u64) -> NoisePath {
        let eta = draw_innovations(seed, stream, self.horizon);
        let xi = self.color(&eta);
        NoisePath { seed, stream, eta, xi }
    }

    /// `max |β·βᵀ − Cov|`.
    pub fn reconstruction_error(&self) -> f64 {
        let cov = FgnCovariance::new(self.hurst, self.horizon).expect("horizon checked at build");
        let rows = par::map_indexed(self.horizon, |i| {
            let bi = self.beta.row(i);
            (0..=i)
                .map(|j| (linalg::dot(&bi[..=j], &self.beta.row(j)[..=j]) - cov.get(i, j)).abs())
                .fold(0.0, f64::max)
        });
        rows.into_iter().fold(0.0, f64::max)
    }

    /// `max |β·α − I|`.
    pub fn inversion_error(&self) -> f64 {
        let rows = par::map_indexed(self.horizon, |i| {
            let bi = self.beta.row(i);
            (0..=i)
                .map(|j| {
                    let v: f64 = (j..=i).map(|l| bi[l] * self.alpha.get(l, j)).sum();
                    (v - if i == j { 1.0 } else { 0.0 }).abs()
                })
                .fold(0.0, f64::max)
        });
        rows.into_iter().fold(0.0, f64::max)
    }

    /// `max |γ(n,k)|` over `k < n`.
    pub fn max_abs_gamma(&self) -> f64 {
        (1..self.horizon)
            .flat_map(|n| self.gamma.row(n)[..n].iter().copied())
            .fold(0.0, |m, g: f64| m.max(g.abs()))
    }

    /// Dump one of the coefficient arrays as `row,col,value` CSV.
    pub fn write_csv<W: Write>(&self, which: CoefficientKind, mut out: W) -> Result<()> {
        writeln!(out, "row,col,value")?;
        for n in 0..self.horizon {
            let upto = match which {
                CoefficientKind::Gamma => n,
                _ => n + 1,
            };
            for k in 0..upto {
                let v = match which {
                    CoefficientKind::Beta => self.beta(n, k),
                    CoefficientKind::Alpha => self.alpha(n, k),
                    CoefficientKind::Gamma => self.gamma(n, k),
                };
                writeln!(out, "{n},{k},{}", crate::io::fmt17(v))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientKind {
    Beta,
    Alpha,
    Gamma,
}

/// `len` iid standard normals from ChaCha8 stream `stream` of `seed`.
pub fn draw_innovations(seed: u64, stream: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// One sampled trajectory of innovations and the noise they generate.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub seed: u64,
    pub stream: u64,
    pub eta: Vec<f64>,
    pub xi: Vec<f64>,
}

impl NoisePath {
    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

/// `M` independent paths: path `i` is stream `i` of the master seed.
#[derive(Debug, Clone)]
pub struct NoiseEnsemble {
    pub seed: u64,
    pub paths: Vec<NoisePath>,
    /// `predictions[i][n] = E[ξ_n | F_n]` on path `i`.
    pub predictions: Vec<Vec<f64>>,
}

impl NoiseEnsemble {
    pub fn sample(sys: &InnovationSystem, seed: u64, count: usize) -> Self {
        let paths = par::map_indexed(count, |i| sys.sample_path_stream(seed, i as u64));
        let predictions = par::map_indexed(count, |i| sys.predictions(&paths[i].xi));
        Self {
            seed,
            paths,
            predictions,
        }
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.paths.first().map_or(0, NoisePath::len)
    }

    #[inline]
    pub fn xi(&self, path: usize, n: usize) -> f64 {
        self.paths[path].xi[n]
    }

    #[inline]
    pub fn eta(&self, path: usize, n: usize) -> f64 {
        self.paths[path].eta[n]
    }

    /// `E[ξ_n | F_n]` on `path`; zero past the sampled horizon.
    #[inline]
    pub fn prediction(&self, path: usize, n: usize) -> f64 {
        self.predictions[path].get(n).copied().unwrap_or(0.0)
    }
}

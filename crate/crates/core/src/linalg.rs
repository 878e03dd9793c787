//! Dense lower-triangular storage, Cholesky factorization and the small
//! symmetric solves used by the regression backend.

use crate::error::{Error, Result};

/// Lower-triangular matrix stored row by row (row `i` holds columns `0..=i`).
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular {
    dim: usize,
    data: Vec<f64>,
}

impl LowerTriangular {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, 1.0);
        }
        m
    }

    #[inline]
    fn offset(i: usize) -> usize {
        i * (i + 1) / 2
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `(i, j)`; zero above the diagonal.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[Self::offset(i) + j]
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(j <= i);
        self.data[Self::offset(i) + j] = value;
    }

    /// Columns `0..=i` of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let o = Self::offset(i);
        &self.data[o..o + i + 1]
    }

    /// `self · v` using only the first `v.len()` rows.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..v.len().min(self.dim))
            .map(|i| dot(self.row(i), &v[..=i]))
            .collect()
    }

    /// Inverse by forward substitution, column by column.
    pub fn inverse(&self) -> Result<Self> {
        let n = self.dim;
        let mut inv = Self::zeros(n);
        for i in 0..n {
            let d = self.get(i, i);
            if d == 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { pivot: i, value: d });
            }
            inv.set(i, i, 1.0 / d);
            let row_i = self.row(i);
            for j in 0..i {
                // (L⁻¹)_{ij} = -(Σ_{k=j}^{i-1} L_{ik} (L⁻¹)_{kj}) / L_{ii}
                let mut s = 0.0;
                for (k, &l) in row_i.iter().enumerate().take(i).skip(j) {
                    s += l * inv.get(k, j);
                }
                inv.set(i, j, -s / d);
            }
        }
        Ok(inv)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky factor of a dense symmetric matrix given row-major with side `n`.
pub fn cholesky(matrix: &[f64], n: usize) -> Result<LowerTriangular> {
    assert_eq!(matrix.len(), n * n, "matrix must be n×n");
    let mut l = LowerTriangular::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            let a = matrix[i * n + j];
            if i == j {
                let pivot = a - s;
                if pivot <= 0.0 || !pivot.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: pivot });
                }
                l.set(i, i, pivot.sqrt());
            } else {
                let v = (a - s) / l.get(j, j);
                l.set(i, j, v);
            }
        }
    }
    Ok(l)
}

/// Solve `A x = b` for a small symmetric positive-definite `A` (row-major).
/// Fails with the offending pivot when `A` is singular to working precision.
pub fn solve_spd(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    // relative pivot floor: anything smaller is treated as rank loss
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let floor = scale * 1e-13;
    let mut l = LowerTriangular::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            if i == j {
                let pivot = a[i * n + i] - s;
                if pivot <= floor || !pivot.is_finite() {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: pivot });
                }
                l.set(i, i, pivot.sqrt());
            } else {
                l.set(i, j, (a[i * n + j] - s) / l.get(j, j));
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - dot(&l.row(i)[..i], &y[..i])) / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for (k, xk) in x.iter().enumerate().skip(i + 1) {
            s -= l.get(k, i) * xk;
        }
        x[i] = s / l.get(i, i);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_of_2x2() {
        let l = cholesky(&[4.0, 2.0, 2.0, 5.0], 2).unwrap();
        assert_eq!(l.get(0, 0), 2.0);
        assert_eq!(l.get(1, 0), 1.0);
        assert_eq!(l.get(1, 1), 2.0);
        assert_eq!(l.get(0, 1), 0.0);
    }

    #[test]
    fn cholesky_reports_pivot() {
        let err = cholesky(&[1.0, 2.0, 2.0, 1.0], 2).unwrap_err();
        match err {
            Error::NotPositiveDefinite { pivot, .. } => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn inverse_round_trips() {
        let l = cholesky(&[4.0, 2.0, 1.0, 2.0, 5.0, 3.0, 1.0, 3.0, 6.0], 3).unwrap();
        let inv = l.inverse().unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| l.get(i, k) * inv.get(k, j)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn spd_solve() {
        let x = solve_spd(&[4.0, 2.0, 2.0, 5.0], &[2.0, 1.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1].abs() < 1e-15);
        assert!(solve_spd(&[1.0, 1.0, 1.0, 1.0], &[1.0, 1.0]).is_err());
    }
}

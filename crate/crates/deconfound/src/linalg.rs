//! Dense linear-algebra helpers shared by the estimator and score modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub fn to_dmatrix(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)])
}

pub fn to_array2(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(r, c)| m[(r, c)])
}

/// Symmetric eigendecomposition, eigenvalues sorted descending with the
/// eigenvectors permuted to match. The input is symmetrized first to guard
/// against accumulation asymmetry.
pub fn sym_eigen_desc(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    if a.nrows() != a.ncols() {
        return Err(Error::shape("eigendecomposition needs a square matrix"));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("eigendecomposition input".into()));
    }
    let n = a.nrows();
    let mut m = to_dmatrix(a);
    // symmetrize
    for r in 0..n {
        for c in (r + 1)..n {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
    let eig = m
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("symmetric eigensolver did not converge".into()))?;
    let mut idx: Vec<usize> = (0..n).collect();
    // stable sort keeps solver order on ties
    idx.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = Array1::from_iter(idx.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = Array2::from_shape_fn((n, n), |(r, c)| eig.eigenvectors[(r, idx[c])]);
    Ok((values, vectors))
}

/// Cholesky factorization with an escalating jitter ladder. Jitter levels are
/// multiples of the mean diagonal: 0, 1e-8, 1e-6, 1e-4, 1e-2, then failure.
pub struct JitteredCholesky {
    chol: Cholesky<f64, Dyn>,
    /// Jitter actually added to the diagonal (absolute value).
    pub jitter: f64,
}

const JITTER_LADDER: [f64; 5] = [0.0, 1e-8, 1e-6, 1e-4, 1e-2];

impl JitteredCholesky {
    pub fn new(k: &DMatrix<f64>) -> Result<JitteredCholesky> {
        let n = k.nrows();
        if n == 0 {
            return Err(Error::shape("cannot factor an empty matrix"));
        }
        let mean_diag = (0..n).map(|i| k[(i, i)]).sum::<f64>() / n as f64;
        let scale = if mean_diag.abs() > 0.0 { mean_diag.abs() } else { 1.0 };
        let mut max_tried = 0.0;
        for &level in &JITTER_LADDER {
            let jitter = level * scale;
            max_tried = jitter;
            let mut trial = k.clone();
            for i in 0..n {
                trial[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(trial) {
                return Ok(JitteredCholesky { chol, jitter });
            }
        }
        Err(Error::FactorizationFailure { max_jitter: max_tried })
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        (0..l.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Column means of a matrix.
pub fn column_means(x: &Array2<f64>) -> Array1<f64> {
    let n = x.nrows() as f64;
    let mut means = Array1::zeros(x.ncols());
    for row in x.rows() {
        means += &row;
    }
    means / n
}

/// Per-column sample variance (denominator N, matching the covariance
/// convention used throughout).
pub fn column_vars(x: &Array2<f64>) -> Array1<f64> {
    let means = column_means(x);
    let n = x.nrows() as f64;
    let mut vars = Array1::zeros(x.ncols());
    for row in x.rows() {
        for (j, &v) in row.iter().enumerate() {
            let d = v - means[j];
            vars[j] += d * d;
        }
    }
    vars / n
}

pub fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

pub fn covariance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let ma = mean(a);
    let mb = mean(b);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / a.len() as f64
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn eigen_of_diagonal() {
        let a = Array2::from_diag(&Array1::from(vec![1.0, 3.0, 2.0]));
        let (vals, vecs) = sym_eigen_desc(&a).unwrap();
        assert_abs_diff_eq!(vals[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(vals[2], 1.0, epsilon = 1e-12);
        // eigenvector for the top eigenvalue points along axis 1
        assert_abs_diff_eq!(vecs[(1, 0)].abs(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn cholesky_recovers_log_det() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let chol = JitteredCholesky::new(&k).unwrap();
        assert_abs_diff_eq!(chol.log_det(), (2.0f64 * 1.0 - 0.25).ln(), epsilon = 1e-12);
        assert_eq!(chol.jitter, 0.0);
    }

    #[test]
    fn cholesky_jitter_escalates_on_semidefinite() {
        // rank-1 matrix is only PSD; the ladder must kick in
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let chol = JitteredCholesky::new(&k).unwrap();
        assert!(chol.jitter > 0.0);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}

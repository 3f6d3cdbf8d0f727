//! Spectral estimation of confounder sufficient statistics.
//!
//! Each sample is projected onto the span of the top `M` eigenvectors of the
//! sample covariance. When `p > N` the decomposition runs on the `N x N`
//! Gram matrix instead, which yields the identical projection at a fraction
//! of the cost in the high-dimensional regime.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcssConfig {
    pub m: usize,
    /// Column-center before forming the covariance; means are restored on the
    /// output. Default true so uncentered real data is handled correctly.
    #[serde(default = "default_center")]
    pub center: bool,
}

fn default_center() -> bool {
    true
}

impl Default for PcssConfig {
    fn default() -> Self {
        PcssConfig { m: 1, center: true }
    }
}

#[derive(Debug, Clone)]
pub struct PcssResult {
    /// Estimated N x p sufficient-statistic matrix.
    pub s_hat: Array2<f64>,
    /// Descending spectrum of the sample covariance, `min(N, p)` values.
    pub eigenvalues: Vec<f64>,
    /// Top-M eigenvectors of the covariance, p x M.
    pub v_m: Array2<f64>,
    /// Column means used for centering (zeros when centering is disabled).
    pub column_means: Array1<f64>,
}

impl PcssResult {
    pub fn suggested_m(&self) -> usize {
        suggest_m(&self.eigenvalues)
    }
}

/// Project each row of `x` onto the top-M principal eigenspace of the sample
/// covariance.
pub fn pcss(x: &Array2<f64>, config: &PcssConfig) -> Result<PcssResult> {
    let (n, p) = x.dim();
    if n < 2 {
        return Err(Error::invalid("pcss needs at least 2 samples"));
    }
    if p < 1 {
        return Err(Error::invalid("pcss needs at least 1 column"));
    }
    if config.m > n.min(p) {
        return Err(Error::invalid(format!(
            "M = {} exceeds min(N, p) = {}",
            config.m,
            n.min(p)
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("pcss input matrix".into()));
    }

    let column_means = if config.center {
        linalg::column_means(x)
    } else {
        Array1::zeros(p)
    };
    let xc = x - &column_means.view().insert_axis(Axis(0));
    let m = config.m;

    let (eigenvalues, v_m, s_hat_c);
    if p <= n {
        let cov = xc.t().dot(&xc) / n as f64;
        let (vals, vecs) = linalg::sym_eigen_desc(&cov)?;
        let v = vecs.slice(ndarray::s![.., ..m]).to_owned();
        s_hat_c = xc.dot(&v).dot(&v.t());
        eigenvalues = vals.iter().take(n.min(p)).copied().collect::<Vec<_>>();
        v_m = v;
    } else {
        // Gram trick: eigenpairs of (1/N) Xc Xc^T map onto the covariance's
        // via v = Xc^T u / ||Xc^T u||, sharing the nonzero spectrum.
        let gram = xc.dot(&xc.t()) / n as f64;
        let (vals, u) = linalg::sym_eigen_desc(&gram)?;
        let u_m = u.slice(ndarray::s![.., ..m]).to_owned();
        s_hat_c = u_m.dot(&u_m.t()).dot(&xc);
        let mut v = Array2::zeros((p, m));
        for col in 0..m {
            let xu = xc.t().dot(&u.column(col));
            let norm = xu.dot(&xu).sqrt();
            if norm > 1e-12 {
                v.column_mut(col).assign(&(&xu / norm));
            }
        }
        eigenvalues = vals.to_vec();
        v_m = v;
    }

    let s_hat = s_hat_c + &column_means.view().insert_axis(Axis(0));
    Ok(PcssResult {
        s_hat,
        eigenvalues,
        v_m,
        column_means,
    })
}

/// Maximum over (selected) columns of the per-column mean squared error.
pub fn max_mse(
    s_hat: &Array2<f64>,
    s_true: &Array2<f64>,
    columns: Option<&[usize]>,
) -> Result<f64> {
    if s_hat.dim() != s_true.dim() {
        return Err(Error::shape(format!(
            "S_hat is {:?} but S_true is {:?}",
            s_hat.dim(),
            s_true.dim()
        )));
    }
    let all: Vec<usize>;
    let cols = match columns {
        Some(c) => c,
        None => {
            all = (0..s_hat.ncols()).collect();
            &all
        }
    };
    if cols.is_empty() {
        return Err(Error::EmptyColumnSet);
    }
    let n = s_hat.nrows() as f64;
    let mut worst = f64::NEG_INFINITY;
    for &j in cols {
        if j >= s_hat.ncols() {
            return Err(Error::invalid(format!("column {j} out of range")));
        }
        let mut sum = 0.0;
        for row in 0..s_hat.nrows() {
            let d = s_true[(row, j)] - s_hat[(row, j)];
            sum += d * d;
        }
        worst = worst.max(sum / n);
    }
    Ok(worst)
}

/// Largest-spectral-gap heuristic for choosing the component count: the
/// argmax of consecutive eigenvalue ratios over the first half of the
/// spectrum, first index on ties. Complements scree-plot inspection; the
/// full spectrum is always reported alongside.
pub fn suggest_m(eigenvalues: &[f64]) -> usize {
    if eigenvalues.len() < 2 {
        return eigenvalues.len();
    }
    let limit = eigenvalues.len().div_ceil(2).min(eigenvalues.len() - 1);
    let mut best_k = 1;
    let mut best_ratio = f64::NEG_INFINITY;
    for k in 1..=limit {
        let denom = eigenvalues[k].max(1e-300);
        let ratio = eigenvalues[k - 1] / denom;
        if ratio > best_ratio {
            best_ratio = ratio;
            best_k = k;
        }
    }
    best_k
}

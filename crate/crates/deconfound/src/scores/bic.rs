//! Gaussian BIC parent-set score over a pluggable covariance estimate.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

use super::{ScoreDiagnostics, ScoreValue};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CovSource {
    SampleCov,
    PcssResidualCov,
}

#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub sigma: Array2<f64>,
    pub source: CovSource,
}

impl CovarianceEstimate {
    pub fn p(&self) -> usize {
        self.sigma.nrows()
    }
}

fn centered_cov(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let means = linalg::column_means(x);
    let xc = x - &means.view().insert_axis(Axis(0));
    xc.t().dot(&xc) / n
}

/// Sample covariance of X, or of the PCSS residual X - S_hat.
pub fn covariance_from_sample(x: &Array2<f64>) -> CovarianceEstimate {
    CovarianceEstimate {
        sigma: centered_cov(x),
        source: CovSource::SampleCov,
    }
}

pub fn covariance_from_residual(x: &Array2<f64>, s_hat: &Array2<f64>) -> Result<CovarianceEstimate> {
    if x.dim() != s_hat.dim() {
        return Err(Error::shape("X and S_hat shapes disagree"));
    }
    let resid = x - s_hat;
    Ok(CovarianceEstimate {
        sigma: centered_cov(&resid),
        source: CovSource::PcssResidualCov,
    })
}

const RIDGE_SCALE: f64 = 1e-8;
const COND_VAR_FLOOR: f64 = 1e-12;

/// Conditional variance of node `j` given `parents` via the Schur
/// complement, with a small ridge on near-singular parent blocks.
pub fn conditional_variance(
    target: usize,
    parents: &[usize],
    cov: &CovarianceEstimate,
) -> Result<f64> {
    let sigma = &cov.sigma;
    if target >= sigma.nrows() {
        return Err(Error::invalid(format!("target {target} out of range")));
    }
    if parents.is_empty() {
        return Ok(sigma[(target, target)]);
    }
    let q = parents.len();
    let mut spp = DMatrix::zeros(q, q);
    let mut spj = DVector::zeros(q);
    for (a, &pa) in parents.iter().enumerate() {
        for (b, &pb) in parents.iter().enumerate() {
            spp[(a, b)] = sigma[(pa, pb)];
        }
        spj[a] = sigma[(pa, target)];
    }
    let trace: f64 = (0..q).map(|i| spp[(i, i)]).sum();
    let ridge = RIDGE_SCALE * trace / q as f64;
    for i in 0..q {
        spp[(i, i)] += ridge;
    }
    let lu = spp.lu();
    let solved = lu
        .solve(&spj)
        .ok_or_else(|| Error::SingularSystem("parent covariance block solve failed".into()))?;
    Ok(sigma[(target, target)] - spj.dot(&solved))
}

/// BIC(x_j, P, Sigma) = -(N/2) log(2 pi sigma^2_{j|P}) - N/2 - .5 log(N)(|P| + 2)
pub fn bic_score(
    target: usize,
    parents: &[usize],
    cov: &CovarianceEstimate,
    n: usize,
) -> Result<ScoreValue> {
    if parents.contains(&target) {
        return Err(Error::invalid("target must not be in its own parent set"));
    }
    let cond_var = conditional_variance(target, parents, cov)?;
    if cond_var <= COND_VAR_FLOOR {
        return Err(Error::SingularConditioning { value: cond_var });
    }
    let nf = n as f64;
    let log_score = -(nf / 2.0) * (2.0 * std::f64::consts::PI * cond_var).ln()
        - nf / 2.0
        - 0.5 * nf.ln() * (parents.len() as f64 + 2.0);
    Ok(ScoreValue {
        log_score,
        fitted_hypers: None,
        diagnostics: ScoreDiagnostics::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn cov(sigma: Array2<f64>) -> CovarianceEstimate {
        CovarianceEstimate {
            sigma,
            source: CovSource::SampleCov,
        }
    }

    #[test]
    fn empty_parent_set_hand_value() {
        let c = cov(array![[1.0]]);
        let v = bic_score(0, &[], &c, 100).unwrap();
        let expect = -50.0 * (2.0 * std::f64::consts::PI).ln() - 50.0 - 0.5 * 100f64.ln() * 2.0;
        assert_abs_diff_eq!(v.log_score, expect, epsilon = 1e-10);
        // ~= -146.5
        assert_abs_diff_eq!(v.log_score, -146.499, epsilon = 0.001);
    }

    #[test]
    fn two_variable_hand_value() {
        let c = cov(array![[1.0, 0.8], [0.8, 1.0]]);
        let v = bic_score(1, &[0], &c, 50).unwrap();
        // the documented ridge on Sigma_PP enters the hand value
        let sigma2 = 1.0 - 0.64 / (1.0 + 1e-8);
        let expect = -25.0 * (2.0 * std::f64::consts::PI * sigma2).ln() - 25.0 - 0.5 * 50f64.ln() * 3.0;
        assert_abs_diff_eq!(v.log_score, expect, epsilon = 1e-10);
    }

    #[test]
    fn identity_covariance_penalty_only() {
        let c = cov(Array2::eye(5));
        let mut prev = f64::INFINITY;
        for size in 0..4usize {
            let parents: Vec<usize> = (1..=size).collect();
            let v = bic_score(0, &parents, &c, 200).unwrap();
            assert!(v.log_score < prev, "penalty not strictly decreasing");
            // conditional variance stays 1, so consecutive scores differ by
            // exactly the penalty increment
            if prev.is_finite() {
                assert_abs_diff_eq!(prev - v.log_score, 0.5 * 200f64.ln(), epsilon = 1e-6);
            }
            prev = v.log_score;
        }
    }

    #[test]
    fn degenerate_conditioning_rejected() {
        // a constant target column leaves zero conditional variance even
        // after the ridge
        let c = cov(array![[1.0, 0.0], [0.0, 0.0]]);
        assert!(matches!(
            bic_score(1, &[0], &c, 10),
            Err(Error::SingularConditioning { .. })
        ));
    }

    #[test]
    fn residual_cov_with_zero_s_hat_equals_sample_cov() {
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]];
        let zero = Array2::zeros((3, 2));
        let a = covariance_from_sample(&x);
        let b = covariance_from_residual(&x, &zero).unwrap();
        assert_eq!(a.sigma, b.sigma);
        // S_hat = X leaves the zero matrix
        let c = covariance_from_residual(&x, &x).unwrap();
        assert!(c.sigma.iter().all(|&v| v == 0.0));
    }
}

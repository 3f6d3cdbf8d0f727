//! Parent-set score functions: Gaussian BIC over pluggable covariance
//! estimates, and GP marginal-likelihood scores that optionally condition on
//! estimated confounder sufficient statistics.

pub mod bic;
pub mod gp;

use std::collections::HashMap;
use std::sync::Mutex;

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::linalg;

pub use bic::{bic_score, conditional_variance, CovSource, CovarianceEstimate};
pub use gp::{
    additive_kernel_matrix, fit_hypers, gp_log_marginal, GpFitSettings, GpHyperParams, GpProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    VanillaBic,
    PcssBic,
    Cam,
    CamObs,
    DecamFound,
}

impl ScoreKind {
    pub fn is_gp(self) -> bool {
        matches!(self, ScoreKind::Cam | ScoreKind::CamObs | ScoreKind::DecamFound)
    }

    pub fn needs_s_hat(self) -> bool {
        matches!(self, ScoreKind::PcssBic | ScoreKind::DecamFound)
    }

    pub fn needs_h(self) -> bool {
        matches!(self, ScoreKind::CamObs)
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::VanillaBic => "vanilla_bic",
            ScoreKind::PcssBic => "pcss_bic",
            ScoreKind::Cam => "cam",
            ScoreKind::CamObs => "cam_obs",
            ScoreKind::DecamFound => "decamfound",
        }
    }
}

impl std::str::FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ScoreKind> {
        match s {
            "vanilla_bic" => Ok(ScoreKind::VanillaBic),
            "pcss_bic" => Ok(ScoreKind::PcssBic),
            "cam" => Ok(ScoreKind::Cam),
            "cam_obs" => Ok(ScoreKind::CamObs),
            "decamfound" => Ok(ScoreKind::DecamFound),
            other => Err(Error::invalid(format!("unknown score kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreDiagnostics {
    pub optimizer_iters: usize,
    pub final_grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreValue {
    pub log_score: f64,
    pub fitted_hypers: Option<GpHyperParams>,
    pub diagnostics: ScoreDiagnostics,
}

/// One entry of the CLI's parent-set request list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub target: usize,
    pub parents: Vec<usize>,
}

/// Covariance matrix appropriate for a BIC score kind.
pub fn covariance_for(
    kind: ScoreKind,
    x: &Array2<f64>,
    s_hat: Option<&Array2<f64>>,
) -> Result<CovarianceEstimate> {
    match kind {
        ScoreKind::VanillaBic => Ok(bic::covariance_from_sample(x)),
        ScoreKind::PcssBic => {
            let s = s_hat.ok_or_else(|| Error::invalid("PcssBic requires S_hat"))?;
            bic::covariance_from_residual(x, s)
        }
        other => Err(Error::invalid(format!(
            "covariance_for only applies to BIC kinds, got {:?}",
            other
        ))),
    }
}

const STD_FLOOR: f64 = 1e-12;

/// z-score each column with training statistics, dropping constant columns.
/// Returns None when no informative column remains.
fn standardized_block(raw: &Array2<f64>) -> Option<Array2<f64>> {
    let n = raw.nrows();
    let mut cols: Vec<Array1<f64>> = Vec::new();
    for col in raw.columns() {
        let v: Vec<f64> = col.to_vec();
        let mean = linalg::mean(&v);
        let sd = linalg::variance(&v).sqrt();
        if sd < STD_FLOOR {
            continue;
        }
        cols.push(Array1::from_iter(v.iter().map(|x| (x - mean) / sd)));
    }
    if cols.is_empty() {
        return None;
    }
    let mut out = Array2::zeros((n, cols.len()));
    for (c, col) in cols.iter().enumerate() {
        out.column_mut(c).assign(col);
    }
    Some(out)
}

fn column(x: &Array2<f64>, j: usize) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros((n, 1));
    out.column_mut(0).assign(&x.column(j));
    out
}

fn columns(x: &Array2<f64>, js: &[usize]) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros((n, js.len()));
    for (c, &j) in js.iter().enumerate() {
        out.column_mut(c).assign(&x.column(j));
    }
    out
}

/// GP parent-set score for the CAM-family kinds.
///
/// Targets and input blocks per kind:
/// - `Cam`: y = X_j, one block per observed parent.
/// - `CamObs`: y = X_j, parent blocks plus one block of observed confounders.
/// - `DecamFound`: y = X_j - S_hat_j, parent blocks plus one block of the
///   parent-restricted sufficient statistics (dropped when P is empty).
pub fn gp_parent_score(
    kind: ScoreKind,
    target: usize,
    parents: &[usize],
    x: &Array2<f64>,
    s_hat: Option<&Array2<f64>>,
    h: Option<&Array2<f64>>,
    settings: &GpFitSettings,
) -> Result<ScoreValue> {
    if !kind.is_gp() {
        return Err(Error::invalid("gp_parent_score requires a GP score kind"));
    }
    if parents.contains(&target) {
        return Err(Error::invalid("target must not be in its own parent set"));
    }
    let n = x.nrows();

    let raw_y: Array1<f64> = match kind {
        ScoreKind::DecamFound => {
            let s = s_hat.ok_or_else(|| Error::invalid("DecamFound requires S_hat"))?;
            if s.dim() != x.dim() {
                return Err(Error::shape("S_hat shape disagrees with X"));
            }
            Array1::from_iter((0..n).map(|r| x[(r, target)] - s[(r, target)]))
        }
        _ => x.column(target).to_owned(),
    };
    let y_mean = raw_y.sum() / n as f64;
    let y = raw_y.map(|v| v - y_mean);

    let mut blocks: Vec<Array2<f64>> = Vec::new();
    for &i in parents {
        if let Some(b) = standardized_block(&column(x, i)) {
            blocks.push(b);
        }
    }
    match kind {
        ScoreKind::DecamFound => {
            if !parents.is_empty() {
                let s = s_hat.unwrap();
                if let Some(b) = standardized_block(&columns(s, parents)) {
                    blocks.push(b);
                }
            }
        }
        ScoreKind::CamObs => {
            let hm = h.ok_or_else(|| Error::invalid("CamObs requires H"))?;
            if hm.nrows() != n {
                return Err(Error::shape("H row count disagrees with X"));
            }
            if hm.ncols() > 0 {
                if let Some(b) = standardized_block(hm) {
                    blocks.push(b);
                }
            }
        }
        _ => {}
    }

    let var_y = linalg::variance(y.as_slice().unwrap());
    let init = GpHyperParams::init(blocks.len(), (0.5 * var_y).max(1e-4));
    let (_, score) = gp::fit_hypers(&y, &blocks, &init, settings)?;
    Ok(score)
}

/// Softmax over candidate scores with max-subtraction.
pub fn posterior_over_candidates(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::invalid("no candidate scores"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteInput("candidate scores".into()));
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Pairwise log-odds `score_i - score_ref`.
pub fn log_odds(scores: &[f64], reference: f64) -> Vec<f64> {
    scores.iter().map(|s| s - reference).collect()
}

/// Caching scorer for one (kind, dataset) pairing. Per-node results are
/// memoized by parent set so repeated parent sets across candidate DAGs are
/// fitted once; GP fits are deterministic, so insertion order cannot change
/// any value.
pub struct Scorer<'a> {
    kind: ScoreKind,
    x: &'a Array2<f64>,
    s_hat: Option<&'a Array2<f64>>,
    h: Option<&'a Array2<f64>>,
    cov: Option<CovarianceEstimate>,
    settings: GpFitSettings,
    cache: Mutex<HashMap<(usize, Vec<usize>), f64>>,
}

impl<'a> Scorer<'a> {
    pub fn new(
        kind: ScoreKind,
        x: &'a Array2<f64>,
        s_hat: Option<&'a Array2<f64>>,
        h: Option<&'a Array2<f64>>,
    ) -> Result<Scorer<'a>> {
        if kind.needs_s_hat() && s_hat.is_none() {
            return Err(Error::invalid(format!("{} requires S_hat", kind.name())));
        }
        if kind.needs_h() && h.is_none() {
            return Err(Error::invalid(format!("{} requires H", kind.name())));
        }
        let cov = if kind.is_gp() {
            None
        } else {
            Some(covariance_for(kind, x, s_hat)?)
        };
        Ok(Scorer {
            kind,
            x,
            s_hat,
            h,
            cov,
            settings: GpFitSettings::default(),
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_settings(mut self, settings: GpFitSettings) -> Self {
        self.settings = settings;
        self
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn score_parent_set(&self, target: usize, parents: &[usize]) -> Result<ScoreValue> {
        match self.kind {
            ScoreKind::VanillaBic | ScoreKind::PcssBic => bic::bic_score(
                target,
                parents,
                self.cov.as_ref().expect("covariance precomputed"),
                self.x.nrows(),
            ),
            _ => gp_parent_score(
                self.kind,
                target,
                parents,
                self.x,
                self.s_hat,
                self.h,
                &self.settings,
            ),
        }
    }

    /// Memoized scalar score for one node's parent set.
    pub fn score_cached(&self, target: usize, parents: &[usize]) -> Result<f64> {
        let mut key_parents = parents.to_vec();
        key_parents.sort_unstable();
        let key = (target, key_parents);
        if let Some(&v) = self.cache.lock().unwrap().get(&key) {
            return Ok(v);
        }
        let value = self.score_parent_set(target, &key.1)?.log_score;
        self.cache.lock().unwrap().insert(key, value);
        Ok(value)
    }

    /// Decomposable whole-DAG score: the sum of per-node parent-set scores,
    /// evaluated node-parallel against the shared cache.
    pub fn score_dag(&self, dag: &Dag) -> Result<f64> {
        let per_node: Result<Vec<f64>> = (0..dag.p())
            .into_par_iter()
            .map(|j| self.score_cached(j, dag.parents(j)))
            .collect();
        Ok(per_node?.into_iter().sum())
    }
}

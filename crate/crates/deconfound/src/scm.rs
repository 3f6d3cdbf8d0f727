//! Synthetic data generation from (non-)linear causal additive models with
//! pervasive latent confounders.
//!
//! Every node is normalized to zero mean and unit variance, with fixed
//! noise / confounding / signal variance shares. Normalization constants are
//! found inductively in topological order from a Monte-Carlo population that
//! is extended one node at a time, so each node's constants are estimated
//! against the marginal distribution of its already-normalized ancestors.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ConfounderAttachment, Dag};
use crate::linalg;

const VAR_FLOOR: f64 = 1e-12;

/// Univariate trend applied along one edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrendKind {
    Linear,
    Seasonal,
    Quadratic,
}

impl TrendKind {
    pub fn base(self, x: f64) -> f64 {
        match self {
            TrendKind::Linear => x,
            TrendKind::Seasonal => (std::f64::consts::PI * x).sin(),
            TrendKind::Quadratic => x * x,
        }
    }
}

/// A sampled edge function `theta * base(x)`, centered at generation time by
/// `offset` (the Monte-Carlo mean of `base` under the parent's marginal) so
/// the zero-mean node constraint survives quadratic trends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub kind: TrendKind,
    pub weight: f64,
    pub offset: f64,
}

impl Trend {
    pub fn eval(&self, x: f64) -> f64 {
        self.weight * (self.kind.base(x) - self.offset)
    }
}

/// Generation parameters. `sigma_signal_sq` is implied:
/// `1 - sigma_noise_sq - sigma_h_sq`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmConfig {
    pub p: usize,
    #[serde(alias = "K")]
    pub k: usize,
    pub sigma_noise_sq: f64,
    pub sigma_h_sq: f64,
    #[serde(default)]
    pub linear_only: bool,
    #[serde(default)]
    pub exclude_linear_trend: bool,
    #[serde(default = "default_attach_prob")]
    pub attach_prob: f64,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

fn default_attach_prob() -> f64 {
    0.7
}

fn default_mc_samples() -> usize {
    10_000
}

impl ScmConfig {
    pub fn sigma_signal_sq(&self) -> f64 {
        1.0 - self.sigma_noise_sq - self.sigma_h_sq
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("p must be at least 1"));
        }
        if self.sigma_noise_sq < 0.0 || self.sigma_h_sq < 0.0 {
            return Err(Error::invalid("variance shares must be non-negative"));
        }
        if self.sigma_noise_sq + self.sigma_h_sq > 1.0 + 1e-12 {
            return Err(Error::invalid(
                "sigma_noise_sq + sigma_h_sq must not exceed 1",
            ));
        }
        if self.linear_only && self.exclude_linear_trend {
            return Err(Error::invalid(
                "linear_only and exclude_linear_trend are mutually exclusive",
            ));
        }
        if !(0.0..=1.0).contains(&self.attach_prob) {
            return Err(Error::invalid("attach_prob must lie in [0, 1]"));
        }
        if self.mc_samples < 2 {
            return Err(Error::invalid("mc_samples must be at least 2"));
        }
        Ok(())
    }
}

/// Structural classification of a node, mirroring the generator's edge cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Source,
    ObservedParentsOnly,
    ConfounderParentsOnly,
    BothParentKinds,
}

/// A fully normalized SCM: graph, trends, and per-node constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScmInstance {
    pub config: ScmConfig,
    pub dag: Dag,
    pub attachment: ConfounderAttachment,
    /// Per node, trends aligned with `dag.parents(j)`.
    pub observed_trends: Vec<Vec<Trend>>,
    /// Per node, `(confounder_index, trend)` pairs sorted by confounder index.
    pub confounder_trends: Vec<Vec<(usize, Trend)>>,
    pub c_par: Vec<f64>,
    pub c_confound: Vec<f64>,
    pub node_noise_var: Vec<f64>,
}

impl ScmInstance {
    pub fn p(&self) -> usize {
        self.config.p
    }

    pub fn node_class(&self, j: usize) -> NodeClass {
        let has_obs = !self.dag.parents(j).is_empty();
        let has_conf = !self.confounder_trends[j].is_empty();
        match (has_obs, has_conf) {
            (false, false) => NodeClass::Source,
            (true, false) => NodeClass::ObservedParentsOnly,
            (false, true) => NodeClass::ConfounderParentsOnly,
            (true, true) => NodeClass::BothParentKinds,
        }
    }

    /// Nodes whose only parents are confounders; their sufficient statistic
    /// is computable in closed form even for non-linear trends.
    pub fn confounder_only_nodes(&self) -> Vec<usize> {
        (0..self.p())
            .filter(|&j| self.node_class(j) == NodeClass::ConfounderParentsOnly)
            .collect()
    }

    /// Evaluate the (normalized) observed-parent contribution for node `j`.
    fn observed_component(&self, j: usize, x_row: impl Fn(usize) -> f64) -> f64 {
        let parents = self.dag.parents(j);
        let mut sum = 0.0;
        for (idx, &i) in parents.iter().enumerate() {
            sum += self.observed_trends[j][idx].eval(x_row(i));
        }
        self.c_par[j] * sum
    }

    /// Evaluate the (normalized) confounder contribution for node `j`.
    fn confounder_component(&self, j: usize, h_row: impl Fn(usize) -> f64) -> f64 {
        let mut sum = 0.0;
        for &(k, trend) in &self.confounder_trends[j] {
            sum += trend.eval(h_row(k));
        }
        self.c_confound[j] * sum
    }

    /// Extract the equivalent linear SCM when every trend is linear.
    pub fn to_linear(&self) -> Option<LinearScm> {
        let all_linear = self
            .observed_trends
            .iter()
            .flatten()
            .map(|t| t.kind)
            .chain(
                self.confounder_trends
                    .iter()
                    .flatten()
                    .map(|(_, t)| t.kind),
            )
            .all(|k| k == TrendKind::Linear);
        if !all_linear {
            return None;
        }
        let p = self.p();
        let k = self.attachment.k();
        let mut b = Array2::zeros((p, p));
        let mut theta = Array2::zeros((p, k));
        for j in 0..p {
            for (idx, &i) in self.dag.parents(j).iter().enumerate() {
                b[(j, i)] = self.c_par[j] * self.observed_trends[j][idx].weight;
            }
            for &(kk, trend) in &self.confounder_trends[j] {
                theta[(j, kk)] = self.c_confound[j] * trend.weight;
            }
        }
        Some(LinearScm {
            b,
            theta,
            noise_vars: self.node_noise_var.clone(),
        })
    }
}

/// Linear special case `x = Bx + Theta h + eps` with `B[(j, i)]` the weight
/// of parent `i` in node `j`.
#[derive(Debug, Clone)]
pub struct LinearScm {
    pub b: Array2<f64>,
    pub theta: Array2<f64>,
    pub noise_vars: Vec<f64>,
}

/// One generated dataset; rows of `x`, `h`, and `s_true` are aligned draws.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub h: Option<Array2<f64>>,
    pub s_true: Option<Array2<f64>>,
    /// Which columns of `s_true` hold an exact sufficient statistic.
    pub s_known: Vec<bool>,
    pub config: ScmConfig,
    pub seed: u64,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Column indices with a known sufficient statistic.
    pub fn known_s_columns(&self) -> Vec<usize> {
        self.s_known
            .iter()
            .enumerate()
            .filter_map(|(j, &k)| k.then_some(j))
            .collect()
    }
}

fn sample_weight(rng: &mut ChaCha8Rng) -> f64 {
    // Uniform([-1, -0.25] U [0.25, 1]) as sign flip times Uniform[0.25, 1]
    let magnitude = 0.25 + 0.75 * rng.random::<f64>();
    if rng.random::<bool>() {
        magnitude
    } else {
        -magnitude
    }
}

fn sample_kind(rng: &mut ChaCha8Rng, config: &ScmConfig) -> TrendKind {
    if config.linear_only {
        return TrendKind::Linear;
    }
    let kinds: &[TrendKind] = if config.exclude_linear_trend {
        &[TrendKind::Seasonal, TrendKind::Quadratic]
    } else {
        &[TrendKind::Linear, TrendKind::Seasonal, TrendKind::Quadratic]
    };
    kinds[rng.random_range(0..kinds.len())]
}

/// Sample trends and solve the normalization constants for every node.
pub fn sample_instance(
    config: &ScmConfig,
    dag: &Dag,
    attachment: &ConfounderAttachment,
    rng_seed: u64,
) -> Result<ScmInstance> {
    config.validate()?;
    if dag.p() != config.p {
        return Err(Error::shape("dag node count disagrees with config.p"));
    }
    if attachment.p() != config.p || attachment.k() != config.k {
        return Err(Error::shape("attachment dimensions disagree with config"));
    }
    let p = config.p;
    let mc = config.mc_samples;
    let sigma_noise = config.sigma_noise_sq;
    let sigma_h = config.sigma_h_sq;
    let sigma_signal = config.sigma_signal_sq();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    // Phase 1: sample trend kinds and weights for every edge, in topological
    // node order for determinism. Offsets are filled in during phase 3.
    let mut observed_trends: Vec<Vec<Trend>> = vec![Vec::new(); p];
    let mut confounder_trends: Vec<Vec<(usize, Trend)>> = vec![Vec::new(); p];
    for &j in dag.order() {
        for _ in dag.parents(j) {
            let kind = sample_kind(&mut rng, config);
            let weight = sample_weight(&mut rng);
            observed_trends[j].push(Trend { kind, weight, offset: 0.0 });
        }
        for k in attachment.causes_of(j) {
            let kind = sample_kind(&mut rng, config);
            let weight = sample_weight(&mut rng);
            confounder_trends[j].push((k, Trend { kind, weight, offset: 0.0 }));
        }
    }

    // Phase 2: Monte-Carlo population of confounders.
    let h_mc = draw_standard_normal(&mut rng, mc, config.k);

    // Phase 3: walk nodes in topological order, estimating variances from the
    // population, solving the constants, then extending the population with
    // the finished node.
    let mut x_mc = Array2::<f64>::zeros((mc, p));
    let mut c_par = vec![0.0; p];
    let mut c_confound = vec![0.0; p];
    let mut node_noise_var = vec![0.0; p];

    for &j in dag.order() {
        // raw observed-parent sums, with per-edge centering offsets
        let parents = dag.parents(j).to_vec();
        let mut obs_sum = vec![0.0; mc];
        for (idx, &i) in parents.iter().enumerate() {
            let trend = &mut observed_trends[j][idx];
            let base: Vec<f64> = (0..mc).map(|n| trend.kind.base(x_mc[(n, i)])).collect();
            trend.offset = if trend.kind == TrendKind::Linear {
                0.0
            } else {
                linalg::mean(&base)
            };
            for n in 0..mc {
                obs_sum[n] += trend.weight * (base[n] - trend.offset);
            }
        }
        let mut conf_sum = vec![0.0; mc];
        for (k, trend) in confounder_trends[j].iter_mut() {
            let base: Vec<f64> = (0..mc).map(|n| trend.kind.base(h_mc[(n, *k)])).collect();
            trend.offset = if trend.kind == TrendKind::Linear {
                0.0
            } else {
                linalg::mean(&base)
            };
            for n in 0..mc {
                conf_sum[n] += trend.weight * (base[n] - trend.offset);
            }
        }

        let has_obs = !parents.is_empty();
        let has_conf = !confounder_trends[j].is_empty();

        let (cp, cc, noise_var) = match (has_obs, has_conf) {
            (false, false) => (0.0, 0.0, 1.0),
            (true, false) => {
                // signal budget absorbs the unused confounding share
                let budget = sigma_signal + sigma_h;
                let var_o = linalg::variance(&obs_sum);
                if var_o < VAR_FLOOR {
                    return Err(Error::DegenerateVariance { node: j, value: var_o });
                }
                ((budget / var_o).sqrt(), 0.0, sigma_noise)
            }
            (false, true) => {
                let cc = solve_confound_scale(j, &conf_sum, sigma_h)?;
                (0.0, cc, sigma_noise + sigma_signal)
            }
            (true, true) => {
                let cc = solve_confound_scale(j, &conf_sum, sigma_h)?;
                let var_o = linalg::variance(&obs_sum);
                if var_o < VAR_FLOOR {
                    return Err(Error::DegenerateVariance { node: j, value: var_o });
                }
                let cov_oc = linalg::covariance(&obs_sum, &conf_sum);
                let var_c = linalg::variance(&conf_sum);
                // Var(cp*O + cc*C) = 1 - sigma_noise, quadratic in cp
                let target = 1.0 - sigma_noise;
                let b = 2.0 * cc * cov_oc;
                let c = cc * cc * var_c - target;
                let disc = (b * b - 4.0 * var_o * c).max(0.0);
                let cp = (-b + disc.sqrt()) / (2.0 * var_o);
                (cp.max(0.0), cc, sigma_noise)
            }
        };
        c_par[j] = cp;
        c_confound[j] = cc;
        node_noise_var[j] = noise_var;

        // extend the population with the finished node
        let noise_sd = noise_var.sqrt();
        for n in 0..mc {
            let z: f64 = StandardNormal.sample(&mut rng);
            let eps = noise_sd * z;
            x_mc[(n, j)] = cp * obs_sum[n] + cc * conf_sum[n] + eps;
        }
    }

    Ok(ScmInstance {
        config: config.clone(),
        dag: dag.clone(),
        attachment: attachment.clone(),
        observed_trends,
        confounder_trends,
        c_par,
        c_confound,
        node_noise_var,
    })
}

fn solve_confound_scale(node: usize, conf_sum: &[f64], sigma_h: f64) -> Result<f64> {
    if sigma_h == 0.0 {
        return Ok(0.0);
    }
    let var_c = linalg::variance(conf_sum);
    if var_c < VAR_FLOOR {
        return Err(Error::DegenerateVariance { node, value: var_c });
    }
    Ok((sigma_h / var_c).sqrt())
}

fn draw_standard_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows, cols));
    for n in 0..rows {
        for c in 0..cols {
            out[(n, c)] = StandardNormal.sample(rng);
        }
    }
    out
}

/// Draw `n` i.i.d. samples from a normalized instance.
///
/// `s_true` columns are populated wherever the sufficient statistic is
/// computable: every column for a linear instance (via [`linear_suffstats`]),
/// and columns of source or confounder-only-parent nodes otherwise.
pub fn sample_dataset(instance: &ScmInstance, n: usize, rng_seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    let p = instance.p();
    let k = instance.attachment.k();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let h = draw_standard_normal(&mut rng, n, k);
    let mut x = Array2::<f64>::zeros((n, p));
    for &j in instance.dag.order().iter() {
        let noise_sd = instance.node_noise_var[j].sqrt();
        for row in 0..n {
            let obs = instance.observed_component(j, |i| x[(row, i)]);
            let conf = instance.confounder_component(j, |kk| h[(row, kk)]);
            let z: f64 = StandardNormal.sample(&mut rng);
            let eps = noise_sd * z;
            x[(row, j)] = obs + conf + eps;
        }
    }

    // sufficient statistics where computable
    let mut s_true = Array2::<f64>::zeros((n, p));
    let mut s_known = vec![false; p];
    if let Some(linear) = instance.to_linear() {
        s_true = linear_suffstats(&linear, &h)?;
        s_known = vec![true; p];
    } else {
        for j in 0..p {
            match instance.node_class(j) {
                NodeClass::Source => {
                    s_known[j] = true; // s_j = E[x_j] = 0
                }
                NodeClass::ConfounderParentsOnly => {
                    for row in 0..n {
                        s_true[(row, j)] =
                            instance.confounder_component(j, |kk| h[(row, kk)]);
                    }
                    s_known[j] = true;
                }
                _ => {}
            }
        }
    }

    Ok(Dataset {
        x,
        h: if k > 0 { Some(h) } else { None },
        s_true: Some(s_true),
        s_known,
        config: instance.config.clone(),
        seed: rng_seed,
    })
}

/// Analytic sufficient statistics for a linear SCM:
/// row `n` of the result is `(I - B)^{-1} Theta h^{(n)}`.
pub fn linear_suffstats(scm: &LinearScm, h: &Array2<f64>) -> Result<Array2<f64>> {
    let p = scm.b.nrows();
    if scm.b.ncols() != p {
        return Err(Error::shape("B must be square"));
    }
    if scm.theta.nrows() != p || scm.theta.ncols() != h.ncols() {
        return Err(Error::shape("Theta dimensions disagree with B and H"));
    }
    let i_minus_b = DMatrix::from_fn(p, p, |r, c| {
        let delta = if r == c { 1.0 } else { 0.0 };
        delta - scm.b[(r, c)]
    });
    let lu = i_minus_b.lu();
    let n = h.nrows();
    let k = h.ncols();
    // columns of M = (I - B)^{-1} Theta, then S = H M^T
    let mut m = DMatrix::zeros(p, k);
    for col in 0..k {
        let rhs = DVector::from_fn(p, |r, _| scm.theta[(r, col)]);
        let solved = lu
            .solve(&rhs)
            .ok_or_else(|| Error::SingularSystem("(I - B) solve failed".into()))?;
        m.set_column(col, &solved);
    }
    let mut s = Array2::zeros((n, p));
    for row in 0..n {
        for j in 0..p {
            let mut acc = 0.0;
            for kk in 0..k {
                acc += m[(j, kk)] * h[(row, kk)];
            }
            s[(row, j)] = acc;
        }
    }
    Ok(s)
}

/// Elementwise residual `X - S`.
pub fn deconfound_residuals(x: &Array2<f64>, s: &Array2<f64>) -> Result<Array2<f64>> {
    if x.dim() != s.dim() {
        return Err(Error::shape(format!(
            "X is {:?} but S is {:?}",
            x.dim(),
            s.dim()
        )));
    }
    Ok(x - s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph;
    use approx::assert_abs_diff_eq;

    fn config(p: usize, k: usize, sigma_h: f64) -> ScmConfig {
        ScmConfig {
            p,
            k,
            sigma_noise_sq: 0.2,
            sigma_h_sq: sigma_h,
            linear_only: true,
            exclude_linear_trend: false,
            attach_prob: 0.7,
            mc_samples: 10_000,
        }
    }

    #[test]
    fn single_source_node() {
        let cfg = config(1, 0, 0.0);
        let dag = Dag::empty(1);
        let att = ConfounderAttachment::none(0, 1);
        let inst = sample_instance(&cfg, &dag, &att, 0).unwrap();
        assert_eq!(inst.c_par[0], 0.0);
        assert_eq!(inst.c_confound[0], 0.0);
        assert_eq!(inst.node_noise_var[0], 1.0);

        let ds = sample_dataset(&inst, 3, 1).unwrap();
        assert_eq!(ds.x.nrows(), 3);
        // no confounding: s_j = E[x_j] = 0
        let s = ds.s_true.unwrap();
        assert!(s.iter().all(|&v| v == 0.0));
        assert_eq!(ds.s_known, vec![true]);
    }

    #[test]
    fn two_node_linear_chain_closed_form() {
        // no confounders: edge weight must satisfy (c_par * theta)^2 = 0.8
        let cfg = config(2, 0, 0.0);
        let dag = Dag::new(2, vec![vec![], vec![0]]).unwrap();
        let att = ConfounderAttachment::none(0, 2);
        let inst = sample_instance(&cfg, &dag, &att, 3).unwrap();
        let eff = inst.c_par[1] * inst.observed_trends[1][0].weight;
        // Var(theta * x1) = theta^2 for unit-variance x1; MC estimate of
        // Var(x1) carries ~1/sqrt(mc) error
        assert_abs_diff_eq!(eff * eff, 0.8, epsilon = 0.05);

        let ds = sample_dataset(&inst, 10_000, 4).unwrap();
        let vars = linalg::column_vars(&ds.x);
        assert_abs_diff_eq!(vars[1], 1.0, epsilon = 0.05);
    }

    #[test]
    fn normalization_with_both_parent_kinds() {
        let mut cfg = config(12, 1, 0.3);
        cfg.linear_only = false;
        let dag = graph::sample_erdos_renyi(12, 3.0, 5).unwrap();
        let att = graph::sample_confounder_attachment(12, 1, 0.7, 6).unwrap();
        let inst = sample_instance(&cfg, &dag, &att, 7).unwrap();
        let ds = sample_dataset(&inst, 10_000, 8).unwrap();
        let h = ds.h.as_ref().unwrap();
        let vars = linalg::column_vars(&ds.x);
        let means = linalg::column_means(&ds.x);
        for j in 0..12 {
            assert_abs_diff_eq!(means[j], 0.0, epsilon = 0.05);
            assert_abs_diff_eq!(vars[j], 1.0, epsilon = 0.06);
            if inst.node_class(j) == NodeClass::BothParentKinds {
                let conf: Vec<f64> = (0..ds.n())
                    .map(|row| inst.confounder_component(j, |kk| h[(row, kk)]))
                    .collect();
                assert_abs_diff_eq!(linalg::variance(&conf), 0.3, epsilon = 0.05);
            }
        }
    }

    #[test]
    fn linear_suffstats_hand_expansion() {
        // p=2, B_{21}=b, Theta=(t1,t2)^T, K=1: s1 = t1 h, s2 = b t1 h + t2 h
        let b_w = 0.6;
        let (t1, t2) = (0.3, -0.4);
        let mut b = Array2::zeros((2, 2));
        b[(1, 0)] = b_w;
        let mut theta = Array2::zeros((2, 1));
        theta[(0, 0)] = t1;
        theta[(1, 0)] = t2;
        let scm = LinearScm { b, theta, noise_vars: vec![0.2, 0.2] };
        let h = Array2::from_shape_vec((2, 1), vec![1.0, -2.0]).unwrap();
        let s = linear_suffstats(&scm, &h).unwrap();
        for (row, &hv) in [1.0, -2.0].iter().enumerate() {
            assert_abs_diff_eq!(s[(row, 0)], t1 * hv, epsilon = 1e-12);
            assert_abs_diff_eq!(s[(row, 1)], (b_w * t1 + t2) * hv, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_suffstats_degenerate_cases() {
        let h = Array2::from_shape_vec((3, 2), vec![1.0, 2.0, -1.0, 0.5, 0.0, 3.0]).unwrap();
        // B = 0 -> S = H Theta^T
        let theta = Array2::from_shape_vec((2, 2), vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let scm = LinearScm {
            b: Array2::zeros((2, 2)),
            theta: theta.clone(),
            noise_vars: vec![1.0; 2],
        };
        let s = linear_suffstats(&scm, &h).unwrap();
        for row in 0..3 {
            for j in 0..2 {
                let expect = theta[(j, 0)] * h[(row, 0)] + theta[(j, 1)] * h[(row, 1)];
                assert_abs_diff_eq!(s[(row, j)], expect, epsilon = 1e-12);
            }
        }
        // Theta = 0 -> S = 0
        let scm0 = LinearScm {
            b: Array2::zeros((2, 2)),
            theta: Array2::zeros((2, 2)),
            noise_vars: vec![1.0; 2],
        };
        let s0 = linear_suffstats(&scm0, &h).unwrap();
        assert!(s0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dataset_stores_linear_oracle_suffstats() {
        let cfg = config(6, 1, 0.4);
        let dag = graph::sample_erdos_renyi(6, 2.0, 10).unwrap();
        let att = graph::sample_confounder_attachment(6, 1, 0.7, 11).unwrap();
        let inst = sample_instance(&cfg, &dag, &att, 12).unwrap();
        let ds = sample_dataset(&inst, 50, 13).unwrap();
        let linear = inst.to_linear().unwrap();
        let expect = linear_suffstats(&linear, ds.h.as_ref().unwrap()).unwrap();
        let stored = ds.s_true.as_ref().unwrap();
        assert_eq!(stored, &expect);

        // independent check via explicit inverse
        let p = 6;
        let i_minus_b = DMatrix::from_fn(p, p, |r, c| {
            (if r == c { 1.0 } else { 0.0 }) - linear.b[(r, c)]
        });
        let inv = i_minus_b.try_inverse().unwrap();
        let h = ds.h.as_ref().unwrap();
        for row in [0usize, 17, 49] {
            for j in 0..p {
                let mut acc = 0.0;
                for c in 0..p {
                    acc += inv[(j, c)] * linear.theta[(c, 0)] * h[(row, 0)];
                }
                assert_abs_diff_eq!(stored[(row, j)], acc, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn nonlinear_confounder_only_suffstats_direct_eval() {
        let mut cfg = config(1, 1, 0.5);
        cfg.linear_only = false;
        cfg.exclude_linear_trend = true;
        let dag = Dag::empty(1);
        let mut edges = Array2::from_elem((1, 1), true);
        edges[(0, 0)] = true;
        let att = ConfounderAttachment::new(edges);
        let inst = sample_instance(&cfg, &dag, &att, 21).unwrap();
        assert_eq!(inst.node_class(0), NodeClass::ConfounderParentsOnly);
        let ds = sample_dataset(&inst, 20, 22).unwrap();
        let h = ds.h.as_ref().unwrap();
        let s = ds.s_true.as_ref().unwrap();
        let (_, trend) = inst.confounder_trends[0][0];
        for row in 0..20 {
            let expect =
                inst.c_confound[0] * trend.weight * (trend.kind.base(h[(row, 0)]) - trend.offset);
            assert_abs_diff_eq!(s[(row, 0)], expect, epsilon = 1e-12);
        }
        assert_eq!(ds.s_known, vec![true]);
    }

    #[test]
    fn residual_regression_recovers_edge_weight() {
        let cfg = config(2, 1, 0.3);
        let dag = Dag::new(2, vec![vec![], vec![0]]).unwrap();
        let att = ConfounderAttachment::new(Array2::from_elem((1, 2), true));
        let inst = sample_instance(&cfg, &dag, &att, 30).unwrap();
        let ds = sample_dataset(&inst, 5000, 31).unwrap();
        let s = ds.s_true.as_ref().unwrap();
        let resid = deconfound_residuals(&ds.x, s).unwrap();
        // least squares of residual col 1 on residual col 0
        let r0: Vec<f64> = resid.column(0).to_vec();
        let r1: Vec<f64> = resid.column(1).to_vec();
        let beta = linalg::covariance(&r0, &r1) / linalg::variance(&r0);
        let truth = inst.to_linear().unwrap().b[(1, 0)];
        assert_abs_diff_eq!(beta, truth, epsilon = 0.05);
    }

    #[test]
    fn residual_trivial_identities() {
        let x = Array2::from_shape_vec((2, 2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let zeros = Array2::zeros((2, 2));
        assert_eq!(deconfound_residuals(&x, &zeros).unwrap(), x);
        assert!(deconfound_residuals(&x, &x).unwrap().iter().all(|&v| v == 0.0));
        assert!(deconfound_residuals(&x, &Array2::zeros((3, 2))).is_err());
    }

    #[test]
    fn determinism_of_generation() {
        let mut cfg = config(8, 2, 0.3);
        cfg.linear_only = false;
        let dag = graph::sample_erdos_renyi(8, 3.0, 40).unwrap();
        let att = graph::sample_confounder_attachment(8, 2, 0.7, 41).unwrap();
        let a = sample_instance(&cfg, &dag, &att, 42).unwrap();
        let b = sample_instance(&cfg, &dag, &att, 42).unwrap();
        assert_eq!(a.c_par, b.c_par);
        assert_eq!(a.c_confound, b.c_confound);
        let da = sample_dataset(&a, 100, 43).unwrap();
        let db = sample_dataset(&b, 100, 43).unwrap();
        assert_eq!(da.x, db.x);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = config(2, 1, 0.9);
        assert!(cfg.validate().is_err()); // 0.2 + 0.9 > 1
        cfg.sigma_h_sq = 0.3;
        cfg.exclude_linear_trend = true;
        assert!(cfg.validate().is_err()); // conflicts with linear_only
    }
}

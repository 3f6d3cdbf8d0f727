//! DAG representation, Erdős–Rényi generation, and confounder attachment.

use std::collections::BinaryHeap;
use std::cmp::Reverse;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A directed acyclic graph over `p` observed nodes with parent-set access
/// and a cached topological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    p: usize,
    /// For each node, its parent indices sorted ascending.
    parents: Vec<Vec<usize>>,
    /// `order[rank] = node`; every edge points from lower to higher rank.
    order: Vec<usize>,
}

impl Dag {
    /// Build a DAG from parent sets, computing a topological order.
    /// Fails with `CycleDetected` when no order exists.
    pub fn new(p: usize, parents: Vec<Vec<usize>>) -> Result<Dag> {
        if parents.len() != p {
            return Err(Error::shape(format!(
                "parents has {} entries for p={}",
                parents.len(),
                p
            )));
        }
        let mut parents = parents;
        for list in &mut parents {
            list.sort_unstable();
            list.dedup();
            if list.iter().any(|&i| i >= p) {
                return Err(Error::invalid("parent index out of range"));
            }
        }
        let order = topological_order_of(p, &parents)?;
        Ok(Dag { p, parents, order })
    }

    pub fn empty(p: usize) -> Dag {
        Dag {
            p,
            parents: vec![Vec::new(); p],
            order: (0..p).collect(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn parent_sets(&self) -> &[Vec<usize>] {
        &self.parents
    }

    /// Topological order: `order()[rank]` is the node at that rank.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Rank of each node under the topological order.
    pub fn ranks(&self) -> Vec<usize> {
        let mut rank = vec![0usize; self.p];
        for (r, &node) in self.order.iter().enumerate() {
            rank[node] = r;
        }
        rank
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.parents[to].binary_search(&from).is_ok()
    }

    /// All edges as (parent, child) pairs, ordered by (child, parent).
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for child in 0..self.p {
            for &parent in &self.parents[child] {
                out.push((parent, child));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.parents.iter().map(|l| l.len()).sum()
    }

    /// Edge-list text interop format, one "i j" line per edge.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (i, j) in self.edges() {
            s.push_str(&format!("{} {}\n", i, j));
        }
        s
    }

    pub fn from_edge_list(p: usize, text: &str) -> Result<Dag> {
        let mut parents = vec![Vec::new(); p];
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let i: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::invalid(format!("bad edge line: {line:?}")))?;
            let j: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::invalid(format!("bad edge line: {line:?}")))?;
            if i >= p || j >= p {
                return Err(Error::invalid(format!("edge ({i},{j}) out of range for p={p}")));
            }
            parents[j].push(i);
        }
        Dag::new(p, parents)
    }
}

/// Deterministic topological order with smallest-index-first tie-breaking.
pub fn topological_order_of(p: usize, parents: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut remaining: Vec<usize> = parents.iter().map(|l| l.len()).collect();
    let mut children = vec![Vec::new(); p];
    for (child, list) in parents.iter().enumerate() {
        for &parent in list {
            children[parent].push(child);
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> = (0..p)
        .filter(|&j| remaining[j] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(p);
    while let Some(Reverse(node)) = heap.pop() {
        order.push(node);
        for &child in &children[node] {
            remaining[child] -= 1;
            if remaining[child] == 0 {
                heap.push(Reverse(child));
            }
        }
    }
    if order.len() != p {
        return Err(Error::CycleDetected);
    }
    Ok(order)
}

/// Defensive re-derivation of a topological order for an existing DAG.
pub fn topological_order(dag: &Dag) -> Result<Vec<usize>> {
    topological_order_of(dag.p(), dag.parent_sets())
}

/// Latent-confounder attachment: `edges[(k, j)]` is true iff confounder `k`
/// is a direct cause of observed node `j`. Confounders are sources by
/// construction; no observed node can point into this structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfounderAttachment {
    edges: Array2<bool>,
}

impl ConfounderAttachment {
    pub fn new(edges: Array2<bool>) -> ConfounderAttachment {
        ConfounderAttachment { edges }
    }

    pub fn none(k: usize, p: usize) -> ConfounderAttachment {
        ConfounderAttachment {
            edges: Array2::from_elem((k, p), false),
        }
    }

    pub fn k(&self) -> usize {
        self.edges.nrows()
    }

    pub fn p(&self) -> usize {
        self.edges.ncols()
    }

    pub fn is_cause(&self, confounder: usize, node: usize) -> bool {
        self.edges[(confounder, node)]
    }

    /// Confounder indices that are direct causes of `node`.
    pub fn causes_of(&self, node: usize) -> Vec<usize> {
        (0..self.k()).filter(|&k| self.edges[(k, node)]).collect()
    }

    /// Nodes with at least one confounder parent (the set C of the tasks).
    pub fn confounded_nodes(&self) -> Vec<usize> {
        (0..self.p())
            .filter(|&j| (0..self.k()).any(|k| self.edges[(k, j)]))
            .collect()
    }
}

/// Draw a random DAG: a uniformly random node relabeling fixes the causal
/// order, then each rank-respecting pair is an edge independently with
/// probability `expected_neighborhood / (p - 1)`, which gives the stated
/// expected total degree per node.
pub fn sample_erdos_renyi(p: usize, expected_neighborhood: f64, rng_seed: u64) -> Result<Dag> {
    if p == 0 {
        return Err(Error::invalid("p must be at least 1"));
    }
    if !(expected_neighborhood > 0.0) {
        return Err(Error::invalid("expected_neighborhood must be positive"));
    }
    if expected_neighborhood >= p as f64 {
        return Err(Error::invalid(format!(
            "expected_neighborhood {expected_neighborhood} must be < p = {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut labels: Vec<usize> = (0..p).collect();
    labels.shuffle(&mut rng);
    let prob = if p == 1 {
        0.0
    } else {
        (expected_neighborhood / (p as f64 - 1.0)).min(1.0)
    };
    let mut parents = vec![Vec::new(); p];
    for r1 in 0..p {
        for r2 in (r1 + 1)..p {
            if rng.random::<f64>() < prob {
                parents[labels[r2]].push(labels[r1]);
            }
        }
    }
    Dag::new(p, parents)
}

/// Each (confounder, node) pair is attached independently with `attach_prob`.
pub fn sample_confounder_attachment(
    p: usize,
    k: usize,
    attach_prob: f64,
    rng_seed: u64,
) -> Result<ConfounderAttachment> {
    if !(0.0..=1.0).contains(&attach_prob) {
        return Err(Error::invalid("attach_prob must lie in [0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let edges = Array2::from_shape_fn((k, p), |_| rng.random::<f64>() < attach_prob);
    Ok(ConfounderAttachment::new(edges))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_has_no_edges() {
        let dag = sample_erdos_renyi(1, 0.5, 42).unwrap();
        assert_eq!(dag.edge_count(), 0);
    }

    #[test]
    fn chain_topological_order() {
        let dag = Dag::new(3, vec![vec![], vec![0], vec![1]]).unwrap();
        assert_eq!(topological_order(&dag).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn empty_graph_stable_order() {
        let dag = Dag::new(3, vec![vec![], vec![], vec![]]).unwrap();
        assert_eq!(topological_order(&dag).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn diamond_order_respects_edges() {
        let dag = Dag::new(4, vec![vec![], vec![0], vec![0], vec![1, 2]]).unwrap();
        let order = topological_order(&dag).unwrap();
        let mut rank = vec![0; 4];
        for (r, &n) in order.iter().enumerate() {
            rank[n] = r;
        }
        for (i, j) in dag.edges() {
            assert!(rank[i] < rank[j]);
        }
        assert_eq!(order[0], 0);
        assert_eq!(order[3], 3);
    }

    #[test]
    fn cycle_rejected() {
        assert!(matches!(
            Dag::new(2, vec![vec![1], vec![0]]),
            Err(Error::CycleDetected)
        ));
    }

    #[test]
    fn invalid_density_rejected() {
        assert!(sample_erdos_renyi(4, 4.0, 0).is_err());
        assert!(sample_erdos_renyi(4, 0.0, 0).is_err());
    }

    #[test]
    fn generated_dag_is_acyclic_with_valid_ranks() {
        let dag = sample_erdos_renyi(50, 5.0, 7).unwrap();
        let rank = dag.ranks();
        for (i, j) in dag.edges() {
            assert!(rank[i] < rank[j], "edge ({i},{j}) violates order");
        }
    }

    #[test]
    fn degree_concentration_at_large_scale() {
        // p=250, density 5, 25 replicates: mean neighborhood size in [4.5, 5.5].
        let p = 250;
        let reps = 25;
        let mut total_edges = 0usize;
        for seed in 0..reps {
            total_edges += sample_erdos_renyi(p, 5.0, seed).unwrap().edge_count();
        }
        let mean_degree = 2.0 * total_edges as f64 / (reps as f64 * p as f64);
        assert!((4.5..=5.5).contains(&mean_degree), "mean degree {mean_degree}");
    }

    #[test]
    fn edge_count_matches_binomial_law_small_graph() {
        // p=4: 6 rank-respecting pairs, each accepted with prob 3/(4-1)=1, so
        // the count is Binomial(6, 1.0) degenerate at 6. Also check a
        // non-degenerate density via Monte Carlo against the analytic mean.
        let dag = sample_erdos_renyi(4, 3.0, 0).unwrap();
        assert_eq!(dag.edge_count(), 6);

        let draws = 100_000u64;
        let mut total = 0usize;
        for seed in 0..draws {
            total += sample_erdos_renyi(4, 1.5, seed).unwrap().edge_count();
        }
        let mean = total as f64 / draws as f64;
        // Analytic: 6 pairs * 1.5/3 = 3.0; s.d. of the mean ~ 0.004.
        assert!((mean - 3.0).abs() < 0.02, "mean edge count {mean}");
    }

    #[test]
    fn determinism_byte_for_byte() {
        let a = sample_erdos_renyi(30, 4.0, 99).unwrap();
        let b = sample_erdos_renyi(30, 4.0, 99).unwrap();
        assert_eq!(a, b);
        let ca = sample_confounder_attachment(30, 2, 0.7, 5).unwrap();
        let cb = sample_confounder_attachment(30, 2, 0.7, 5).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn attachment_extremes() {
        let none = sample_confounder_attachment(10, 3, 0.0, 1).unwrap();
        assert!(none.confounded_nodes().is_empty());
        let all = sample_confounder_attachment(10, 3, 1.0, 1).unwrap();
        assert_eq!(all.confounded_nodes().len(), 10);
    }

    #[test]
    fn attachment_rate_near_point_seven() {
        let att = sample_confounder_attachment(500, 1, 0.7, 11).unwrap();
        let frac = att.confounded_nodes().len() as f64 / 500.0;
        assert!((frac - 0.7).abs() < 0.05, "attachment fraction {frac}");
    }

    #[test]
    fn edge_list_round_trip() {
        let dag = sample_erdos_renyi(12, 3.0, 3).unwrap();
        let text = dag.to_edge_list();
        let back = Dag::from_edge_list(12, &text).unwrap();
        assert_eq!(dag, back);
    }

    #[test]
    fn json_round_trip() {
        let dag = sample_erdos_renyi(8, 2.0, 1).unwrap();
        let json = serde_json::to_string(&dag).unwrap();
        let back: Dag = serde_json::from_str(&json).unwrap();
        assert_eq!(dag, back);
    }
}

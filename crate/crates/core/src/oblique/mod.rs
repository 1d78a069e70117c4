//! Probabilistic oblique trees.
//!
//! A complete binary tree stored in heap order: internal node `i` has
//! children `2i + 1` and `2i + 2`, and leaf `l` sits at heap slot
//! `internal_count + l`. Each internal node routes left with probability
//! `sigmoid(theta . x + bias)`; the tree output is the leaf values weighted
//! by the probability of reaching each leaf.

mod compress;
mod train;

pub use compress::{bits_for, prune, share_weights, SharedCodebook};
pub use train::{train_oblique, ObliqueConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{column_parts, CostTable, StandardizedCosts};
use crate::gbdt::sigmoid;

const LOG_FLOOR: f64 = 1e-9;

/// Per-column `(ln(max(x, 0) + 1e-9) - mean) / std`, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogScaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl LogScaler {
    pub fn fit(rows: impl Iterator<Item = impl AsRef<[f64]>>, n_cols: usize) -> Self {
        let mut sum = vec![0.0; n_cols];
        let mut sq = vec![0.0; n_cols];
        let mut n = 0.0;
        for r in rows {
            for (j, &v) in r.as_ref().iter().enumerate() {
                let u = (v.max(0.0) + LOG_FLOOR).ln();
                sum[j] += u;
                sq[j] += u * u;
            }
            n += 1.0;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| {
                let sd = (s / n - m * m).max(0.0).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        LogScaler { mean, std }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (m, s))| ((v.max(0.0) + LOG_FLOOR).ln() - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalNode {
    /// Dense weights over the (transformed) feature row.
    pub theta: Vec<f64>,
    /// `false` marks a pruned entry that stays at zero.
    pub active: Vec<bool>,
    pub bias: f64,
}

impl InternalNode {
    pub fn new(theta: Vec<f64>, bias: f64) -> Self {
        let active = vec![true; theta.len()];
        InternalNode {
            theta,
            active,
            bias,
        }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.theta.iter().zip(x).map(|(t, v)| t * v).sum::<f64>() + self.bias
    }

    /// Columns with a nonzero weight, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.theta.len()).filter(|&j| self.theta[j] != 0.0).collect()
    }

    pub fn nnz(&self) -> usize {
        self.theta.iter().filter(|&&t| t != 0.0).count()
    }
}

/// Probability of taking the left child.
pub fn route_probability(node: &InternalNode, x: &[f64]) -> f64 {
    sigmoid(node.logit(x))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObliqueTree {
    pub depth: usize,
    pub n_features: usize,
    pub channels: usize,
    pub nodes: Vec<InternalNode>,
    pub leaves: Vec<f64>,
    pub scaler: Option<LogScaler>,
    pub codebook: Option<SharedCodebook>,
    /// Set once the parameters sit on a `2^-frac_bits` grid.
    pub frac_bits: Option<u32>,
}

impl ObliqueTree {
    /// All weights and biases zero, all leaves `omega`.
    pub fn zeros(depth: usize, n_features: usize, channels: usize) -> Self {
        let n_internal = (1usize << depth) - 1;
        ObliqueTree {
            depth,
            n_features,
            channels,
            nodes: vec![InternalNode::new(vec![0.0; n_features], 0.0); n_internal],
            leaves: vec![0.0; 1 << depth],
            scaler: None,
            codebook: None,
            frac_bits: None,
        }
    }

    pub fn internal_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    /// Row as the nodes see it: scaled if the tree carries a scaler.
    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(match &self.scaler {
            Some(s) => s.apply(row),
            None => row.to_vec(),
        })
    }

    /// Reach probability of every leaf, for an already transformed row.
    pub fn leaf_probabilities(&self, x: &[f64]) -> Vec<f64> {
        let mut reach = vec![1.0];
        for level in 0..self.depth {
            let first = (1 << level) - 1;
            let mut next = Vec::with_capacity(reach.len() * 2);
            for (i, &r) in reach.iter().enumerate() {
                let p = route_probability(&self.nodes[first + i], x);
                next.push(r * p);
                next.push(r * (1.0 - p));
            }
            reach = next;
        }
        reach
    }

    pub fn soft_output(&self, x: &[f64]) -> f64 {
        self.leaf_probabilities(x)
            .iter()
            .zip(&self.leaves)
            .map(|(p, w)| p * w)
            .sum()
    }

    /// Heap indices of the most probable path, root first, and its leaf.
    pub fn hard_path(&self, x: &[f64]) -> (Vec<usize>, usize) {
        let mut path = Vec::with_capacity(self.depth);
        let mut i = 0;
        while i < self.nodes.len() {
            path.push(i);
            i = if self.nodes[i].logit(x) >= 0.0 {
                2 * i + 1
            } else {
                2 * i + 2
            };
        }
        (path, i - self.nodes.len())
    }

    pub fn hard_output(&self, x: &[f64]) -> f64 {
        self.leaves[self.hard_path(x).1]
    }

    pub fn max_nnz(&self) -> usize {
        self.nodes.iter().map(InternalNode::nnz).max().unwrap_or(0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.nodes
            .iter()
            .flat_map(|n| n.theta.iter())
            .map(|t| t.abs())
            .sum()
    }

    /// Distinct nonzero weight values across the whole tree.
    pub fn distinct_weights(&self) -> usize {
        let mut v: Vec<f64> = self
            .nodes
            .iter()
            .flat_map(|n| n.theta.iter().copied())
            .filter(|&t| t != 0.0)
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    }

    /// Power of the distinct `(feature, channel)` pairs a node reads, and
    /// the longest window among them (0 for an empty node).
    pub fn node_cost(&self, node: usize, costs: &CostTable) -> (f64, f64) {
        let mut power = 0.0;
        let mut latency: f64 = 0.0;
        for col in self.nodes[node].support() {
            let (_, kind) = column_parts(col);
            power += costs.power_nw(kind);
            latency = latency.max(costs.latency_s(kind));
        }
        (power, latency)
    }
}

/// Tree output `sum_l P_l(x) * omega_l` for a raw feature row.
pub fn predict_soft(tree: &ObliqueTree, row: &[f64]) -> Result<f64> {
    Ok(tree.soft_output(&tree.transform(row)?))
}

/// Leaf value along the most probable path (ties go left).
pub fn predict_hard(tree: &ObliqueTree, row: &[f64]) -> Result<f64> {
    Ok(tree.hard_output(&tree.transform(row)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObliqueGradient {
    pub theta: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub leaves: Vec<f64>,
}

fn cross_entropy(logit: f64, y: f64) -> f64 {
    // log(1 + e^z) - y z, stable for large |z|
    logit.max(0.0) + (-logit.abs()).exp().ln_1p() - y * logit
}

/// Mean cross-entropy of `sigmoid(tree output)` over transformed rows.
pub fn data_loss(tree: &ObliqueTree, xs: &[Vec<f64>], ys: &[u8]) -> f64 {
    xs.iter()
        .zip(ys)
        .map(|(x, &y)| cross_entropy(tree.soft_output(x), y as f64))
        .sum::<f64>()
        / xs.len() as f64
}

pub fn penalty(tree: &ObliqueTree, c: f64, costs: &StandardizedCosts) -> f64 {
    if c == 0.0 {
        return 0.0;
    }
    let w = l1_weights(tree.n_features, costs);
    c * tree
        .nodes
        .iter()
        .map(|n| n.theta.iter().zip(&w).map(|(t, w)| w * t.abs()).sum::<f64>())
        .sum::<f64>()
}

/// Training objective: data loss plus the cost-weighted L1 term.
pub fn objective(
    tree: &ObliqueTree,
    xs: &[Vec<f64>],
    ys: &[u8],
    c: f64,
    costs: &StandardizedCosts,
) -> f64 {
    data_loss(tree, xs, ys) + penalty(tree, c, costs)
}

pub(crate) fn l1_weights(n_features: usize, costs: &StandardizedCosts) -> Vec<f64> {
    (0..n_features)
        .map(|col| costs.l1_weight(column_parts(col).1))
        .collect()
}

/// Gradient of the data loss only, accumulated over transformed rows.
pub(crate) fn data_gradient(tree: &ObliqueTree, xs: &[Vec<f64>], ys: &[u8]) -> ObliqueGradient {
    let n_int = tree.internal_count();
    let mut g = ObliqueGradient {
        theta: vec![vec![0.0; tree.n_features]; n_int],
        bias: vec![0.0; n_int],
        leaves: vec![0.0; tree.leaf_count()],
    };
    let inv_n = 1.0 / xs.len() as f64;
    let mut probs = vec![0.0; n_int];
    // subtree sums of P_l * omega_l, heap-indexed over all 2 * leaves - 1 slots
    let mut sums = vec![0.0; n_int + tree.leaf_count()];
    for (x, &y) in xs.iter().zip(ys) {
        for (i, node) in tree.nodes.iter().enumerate() {
            probs[i] = route_probability(node, x);
        }
        let reach = tree.leaf_probabilities(x);
        let out: f64 = reach.iter().zip(&tree.leaves).map(|(p, w)| p * w).sum();
        let d_out = (sigmoid(out) - y as f64) * inv_n;
        for (l, &p) in reach.iter().enumerate() {
            g.leaves[l] += d_out * p;
            sums[n_int + l] = p * tree.leaves[l];
        }
        for i in (0..n_int).rev() {
            let (a, b) = (sums[2 * i + 1], sums[2 * i + 2]);
            sums[i] = a + b;
            let d_logit = d_out * (a * (1.0 - probs[i]) - b * probs[i]);
            if d_logit != 0.0 {
                g.bias[i] += d_logit;
                for (gt, &v) in g.theta[i].iter_mut().zip(x) {
                    *gt += d_logit * v;
                }
            }
        }
    }
    g
}

/// Exact gradient of [`objective`] for a batch of raw rows. The L1 term
/// contributes `C * w_f * sign(theta)`, with 0 at `theta = 0`.
pub fn gradient(
    tree: &ObliqueTree,
    rows: &[Vec<f64>],
    labels: &[u8],
    c: f64,
    costs: &StandardizedCosts,
) -> Result<ObliqueGradient> {
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::invalid("gradient needs a nonempty batch with one label per row"));
    }
    let xs = rows
        .iter()
        .map(|r| tree.transform(r))
        .collect::<Result<Vec<_>>>()?;
    let mut g = data_gradient(tree, &xs, labels);
    if c != 0.0 {
        let w = l1_weights(tree.n_features, costs);
        for (gn, node) in g.theta.iter_mut().zip(&tree.nodes) {
            for j in 0..gn.len() {
                let t = node.theta[j];
                if t != 0.0 {
                    gn[j] += c * w[j] * t.signum();
                }
            }
        }
    }
    Ok(g)
}

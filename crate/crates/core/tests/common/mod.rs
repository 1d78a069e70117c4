#![allow(dead_code)]

use neurotree::features::{CostTable, FeatureKind, FeatureTable, StandardizedCosts, N_FEATURES};
use neurotree::gbdt::{AxisEnsemble, AxisNode};
use neurotree::oblique::{gradient, objective, InternalNode, LogScaler, ObliqueTree};
use neurotree::signals::{generate_synthetic_recording, Recording, SyntheticParams};
use neurotree::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn seed42() -> Recording {
    generate_synthetic_recording(&SyntheticParams::default()).unwrap()
}

pub fn seed42_table() -> FeatureTable {
    FeatureTable::from_recording(&seed42()).unwrap()
}

/// Chronological split: first two thirds for training, the rest for
/// validation.
pub fn chrono_split(data: &Dataset) -> (Dataset, Dataset) {
    let n = data.n_rows();
    let cut = 2 * n / 3;
    let train: Vec<usize> = (0..cut).collect();
    let val: Vec<usize> = (cut..n).collect();
    (data.subset(&train), data.subset(&val))
}

pub fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Reference interpreter for an axis tree, written against the column
/// layout (channel-major, features in declaration order) with an explicit
/// work stack instead of the library walker.
pub fn interpret_axis_tree(tree: &AxisNode, row: &[f64]) -> f64 {
    let mut stack = vec![tree];
    while let Some(node) = stack.pop() {
        match node {
            AxisNode::Leaf { weight, .. } => return *weight,
            AxisNode::Internal {
                feature,
                channel,
                threshold,
                left,
                right,
                ..
            } => {
                let col = channel * N_FEATURES + FeatureKind::ALL.iter().position(|k| k == feature).unwrap();
                stack.push(if row[col] > *threshold { right } else { left });
            }
        }
    }
    unreachable!("tree without a leaf")
}

pub fn interpret_ensemble(e: &AxisEnsemble, row: &[f64]) -> f64 {
    let mut z = e.base_score;
    for t in &e.trees {
        z += e.learning_rate * interpret_axis_tree(t, row);
    }
    logistic(z)
}

/// Leaf `l` of a depth-`d` heap tree reached by the bits of `l`, most
/// significant first (0 = left). Returns the product of branch probabilities.
pub fn enumerate_leaf_probability(tree: &ObliqueTree, x: &[f64], leaf: usize) -> f64 {
    let mut p = 1.0;
    let mut node = 0;
    for level in (0..tree.depth).rev() {
        let n = &tree.nodes[node];
        let z = n.bias + n.theta.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let left = logistic(z);
        if (leaf >> level) & 1 == 0 {
            p *= left;
            node = 2 * node + 1;
        } else {
            p *= 1.0 - left;
            node = 2 * node + 2;
        }
    }
    p
}

pub fn enumerate_soft(tree: &ObliqueTree, x: &[f64]) -> f64 {
    (0..tree.leaves.len())
        .map(|l| enumerate_leaf_probability(tree, x, l) * tree.leaves[l])
        .sum()
}

pub fn random_oblique(rng: &mut impl Rng, depth: usize, n_features: usize, scale: f64) -> ObliqueTree {
    let mut t = ObliqueTree::zeros(depth, n_features, n_features.div_ceil(N_FEATURES).max(1));
    for node in &mut t.nodes {
        *node = InternalNode::new(
            (0..n_features).map(|_| rng.random_range(-scale..scale)).collect(),
            rng.random_range(-1.0..1.0),
        );
    }
    for w in &mut t.leaves {
        *w = rng.random_range(-2.0..2.0);
    }
    t
}

/// Nonnegative rows spanning several orders of magnitude, like features.
pub fn random_feature_rows(rng: &mut impl Rng, n: usize, width: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..width)
                .map(|_| 10f64.powf(rng.random_range(-3.0..3.0)))
                .collect()
        })
        .collect()
}

pub fn f1(decisions: &[bool], labels: &[u8]) -> f64 {
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut fn_ = 0.0;
    for (&d, &l) in decisions.iter().zip(labels) {
        match (d, l == 1) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fn_ += 1.0,
            _ => {}
        }
    }
    if tp == 0.0 {
        0.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Central differences against the analytic gradient over `trials` random
/// (tree, batch, C) triples. Returns the worst relative error.
pub fn worst_gradient_error(seed: u64, trials: usize) -> f64 {
    let z = StandardizedCosts::new(&CostTable::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let depth = rng.random_range(1..=3);
        let nf = rng.random_range(2..=12);
        let n = rng.random_range(4..=16);
        let c = if trial % 3 == 0 { 0.0 } else { rng.random_range(0.0..0.2) };
        let mut tree = random_oblique(&mut rng, depth, nf, 1.0);
        // keep weights away from the L1 kink
        for node in &mut tree.nodes {
            for t in &mut node.theta {
                if t.abs() < 0.05 {
                    *t += 0.1_f64.copysign(*t);
                }
            }
        }
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..nf).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let g = gradient(&tree, &rows, &labels, c, &z).unwrap();
        let f = |t: &ObliqueTree| objective(t, &rows, &labels, c, &z);

        let mut probe = |get: &dyn Fn(&mut ObliqueTree) -> &mut f64, analytic: f64| {
            let mut plus = tree.clone();
            *get(&mut plus) += h;
            let mut minus = tree.clone();
            *get(&mut minus) -= h;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            worst = worst.max(rel_err(analytic, numeric));
        };
        for i in 0..tree.nodes.len() {
            probe(&|t| &mut t.nodes[i].bias, g.bias[i]);
            for j in 0..nf {
                probe(&|t| &mut t.nodes[i].theta[j], g.theta[i][j]);
            }
        }
        for l in 0..tree.leaves.len() {
            probe(&|t| &mut t.leaves[l], g.leaves[l]);
        }
    }
    worst
}

/// Log-standardize a raw row from the scaler's fitted moments.
pub fn scale_row(scaler: &LogScaler, row: &[f64]) -> Vec<f64> {
    row.iter()
        .enumerate()
        .map(|(j, &v)| ((if v > 0.0 { v } else { 0.0 } + 1e-9).ln() - scaler.mean[j]) / scaler.std[j])
        .collect()
}

/// Hard routing written from the node logits: go left when the left branch
/// is at least as likely as the right one.
pub fn interpret_oblique_hard(tree: &ObliqueTree, x: &[f64]) -> f64 {
    let mut node = 0;
    for _ in 0..tree.depth {
        let n = &tree.nodes[node];
        let z = n.bias + n.theta.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        node = if logistic(z) >= 0.5 { 2 * node + 1 } else { 2 * node + 2 };
    }
    tree.leaves[node - tree.nodes.len()]
}

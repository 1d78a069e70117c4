use serde::{Deserialize, Serialize};

use super::train::{descend, Holdout, ObliqueConfig};
use super::ObliqueTree;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::{CostTable, StandardizedCosts};

/// Uniform grid of shared weight values plus, per internal node, the
/// `(column, center)` pairs of its surviving weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedCodebook {
    pub centers: Vec<f64>,
    pub indices: Vec<Vec<(usize, u16)>>,
}

impl SharedCodebook {
    pub fn index_bits(&self) -> u32 {
        bits_for(self.centers.len().saturating_sub(1) as u64)
    }

    /// Nearest center, ties to the lower one.
    pub fn nearest(&self, w: f64) -> usize {
        let mut best = 0;
        for (i, &c) in self.centers.iter().enumerate().skip(1) {
            if (w - c).abs() < (w - self.centers[best]).abs() {
                best = i;
            }
        }
        best
    }
}

/// Bits needed to write `v` in binary, at least 1.
pub fn bits_for(v: u64) -> u32 {
    (64 - v.leading_zeros()).max(1)
}

/// Zeroes all but the `keep` largest-magnitude weights of every node and
/// freezes the zeros. Equal magnitudes keep the lower column.
fn prune_to(tree: &mut ObliqueTree, keep: usize) {
    for node in &mut tree.nodes {
        let mut order: Vec<usize> = node.support();
        order.sort_by(|&a, &b| {
            node.theta[b]
                .abs()
                .total_cmp(&node.theta[a].abs())
                .then(a.cmp(&b))
        });
        for &j in order.iter().skip(keep) {
            node.theta[j] = 0.0;
        }
        for j in 0..node.theta.len() {
            if node.theta[j] == 0.0 {
                node.active[j] = false;
            }
        }
    }
}

/// Iterative magnitude pruning: one round per schedule fraction, then a
/// final round at `target`, each followed by `retrain_epochs` of training
/// on the surviving weights.
pub fn prune(
    tree: &ObliqueTree,
    data: &Dataset,
    config: &ObliqueConfig,
    costs: &CostTable,
    target: usize,
    retrain_epochs: usize,
) -> Result<ObliqueTree> {
    if target == 0 {
        return Err(Error::invalid("pruning target must be >= 1"));
    }
    let z = StandardizedCosts::new(costs)?;
    let holdout = Holdout::new(tree, data, config.validation_fraction)?;
    let mut out = tree.clone();
    let mut keeps: Vec<usize> = config
        .prune_schedule
        .iter()
        .map(|f| ((f * tree.n_features as f64).ceil() as usize).max(target))
        .filter(|&k| k > target)
        .collect();
    keeps.push(target);
    for keep in keeps {
        prune_to(&mut out, keep);
        descend(
            &mut out,
            &holdout,
            config.learning_rate,
            retrain_epochs,
            config.c,
            &z,
            true,
        )?;
    }
    Ok(out)
}

/// Snaps every nonzero weight to one of `k` values spaced uniformly over
/// the weight range, then retrains biases and leaves with weights frozen.
pub fn share_weights(
    tree: &ObliqueTree,
    data: &Dataset,
    config: &ObliqueConfig,
    costs: &CostTable,
    k: usize,
) -> Result<(ObliqueTree, SharedCodebook)> {
    if k < 2 {
        return Err(Error::invalid("codebook needs k >= 2"));
    }
    let z = StandardizedCosts::new(costs)?;
    let weights: Vec<f64> = tree
        .nodes
        .iter()
        .flat_map(|n| n.theta.iter().copied())
        .filter(|&t| t != 0.0)
        .collect();
    let lo = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let centers = if weights.is_empty() {
        vec![0.0]
    } else if lo == hi {
        vec![lo]
    } else {
        let step = (hi - lo) / (k - 1) as f64;
        let mut c: Vec<f64> = (0..k).map(|i| lo + step * i as f64).collect();
        c[k - 1] = hi;
        c
    };
    let mut book = SharedCodebook {
        centers,
        indices: Vec::with_capacity(tree.nodes.len()),
    };

    let mut out = tree.clone();
    for node in &mut out.nodes {
        let mut map = Vec::new();
        for j in 0..node.theta.len() {
            if node.theta[j] == 0.0 {
                node.active[j] = false;
                continue;
            }
            let ci = book.nearest(node.theta[j]);
            node.theta[j] = book.centers[ci];
            if node.theta[j] == 0.0 {
                node.active[j] = false;
            } else {
                map.push((j, ci as u16));
            }
        }
        book.indices.push(map);
    }
    out.codebook = Some(book.clone());

    let holdout = Holdout::new(&out, data, config.validation_fraction)?;
    descend(
        &mut out,
        &holdout,
        config.learning_rate,
        config.retrain_epochs,
        config.c,
        &z,
        false,
    )?;
    Ok((out, book))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_value_codebook_is_exact() {
        let mut t = ObliqueTree::zeros(1, 3, 1);
        t.nodes[0].theta = vec![-1.0, 0.0, 1.0];
        let rows = vec![vec![0.0; 3]; 20];
        let y: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let data = Dataset::from_rows(&rows, y, 1).unwrap();
        let config = ObliqueConfig {
            retrain_epochs: 1,
            ..Default::default()
        };
        let (shared, book) = share_weights(&t, &data, &config, &CostTable::default(), 2).unwrap();
        assert_eq!(book.centers, vec![-1.0, 1.0]);
        assert_eq!(shared.nodes[0].theta, vec![-1.0, 0.0, 1.0]);
        assert_eq!(book.indices[0], vec![(0, 0), (2, 1)]);
    }

    #[test]
    fn degenerate_range_gives_single_center() {
        let mut t = ObliqueTree::zeros(1, 2, 1);
        t.nodes[0].theta = vec![0.3, 0.3];
        let data = Dataset::from_rows(&vec![vec![0.0; 2]; 10], vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1], 1)
            .unwrap();
        let config = ObliqueConfig {
            retrain_epochs: 1,
            ..Default::default()
        };
        let (_, book) = share_weights(&t, &data, &config, &CostTable::default(), 16).unwrap();
        assert_eq!(book.centers, vec![0.3]);
        assert_eq!(book.index_bits(), 1);
    }

    #[test]
    fn nearest_prefers_lower_on_ties() {
        let book = SharedCodebook {
            centers: vec![0.0, 1.0, 2.0],
            indices: vec![],
        };
        assert_eq!(book.nearest(0.5), 0);
        assert_eq!(book.nearest(1.5), 1);
        assert_eq!(book.nearest(1.6), 2);
        assert_eq!(book.nearest(-4.0), 0);
    }

    #[test]
    fn prune_keeps_largest_magnitudes() {
        let mut t = ObliqueTree::zeros(1, 5, 1);
        t.nodes[0].theta = vec![0.1, -0.9, 0.5, -0.2, 0.5];
        prune_to(&mut t, 2);
        assert_eq!(t.nodes[0].theta, vec![0.0, -0.9, 0.5, 0.0, 0.0]);
        assert_eq!(t.nodes[0].active, vec![false, true, true, false, false]);
    }

    #[test]
    fn bit_widths() {
        assert_eq!(bits_for(0), 1);
        assert_eq!(bits_for(1), 1);
        assert_eq!(bits_for(15), 4);
        assert_eq!(bits_for(16), 5);
    }
}

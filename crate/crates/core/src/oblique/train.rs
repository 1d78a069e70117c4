use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{data_gradient, l1_weights, objective, LogScaler, ObliqueTree};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::{CostTable, StandardizedCosts};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObliqueConfig {
    pub max_depth: usize,
    pub c: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Fractions of the row width kept per node at each pruning round,
    /// decreasing. A final round always prunes to `target_nnz`.
    pub prune_schedule: Vec<f64>,
    pub target_nnz: usize,
    /// Epochs of retraining after each pruning round and after sharing.
    pub retrain_epochs: usize,
    pub k: usize,
    pub seed: u64,
    pub frac_bits: u32,
    /// Trailing share of training rows held out for snapshot selection.
    pub validation_fraction: f64,
}

impl Default for ObliqueConfig {
    fn default() -> Self {
        ObliqueConfig {
            max_depth: 4,
            c: 0.0,
            learning_rate: 0.5,
            epochs: 300,
            prune_schedule: vec![0.5, 0.25],
            target_nnz: 8,
            retrain_epochs: 100,
            k: 16,
            seed: 42,
            frac_bits: 12,
            validation_fraction: 0.1,
        }
    }
}

impl ObliqueConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 || self.max_depth > 12 {
            return Err(Error::invalid("oblique max_depth must be in 1..=12"));
        }
        if !(self.c >= 0.0) {
            return Err(Error::invalid("C must be >= 0"));
        }
        if !(self.learning_rate > 0.0) || self.epochs == 0 {
            return Err(Error::invalid("learning_rate and epochs must be positive"));
        }
        if self.prune_schedule.windows(2).any(|w| w[1] >= w[0])
            || self.prune_schedule.iter().any(|&f| !(f > 0.0 && f <= 1.0))
        {
            return Err(Error::invalid("prune_schedule must be decreasing fractions in (0, 1]"));
        }
        if self.target_nnz == 0 || self.k < 2 {
            return Err(Error::invalid("target_nnz must be >= 1 and k >= 2"));
        }
        if !(4..=16).contains(&self.frac_bits) {
            return Err(Error::invalid("frac_bits must be in 4..=16"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(Error::invalid("validation_fraction must be in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Chronological train / validation partition in the tree's input space.
pub(crate) struct Holdout {
    pub train_x: Vec<Vec<f64>>,
    pub train_y: Vec<u8>,
    pub val_x: Vec<Vec<f64>>,
    pub val_y: Vec<u8>,
}

pub(crate) fn split_rows(data: &Dataset, fraction: f64) -> usize {
    let n = data.n_rows();
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    n - n_val
}

impl Holdout {
    pub fn new(tree: &ObliqueTree, data: &Dataset, fraction: f64) -> Result<Self> {
        let cut = split_rows(data, fraction);
        let xs = data
            .rows()
            .map(|r| tree.transform(r))
            .collect::<Result<Vec<_>>>()?;
        let mut train_x = xs;
        let val_x = train_x.split_off(cut);
        Ok(Holdout {
            train_x,
            train_y: data.labels()[..cut].to_vec(),
            val_x,
            val_y: data.labels()[cut..].to_vec(),
        })
    }

    fn val_objective(&self, tree: &ObliqueTree, c: f64, costs: &StandardizedCosts) -> f64 {
        objective(tree, &self.val_x, &self.val_y, c, costs)
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Full-batch proximal gradient descent keeping the best-validation
/// snapshot. With `update_theta == false` only biases and leaves move.
pub(crate) fn descend(
    tree: &mut ObliqueTree,
    holdout: &Holdout,
    lr: f64,
    epochs: usize,
    c: f64,
    costs: &StandardizedCosts,
    update_theta: bool,
) -> Result<()> {
    let w = l1_weights(tree.n_features, costs);
    let mut best = holdout.val_objective(tree, c, costs);
    let mut snapshot = tree.clone();
    for epoch in 1..=epochs {
        let g = data_gradient(tree, &holdout.train_x, &holdout.train_y);
        for (leaf, d) in tree.leaves.iter_mut().zip(&g.leaves) {
            *leaf -= lr * d;
        }
        for (i, node) in tree.nodes.iter_mut().enumerate() {
            node.bias -= lr * g.bias[i];
            if !update_theta {
                continue;
            }
            for j in 0..node.theta.len() {
                if node.active[j] {
                    let stepped = node.theta[j] - lr * g.theta[i][j];
                    node.theta[j] = soft_threshold(stepped, lr * c * w[j]);
                }
            }
        }
        let val = holdout.val_objective(tree, c, costs);
        if !val.is_finite() || tree.leaves.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        if val < best {
            best = val;
            snapshot.clone_from(tree);
        }
    }
    *tree = snapshot;
    Ok(())
}

/// Gradient training from a small random start: weights uniform in
/// `(-0.01, 0.01)`, biases and leaves zero.
pub fn train_oblique(
    data: &Dataset,
    config: &ObliqueConfig,
    costs: &CostTable,
) -> Result<ObliqueTree> {
    config.validate()?;
    data.validate_for_training()?;
    let z = StandardizedCosts::new(costs)?;
    let nf = data.n_cols();
    let cut = split_rows(data, config.validation_fraction);
    let mut tree = ObliqueTree::zeros(config.max_depth, nf, data.channels());
    tree.scaler = Some(LogScaler::fit(data.rows().take(cut), nf));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for node in &mut tree.nodes {
        for t in &mut node.theta {
            *t = rng.random_range(-0.01..0.01);
        }
    }
    let holdout = Holdout::new(&tree, data, config.validation_fraction)?;
    descend(
        &mut tree,
        &holdout,
        config.learning_rate,
        config.epochs,
        config.c,
        &z,
        true,
    )?;
    Ok(tree)
}

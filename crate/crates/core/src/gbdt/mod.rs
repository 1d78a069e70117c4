//! Depth-variant tree ensembles: logistic gradient boosting where each round
//! has its own depth limit and split search is charged for feature cost.

mod split;

pub use split::{find_best_split, node_score, BinnedData, SplitContext, SplitDecision};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::{column_of, CostTable, FeatureKind, StandardizedCosts, N_FEATURES};

pub const DEFAULT_DEPTH_SCHEDULE: [usize; 8] = [1, 1, 2, 2, 3, 3, 4, 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub n_trees: usize,
    pub depth_schedule: Vec<usize>,
    /// Weight of the standardized power + latency penalty.
    pub c: f64,
    pub min_samples_leaf: usize,
    pub max_bins: usize,
    /// L2 term in the Newton leaf values.
    pub lambda: f64,
    /// Kept for provenance in logs; boosting here draws no random numbers.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.3,
            n_trees: DEFAULT_DEPTH_SCHEDULE.len(),
            depth_schedule: DEFAULT_DEPTH_SCHEDULE.to_vec(),
            c: 0.0,
            min_samples_leaf: 20,
            max_bins: 64,
            lambda: 1.0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::invalid("learning_rate must be in (0, 1]"));
        }
        if !(self.c >= 0.0) {
            return Err(Error::invalid("C must be >= 0"));
        }
        if self.depth_schedule.len() != self.n_trees {
            return Err(Error::invalid(format!(
                "depth schedule has {} entries for {} trees",
                self.depth_schedule.len(),
                self.n_trees
            )));
        }
        if self.max_bins < 2 {
            return Err(Error::invalid("max_bins must be >= 2"));
        }
        Ok(())
    }
}

/// Axis-aligned regression tree. Rows with `value <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub enum AxisNode {
    Internal {
        feature: FeatureKind,
        channel: usize,
        threshold: f64,
        /// Fraction of training rows reaching this node.
        cover: f64,
        left: Box<AxisNode>,
        right: Box<AxisNode>,
    },
    Leaf {
        weight: f64,
        cover: f64,
    },
}

impl AxisNode {
    pub fn leaf(weight: f64) -> Self {
        AxisNode::Leaf { weight, cover: 1.0 }
    }

    pub fn split(
        feature: FeatureKind,
        channel: usize,
        threshold: f64,
        left: AxisNode,
        right: AxisNode,
    ) -> Self {
        AxisNode::Internal {
            feature,
            channel,
            threshold,
            cover: 1.0,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            AxisNode::Leaf { .. } => 0,
            AxisNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn cover(&self) -> f64 {
        match self {
            AxisNode::Leaf { cover, .. } | AxisNode::Internal { cover, .. } => *cover,
        }
    }

    /// Internal nodes visited by `row`, root first, and the leaf weight.
    pub fn route<'a>(&'a self, row: &[f64]) -> (Vec<&'a AxisNode>, f64) {
        let mut path = Vec::new();
        let mut node = self;
        loop {
            match node {
                AxisNode::Leaf { weight, .. } => return (path, *weight),
                AxisNode::Internal {
                    feature,
                    channel,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    path.push(node);
                    node = if row[column_of(*channel, *feature)] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
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
                    node = if row[column_of(*channel, *feature)] <= *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Depth-first preorder walk.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a AxisNode, usize)) {
        fn go<'a>(n: &'a AxisNode, depth: usize, f: &mut impl FnMut(&'a AxisNode, usize)) {
            f(n, depth);
            if let AxisNode::Internal { left, right, .. } = n {
                go(left, depth + 1, f);
                go(right, depth + 1, f);
            }
        }
        go(self, 0, f)
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut AxisNode)) {
        f(self);
        if let AxisNode::Internal { left, right, .. } = self {
            left.visit_mut(f);
            right.visit_mut(f);
        }
    }

    pub fn internal_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |node, _| {
            if matches!(node, AxisNode::Internal { .. }) {
                n += 1
            }
        });
        n
    }
}

/// Hardware cost of one root-to-leaf traversal.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PathCost {
    pub power_nw: f64,
    pub latency_s: f64,
}

/// Power counts each distinct `(feature, channel)` once; latency adds every
/// node's window because nodes are evaluated in consecutive windows.
pub fn path_cost(tree: &AxisNode, row: &[f64], costs: &CostTable) -> PathCost {
    let (path, _) = tree.route(row);
    let mut seen = BTreeSet::new();
    let mut out = PathCost::default();
    for node in path {
        if let AxisNode::Internal {
            feature, channel, ..
        } = node
        {
            if seen.insert((*feature, *channel)) {
                out.power_nw += costs.power_nw(*feature);
            }
            out.latency_s += costs.latency_s(*feature);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisEnsemble {
    pub trees: Vec<AxisNode>,
    pub depth_schedule: Vec<usize>,
    pub learning_rate: f64,
    /// Prior log-odds.
    pub base_score: f64,
    pub channels: usize,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl AxisEnsemble {
    pub fn n_features(&self) -> usize {
        self.channels * N_FEATURES
    }

    pub fn raw_score(&self, row: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    /// Probability of the event class.
    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        Ok(sigmoid(self.raw_score(row)))
    }

    /// The first `k` trees.
    pub fn truncated(&self, k: usize) -> AxisEnsemble {
        AxisEnsemble {
            trees: self.trees[..k].to_vec(),
            depth_schedule: self.depth_schedule[..k].to_vec(),
            ..self.clone()
        }
    }

    /// Summed power over the parallel trees and mean per-tree latency.
    pub fn path_cost(&self, row: &[f64], costs: &CostTable) -> PathCost {
        let mut total = PathCost::default();
        for t in &self.trees {
            let c = path_cost(t, row, costs);
            total.power_nw += c.power_nw;
            total.latency_s += c.latency_s;
        }
        if !self.trees.is_empty() {
            total.latency_s /= self.trees.len() as f64;
        }
        total
    }
}

pub fn predict_ensemble(ensemble: &AxisEnsemble, row: &[f64]) -> Result<f64> {
    ensemble.predict(row)
}

fn logloss(p: f64, y: u8) -> f64 {
    let p = p.clamp(1e-15, 1.0 - 1e-15);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean logistic loss plus `C` times the mean standardized path cost
/// (distinct `(feature, channel)` pairs per tree path).
pub fn regularized_objective(
    ensemble: &AxisEnsemble,
    data: &Dataset,
    c: f64,
    costs: &StandardizedCosts,
) -> f64 {
    let n = data.n_rows() as f64;
    let mut total = 0.0;
    for (row, &y) in data.rows().zip(data.labels()) {
        total += logloss(sigmoid(ensemble.raw_score(row)), y);
        if c > 0.0 {
            for t in &ensemble.trees {
                let (path, _) = t.route(row);
                let mut seen = BTreeSet::new();
                for node in path {
                    if let AxisNode::Internal {
                        feature, channel, ..
                    } = node
                    {
                        if seen.insert((*feature, *channel)) {
                            total += c * costs.excess(*feature);
                        }
                    }
                }
            }
        }
    }
    total / n
}

struct Grower<'a> {
    binned: &'a BinnedData,
    grad: &'a [f64],
    hess: &'a [f64],
    config: &'a TrainConfig,
    costs: &'a StandardizedCosts,
    n_total: usize,
}

impl Grower<'_> {
    fn grow(
        &self,
        samples: Vec<usize>,
        depth_left: usize,
        on_path: &mut BTreeSet<(FeatureKind, usize)>,
        leaf_of: &mut [f64],
    ) -> AxisNode {
        let cover = samples.len() as f64 / self.n_total as f64;
        let split = if depth_left > 0 {
            let ctx = SplitContext {
                c: self.config.c,
                costs: self.costs,
                lambda: self.config.lambda,
                min_samples_leaf: self.config.min_samples_leaf,
                n_total: self.n_total,
                on_path,
            };
            find_best_split(self.binned, &samples, self.grad, self.hess, &ctx)
        } else {
            None
        };
        match split {
            None => {
                let (g, h) = samples
                    .iter()
                    .fold((0.0, 0.0), |(g, h), &i| (g + self.grad[i], h + self.hess[i]));
                let weight = -g / (h + self.config.lambda);
                for &i in &samples {
                    leaf_of[i] = weight;
                }
                AxisNode::Leaf { weight, cover }
            }
            Some(s) => {
                let (l, r): (Vec<usize>, Vec<usize>) = samples
                    .iter()
                    .partition(|&&i| self.binned.goes_left(i, s.column, s.cut_index));
                let key = (s.feature, s.channel);
                let fresh = on_path.insert(key);
                let left = self.grow(l, depth_left - 1, on_path, leaf_of);
                let right = self.grow(r, depth_left - 1, on_path, leaf_of);
                if fresh {
                    on_path.remove(&key);
                }
                AxisNode::Internal {
                    feature: s.feature,
                    channel: s.channel,
                    threshold: s.threshold,
                    cover,
                    left: Box::new(left),
                    right: Box::new(right),
                }
            }
        }
    }
}

/// Boosts one tree per schedule entry with Newton leaf values and the
/// cost-regularized split search.
pub fn train_dvte(data: &Dataset, config: &TrainConfig, costs: &CostTable) -> Result<AxisEnsemble> {
    config.validate()?;
    data.validate_for_training()?;
    if data.n_cols() != data.channels() * N_FEATURES {
        return Err(Error::DimensionMismatch {
            expected: data.channels() * N_FEATURES,
            got: data.n_cols(),
        });
    }
    let z = StandardizedCosts::new(costs)?;
    let binned = BinnedData::new(data, config.max_bins);
    let n = data.n_rows();
    let prior = data.positive_rate();
    let base_score = (prior / (1.0 - prior)).ln();

    let mut scores = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut leaf_of = vec![0.0; n];
    let mut trees = Vec::with_capacity(config.n_trees);

    for &max_depth in &config.depth_schedule {
        for i in 0..n {
            let p = sigmoid(scores[i]);
            grad[i] = p - data.labels()[i] as f64;
            hess[i] = (p * (1.0 - p)).max(1e-16);
        }
        let grower = Grower {
            binned: &binned,
            grad: &grad,
            hess: &hess,
            config,
            costs: &z,
            n_total: n,
        };
        let tree = grower.grow((0..n).collect(), max_depth, &mut BTreeSet::new(), &mut leaf_of);
        for i in 0..n {
            scores[i] += config.learning_rate * leaf_of[i];
        }
        trees.push(tree);
    }

    Ok(AxisEnsemble {
        trees,
        depth_schedule: config.depth_schedule.clone(),
        learning_rate: config.learning_rate,
        base_score,
        channels: data.channels(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::N_FEATURES;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Rank-based AUC by pair counting.
    fn auc(scores: &[f64], y: &[u8]) -> f64 {
        let (mut wins, mut pairs) = (0.0, 0.0);
        for i in 0..y.len() {
            for j in 0..y.len() {
                if y[i] == 1 && y[j] == 0 {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        wins / pairs
    }

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = (i % 3 == 0) as u8;
            let mut r: Vec<f64> = (0..N_FEATURES).map(|_| rng.random_range(-1.0..1.0)).collect();
            r[FeatureKind::Beta.index()] = label as f64 + rng.random_range(-0.01..0.01);
            rows.push(r);
            y.push(label);
        }
        Dataset::from_rows(&rows, y, 1).unwrap()
    }

    #[test]
    fn separable_toy_reaches_high_auc() {
        let data = toy(300, 1);
        // oracle: the best single threshold on the informative column is perfect
        let col = FeatureKind::Beta.index();
        let mut best_err = usize::MAX;
        for i in 0..data.n_rows() {
            let t = data.value(i, col);
            let err = (0..data.n_rows())
                .filter(|&j| ((data.value(j, col) > t) as u8) != data.labels()[j])
                .count();
            best_err = best_err.min(err);
        }
        assert_eq!(best_err, 0);

        let model = train_dvte(&data, &TrainConfig::default(), &CostTable::default()).unwrap();
        let scores: Vec<f64> = data.rows().map(|r| model.predict(r).unwrap()).collect();
        assert!(auc(&scores, data.labels()) >= 0.99);
        match &model.trees[0] {
            AxisNode::Internal { feature, .. } => assert_eq!(*feature, FeatureKind::Beta),
            _ => panic!("first stump did not split"),
        }
    }

    #[test]
    fn huge_c_uses_only_cheapest_feature() {
        let data = toy(300, 2);
        let config = TrainConfig {
            c: 1e6,
            ..Default::default()
        };
        let model = train_dvte(&data, &config, &CostTable::default()).unwrap();
        let mut splits = 0;
        for t in &model.trees {
            t.visit(&mut |n, _| {
                if let AxisNode::Internal { feature, .. } = n {
                    assert_eq!(*feature, FeatureKind::LineLength);
                    splits += 1;
                }
            });
        }
        assert!(splits > 0);
    }

    #[test]
    fn depths_follow_schedule_and_training_is_deterministic() {
        let data = toy(400, 3);
        let config = TrainConfig::default();
        let a = train_dvte(&data, &config, &CostTable::default()).unwrap();
        let b = train_dvte(&data, &config, &CostTable::default()).unwrap();
        assert_eq!(a, b);
        for (t, &d) in a.trees.iter().zip(&a.depth_schedule) {
            assert!(t.depth() <= d);
        }
    }

    #[test]
    fn rejects_bad_training_input() {
        let data = toy(100, 4);
        let single = data.subset(&(0..100).filter(|i| i % 3 != 0).collect::<Vec<_>>());
        assert!(matches!(
            train_dvte(&single, &TrainConfig::default(), &CostTable::default()),
            Err(Error::SingleClass)
        ));
        let mut rows: Vec<Vec<f64>> = data.rows().map(|r| r.to_vec()).collect();
        rows[5][2] = f64::NAN;
        let nan = Dataset::from_rows(&rows, data.labels().to_vec(), 1).unwrap();
        assert!(matches!(
            train_dvte(&nan, &TrainConfig::default(), &CostTable::default()),
            Err(Error::NonFinite { row: 5, column: 2 })
        ));
    }

    #[test]
    fn empty_and_stump_predictions() {
        let empty = AxisEnsemble {
            trees: vec![],
            depth_schedule: vec![],
            learning_rate: 0.3,
            base_score: -1.2,
            channels: 1,
        };
        let row = vec![0.0; N_FEATURES];
        assert_eq!(empty.predict(&row).unwrap(), sigmoid(-1.2));
        assert!(empty.predict(&[0.0; 3]).is_err());

        let stump = AxisEnsemble {
            trees: vec![AxisNode::split(
                FeatureKind::LineLength,
                0,
                0.5,
                AxisNode::leaf(0.8),
                AxisNode::leaf(-0.4),
            )],
            depth_schedule: vec![1],
            ..empty
        };
        assert_eq!(stump.predict(&row).unwrap(), sigmoid(-1.2 + 0.3 * 0.8));
    }

    #[test]
    fn path_costs() {
        let costs = CostTable::default();
        let row = vec![0.0; N_FEATURES];
        let stump = AxisNode::split(FeatureKind::LineLength, 0, 1.0, AxisNode::leaf(1.0), AxisNode::leaf(0.0));
        let c = path_cost(&stump, &row, &costs);
        assert_eq!((c.power_nw, c.latency_s), (7.4, 0.25));

        let two = AxisNode::split(
            FeatureKind::Delta,
            0,
            1.0,
            AxisNode::split(FeatureKind::Beta, 0, 1.0, AxisNode::leaf(1.0), AxisNode::leaf(0.0)),
            AxisNode::leaf(0.0),
        );
        let c = path_cost(&two, &row, &costs);
        assert!((c.power_nw - 501.2).abs() < 1e-9);
        assert_eq!(c.latency_s, 1.25);

        let var = AxisNode::split(
            FeatureKind::Variance,
            0,
            1.0,
            AxisNode::split(FeatureKind::Variance, 0, 2.0, AxisNode::leaf(1.0), AxisNode::leaf(0.0)),
            AxisNode::leaf(0.0),
        );
        let c = path_cost(&var, &row, &costs);
        assert_eq!((c.power_nw, c.latency_s), (21.6, 0.5));
    }
}

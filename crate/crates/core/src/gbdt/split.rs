use std::collections::BTreeSet;

use crate::dataset::Dataset;
use crate::features::{column_parts, FeatureKind, StandardizedCosts};

/// Quantile-binned copy of a training set. Value `v` of column `c` falls in
/// bin `b` iff `cuts[c][b-1] < v <= cuts[c][b]`; a split at cut `b` sends
/// bins `0..=b` left.
#[derive(Debug, Clone)]
pub struct BinnedData {
    cuts: Vec<Vec<f64>>,
    bins: Vec<Vec<u16>>,
    n_rows: usize,
}

impl BinnedData {
    pub fn new(data: &Dataset, max_bins: usize) -> Self {
        let n = data.n_rows();
        let max_bins = max_bins.clamp(2, u16::MAX as usize);
        let mut cuts = Vec::with_capacity(data.n_cols());
        let mut bins = Vec::with_capacity(data.n_cols());
        for col in 0..data.n_cols() {
            let mut vals: Vec<f64> = (0..n).map(|i| data.value(i, col)).collect();
            vals.sort_by(f64::total_cmp);
            let mut c: Vec<f64> = (1..max_bins)
                .map(|k| vals[((k * n) / max_bins).min(n - 1)])
                .collect();
            c.dedup();
            // a cut at the maximum leaves the right side empty
            if c.last() == vals.last() {
                c.pop();
            }
            let b = (0..n)
                .map(|i| {
                    let v = data.value(i, col);
                    c.partition_point(|&cut| cut < v) as u16
                })
                .collect();
            cuts.push(c);
            bins.push(b);
        }
        BinnedData {
            cuts,
            bins,
            n_rows: n,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.cuts.len()
    }

    pub fn cuts(&self, col: usize) -> &[f64] {
        &self.cuts[col]
    }

    pub fn goes_left(&self, row: usize, col: usize, cut: usize) -> bool {
        self.bins[col][row] as usize <= cut
    }
}

/// Everything the split search needs besides the node's samples.
#[derive(Debug, Clone, Copy)]
pub struct SplitContext<'a> {
    pub c: f64,
    pub costs: &'a StandardizedCosts,
    pub lambda: f64,
    pub min_samples_leaf: usize,
    /// Rows in the whole training set; gains and penalties are per-row means.
    pub n_total: usize,
    /// `(feature, channel)` pairs already extracted above this node.
    pub on_path: &'a BTreeSet<(FeatureKind, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDecision {
    pub column: usize,
    pub feature: FeatureKind,
    pub channel: usize,
    pub cut_index: usize,
    pub threshold: f64,
    /// Loss reduction, averaged over all training rows.
    pub gain: f64,
    /// `gain - C * node_fraction * cost`, the quantity maximized.
    pub regularized_gain: f64,
}

/// Newton loss-reduction score of a node with gradient/hessian sums.
pub fn node_score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

/// Best `(feature, channel, threshold)` by regularized gain, or `None` when
/// nothing beats zero. Ties go to the cheaper feature, then the lower
/// feature index, then the lower channel, then the lower threshold.
pub fn find_best_split(
    data: &BinnedData,
    samples: &[usize],
    grad: &[f64],
    hess: &[f64],
    ctx: &SplitContext<'_>,
) -> Option<SplitDecision> {
    let n_node = samples.len();
    if n_node < 2 * ctx.min_samples_leaf.max(1) {
        return None;
    }
    let (g_sum, h_sum) = samples
        .iter()
        .fold((0.0, 0.0), |(g, h), &i| (g + grad[i], h + hess[i]));
    let parent = node_score(g_sum, h_sum, ctx.lambda);
    let frac = n_node as f64 / ctx.n_total as f64;
    let min_leaf = ctx.min_samples_leaf.max(1);

    let mut best: Option<(SplitDecision, f64)> = None;
    let mut hist_g = Vec::new();
    let mut hist_h = Vec::new();
    let mut hist_n = Vec::new();

    for col in 0..data.n_cols() {
        let cuts = data.cuts(col);
        if cuts.is_empty() {
            continue;
        }
        let (channel, feature) = column_parts(col);
        let cost = ctx.costs.excess(feature);
        let penalty = if ctx.on_path.contains(&(feature, channel)) {
            0.0
        } else {
            ctx.c * frac * cost
        };

        let nb = cuts.len() + 1;
        hist_g.clear();
        hist_g.resize(nb, 0.0);
        hist_h.clear();
        hist_h.resize(nb, 0.0);
        hist_n.clear();
        hist_n.resize(nb, 0usize);
        let bins = &data.bins[col];
        for &i in samples {
            let b = bins[i] as usize;
            hist_g[b] += grad[i];
            hist_h[b] += hess[i];
            hist_n[b] += 1;
        }

        let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
        for cut in 0..cuts.len() {
            gl += hist_g[cut];
            hl += hist_h[cut];
            nl += hist_n[cut];
            let nr = n_node - nl;
            if nl < min_leaf {
                continue;
            }
            if nr < min_leaf {
                break;
            }
            let gain = 0.5
                * (node_score(gl, hl, ctx.lambda) + node_score(g_sum - gl, h_sum - hl, ctx.lambda)
                    - parent)
                / ctx.n_total as f64;
            let reg = gain - penalty;
            let better = match &best {
                None => true,
                Some((b, b_cost)) => {
                    reg > b.regularized_gain
                        || (reg == b.regularized_gain
                            && (cost, feature.index(), channel)
                                < (*b_cost, b.feature.index(), b.channel))
                }
            };
            if better {
                best = Some((
                    SplitDecision {
                        column: col,
                        feature,
                        channel,
                        cut_index: cut,
                        threshold: cuts[cut],
                        gain,
                        regularized_gain: reg,
                    },
                    cost,
                ));
            }
        }
    }
    best.map(|(b, _)| b).filter(|b| b.regularized_gain > 0.0)
}

//! Detection metrics, block-wise chronological cross-validation, the
//! energy-area figure of merit and regularization sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::features::{
    column_parts, CostTable, FeatureKind, FeatureTable, FIR_TAPS, N_FEATURES,
};
use crate::gbdt::{train_dvte, AxisEnsemble, AxisNode, TrainConfig};
use crate::model_io::Model;
use crate::oblique::{predict_hard, prune, share_weights, train_oblique, ObliqueConfig, ObliqueTree};
use crate::quant::{model_size_bytes, quantize_fixed_point};
use crate::runtime::{oblique_inference_cost, ParallelScheme};
use crate::signals::{Recording, WindowLen, TICK_S};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    pub balanced_accuracy: f64,
    pub false_alarms_per_hour: f64,
}

/// Confusion counts plus the false-alarm bookkeeping; poolable across folds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    /// Rising decision edges on label-0 ticks.
    pub false_alarms: usize,
    pub negative_s: f64,
}

impl Confusion {
    pub fn from_ticks(decisions: &[bool], labels: &[u8], tick_s: f64) -> Self {
        let mut c = Confusion::default();
        let mut prev = false;
        for (&d, &l) in decisions.iter().zip(labels) {
            match (d, l == 1) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
            if l == 0 {
                c.negative_s += tick_s;
                if d && !prev {
                    c.false_alarms += 1;
                }
            }
            prev = d;
        }
        c
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
        self.false_alarms += other.false_alarms;
        self.negative_s += other.negative_s;
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |a: usize, b: usize| if a + b > 0 { a as f64 / (a + b) as f64 } else { 0.0 };
        let sensitivity = ratio(self.tp, self.fn_);
        let specificity = ratio(self.tn, self.fp);
        let precision = ratio(self.tp, self.fp);
        let f1 = if precision + sensitivity > 0.0 {
            2.0 * precision * sensitivity / (precision + sensitivity)
        } else {
            0.0
        };
        Metrics {
            sensitivity,
            specificity,
            precision,
            f1,
            balanced_accuracy: (sensitivity + specificity) / 2.0,
            false_alarms_per_hour: if self.negative_s > 0.0 {
                self.false_alarms as f64 * 3600.0 / self.negative_s
            } else {
                0.0
            },
        }
    }
}

pub fn confusion_metrics(decisions: &[bool], labels: &[u8], tick_s: f64) -> Result<Metrics> {
    if decisions.is_empty() || decisions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "need equal nonempty decision/label sequences, got {} and {}",
            decisions.len(),
            labels.len()
        )));
    }
    Ok(Confusion::from_ticks(decisions, labels, tick_s).metrics())
}

/// Energy-area figure of merit in J*mm^2 per sample.
pub fn ea_fom(power_per_channel_w: f64, area_per_channel_mm2: f64, sample_rate_hz: f64) -> Result<f64> {
    let ok = |v: f64| v > 0.0 && v.is_finite();
    if !(ok(power_per_channel_w) && ok(area_per_channel_mm2) && ok(sample_rate_hz)) {
        return Err(Error::invalid("power, area and sample rate must be positive"));
    }
    Ok(power_per_channel_w * area_per_channel_mm2 / sample_rate_hz)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvSplit {
    pub fold_id: usize,
    pub train_blocks: Vec<usize>,
    pub test_blocks: Vec<usize>,
    /// Sample span covered by the test blocks, end exclusive.
    pub test_range: (usize, usize),
}

/// Event-centred blocks: each spans from the midpoint of the gap before its
/// event to the midpoint of the gap after it.
pub fn event_blocks(rec: &Recording) -> Vec<(usize, usize)> {
    let events = rec.events();
    let mut blocks = Vec::with_capacity(events.len());
    for (i, &(on, _)) in events.iter().enumerate() {
        let start = if i == 0 { 0 } else { (events[i - 1].1 + on) / 2 };
        let end = match events.get(i + 1) {
            Some(&(next_on, _)) => (events[i].1 + next_on) / 2,
            None => rec.len(),
        };
        blocks.push((start, end));
    }
    blocks
}

/// Contiguous test groups of blocks, larger groups first; one fold per
/// event when there are fewer events than folds.
pub fn chronological_cv(rec: &Recording, folds: usize) -> Result<Vec<CvSplit>> {
    let blocks = event_blocks(rec);
    if blocks.len() < 2 {
        return Err(Error::invalid(format!(
            "cross-validation needs at least 2 events, found {}",
            blocks.len()
        )));
    }
    if folds < 2 {
        return Err(Error::invalid("cross-validation needs at least 2 folds"));
    }
    let k = folds.min(blocks.len());
    let (base, extra) = (blocks.len() / k, blocks.len() % k);
    let mut splits = Vec::with_capacity(k);
    let mut next = 0;
    for fold_id in 0..k {
        let size = base + usize::from(fold_id < extra);
        let test_blocks: Vec<usize> = (next..next + size).collect();
        next += size;
        splits.push(CvSplit {
            fold_id,
            train_blocks: (0..blocks.len()).filter(|b| !test_blocks.contains(b)).collect(),
            test_range: (blocks[test_blocks[0]].0, blocks[*test_blocks.last().unwrap()].1),
            test_blocks,
        });
    }
    Ok(splits)
}

/// Samples of history a feature row depends on.
pub fn lookback_samples(sample_rate_hz: f64) -> usize {
    WindowLen::Full.samples(sample_rate_hz) + FIR_TAPS
}

impl CvSplit {
    /// Test rows have their label sample inside the test span; training
    /// rows have their whole lookback outside it.
    pub fn row_indices(&self, end_samples: &[usize], lookback: usize) -> (Vec<usize>, Vec<usize>) {
        let (a, b) = self.test_range;
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &end) in end_samples.iter().enumerate() {
            let label_sample = end - 1;
            if label_sample >= a && label_sample < b {
                test.push(i);
            } else if end <= a || end.saturating_sub(lookback) >= b {
                train.push(i);
            }
        }
        (train, test)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dvte,
    Oblique,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dvte" => Ok(ModelKind::Dvte),
            "oblique" => Ok(ModelKind::Oblique),
            other => Err(Error::invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub dvte: TrainConfig,
    pub oblique: ObliqueConfig,
    pub costs: CostTable,
    pub folds: usize,
    /// Score oblique models after prune, share and quantize instead of as
    /// trained.
    pub compress_oblique: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            dvte: TrainConfig::default(),
            oblique: ObliqueConfig::default(),
            costs: CostTable::default(),
            folds: 5,
            compress_oblique: false,
        }
    }
}

/// Train, prune to `target_nnz`, share `k` weights and quantize.
pub fn compressed_oblique(data: &Dataset, config: &ObliqueConfig, costs: &CostTable) -> Result<ObliqueTree> {
    let tree = train_oblique(data, config, costs)?;
    let pruned = prune(&tree, data, config, costs, config.target_nnz, config.retrain_epochs)?;
    let (shared, _) = share_weights(&pruned, data, config, costs, config.k)?;
    quantize_fixed_point(&shared, config.frac_bits)
}

/// One model trained on a fold's training rows and scored on its test rows.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold_id: usize,
    pub confusion: Confusion,
    pub mean_power_nw: f64,
    pub mean_latency_s: f64,
    pub model_bytes: u64,
    pub model: Model,
}

fn ensemble_costs(e: &AxisEnsemble, rows: &[&[f64]], costs: &CostTable) -> (f64, f64) {
    let (mut p, mut l) = (0.0, 0.0);
    for r in rows {
        let c = e.path_cost(r, costs);
        p += c.power_nw;
        l += c.latency_s;
    }
    let n = rows.len().max(1) as f64;
    (p / n, l / n)
}

pub fn run_fold(
    table: &FeatureTable,
    split: &CvSplit,
    kind: ModelKind,
    c: f64,
    config: &SweepConfig,
    lookback: usize,
) -> Result<FoldResult> {
    let (train_idx, test_idx) = split.row_indices(&table.end_samples, lookback);
    let train = table.dataset.subset(&train_idx);
    let test = table.dataset.subset(&test_idx);
    let rows: Vec<&[f64]> = test.rows().collect();
    let (decisions, power, latency, bytes, model) = match kind {
        ModelKind::Dvte => {
            let cfg = TrainConfig { c, ..config.dvte.clone() };
            let e = train_dvte(&train, &cfg, &config.costs)?;
            let d = rows
                .iter()
                .map(|r| e.predict(r).map(|p| p >= 0.5))
                .collect::<Result<Vec<_>>>()?;
            let (p, l) = ensemble_costs(&e, &rows, &config.costs);
            let bytes = model_size_bytes(&e);
            (d, p, l, bytes, Model::Dvte(e))
        }
        ModelKind::Oblique => {
            let cfg = ObliqueConfig { c, ..config.oblique.clone() };
            let t = if config.compress_oblique {
                compressed_oblique(&train, &cfg, &config.costs)?
            } else {
                train_oblique(&train, &cfg, &config.costs)?
            };
            let scheme = ParallelScheme::single_path(t.depth);
            let (mut p, mut l) = (0.0, 0.0);
            let mut d = Vec::with_capacity(rows.len());
            for r in &rows {
                d.push(predict_hard(&t, r)? >= 0.0);
                let (pw, lat, _) = oblique_inference_cost(&t, &t.transform(r)?, &scheme, &config.costs);
                p += pw;
                l += lat;
            }
            let n = rows.len().max(1) as f64;
            let bytes = model_size_bytes(&t);
            (d, p / n, l / n, bytes, Model::Oblique(t))
        }
    };
    Ok(FoldResult {
        fold_id: split.fold_id,
        confusion: Confusion::from_ticks(&decisions, test.labels(), TICK_S),
        mean_power_nw: power,
        mean_latency_s: latency,
        model_bytes: bytes,
        model,
    })
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    /// Field-wise mean of the per-fold metrics.
    pub metrics: Metrics,
    /// Metrics of the confusion counts summed over folds.
    pub pooled: Metrics,
    pub folds: Vec<FoldResult>,
}

fn mean_metrics(all: &[Metrics]) -> Metrics {
    let n = all.len().max(1) as f64;
    let avg = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
    Metrics {
        sensitivity: avg(|m| m.sensitivity),
        specificity: avg(|m| m.specificity),
        precision: avg(|m| m.precision),
        f1: avg(|m| m.f1),
        balanced_accuracy: avg(|m| m.balanced_accuracy),
        false_alarms_per_hour: avg(|m| m.false_alarms_per_hour),
    }
}

/// Full cross-validation of one model kind at one `C`.
pub fn cross_validate(
    rec: &Recording,
    table: &FeatureTable,
    kind: ModelKind,
    c: f64,
    config: &SweepConfig,
) -> Result<CvOutcome> {
    let splits = chronological_cv(rec, config.folds)?;
    let lookback = lookback_samples(rec.sample_rate_hz());
    let folds = splits
        .iter()
        .map(|s| run_fold(table, s, kind, c, config, lookback))
        .collect::<Result<Vec<_>>>()?;
    let mut pooled = Confusion::default();
    for f in &folds {
        pooled.add(&f.confusion);
    }
    let per_fold: Vec<Metrics> = folds.iter().map(|f| f.confusion.metrics()).collect();
    Ok(CvOutcome {
        metrics: mean_metrics(&per_fold),
        pooled: pooled.metrics(),
        folds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub mean_power_nw: f64,
    pub mean_latency_s: f64,
    pub model_bytes: f64,
    pub false_alarms_per_hour: f64,
}

/// Cross-validates every `C` in turn; fold costs and sizes are averaged.
pub fn sweep_regularization(
    rec: &Recording,
    kind: ModelKind,
    c_values: &[f64],
    config: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    if c_values.is_empty() {
        return Err(Error::invalid("C list is empty"));
    }
    if c_values.windows(2).any(|w| w[1] < w[0]) || c_values.iter().any(|&c| !(c >= 0.0)) {
        return Err(Error::invalid("C values must be non-negative and ascending"));
    }
    let table = FeatureTable::from_recording(rec)?;
    let mut rows = Vec::with_capacity(c_values.len());
    for &c in c_values {
        let out = cross_validate(rec, &table, kind, c, config).map_err(|e| Error::Sweep {
            c,
            source: Box::new(e),
        })?;
        let n = out.folds.len() as f64;
        let mean = |f: &dyn Fn(&FoldResult) -> f64| out.folds.iter().map(f).sum::<f64>() / n;
        rows.push(SweepRow {
            c,
            f1: out.metrics.f1,
            sensitivity: out.metrics.sensitivity,
            specificity: out.metrics.specificity,
            mean_power_nw: mean(&|f| f.mean_power_nw),
            mean_latency_s: mean(&|f| f.mean_latency_s),
            model_bytes: mean(&|f| f.model_bytes as f64),
            false_alarms_per_hour: out.metrics.false_alarms_per_hour,
        });
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: &str =
    "C,f1,sensitivity,specificity,mean_power_nw,mean_latency_s,model_bytes";

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.c, r.f1, r.sensitivity, r.specificity, r.mean_power_nw, r.mean_latency_s, r.model_bytes
        );
    }
    out
}

/// Index of the sweep point farthest from the chord joining the first and
/// last points of the (power, F1) curve, both axes scaled to unit range.
/// Curves with fewer than three points, or no bend, give index 0.
pub fn knee_index(rows: &[SweepRow]) -> usize {
    if rows.len() < 3 {
        return 0;
    }
    let span = |f: &dyn Fn(&SweepRow) -> f64| {
        let lo = rows.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        (lo, if hi > lo { hi - lo } else { 1.0 })
    };
    let (p0, ps) = span(&|r| r.mean_power_nw);
    let (f0, fs) = span(&|r| r.f1);
    let pt = |r: &SweepRow| ((r.mean_power_nw - p0) / ps, (r.f1 - f0) / fs);
    let (ax, ay) = pt(&rows[0]);
    let (bx, by) = pt(&rows[rows.len() - 1]);
    let (dx, dy) = (bx - ax, by - ay);
    let norm = (dx * dx + dy * dy).sqrt();
    if norm == 0.0 {
        return 0;
    }
    let mut best = (0, 0.0);
    for (i, r) in rows.iter().enumerate() {
        let (x, y) = pt(r);
        let d = ((x - ax) * dy - (y - ay) * dx).abs() / norm;
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRow {
    pub feature: FeatureKind,
    pub channel: usize,
    /// Nodes (DVTE) or nonzero weights (oblique) reading this pair.
    pub count: usize,
    /// Expected extractions per 0.25 s window; DVTE only.
    pub expected_per_window: Option<f64>,
}

fn occupancy_ticks(kind: FeatureKind) -> f64 {
    kind.window().ticks() as f64
}

/// Per `(feature, channel)`: how often the model reads it. For DVTE the
/// expected extractions per window weight each node by the training
/// fraction reaching it times the ticks it occupies, normalized per tree,
/// so each tree that splits at all contributes exactly one extraction.
pub fn feature_usage_report(model: &Model) -> Vec<UsageRow> {
    let mut usage: BTreeMap<(FeatureKind, usize), (usize, f64)> = BTreeMap::new();
    match model {
        Model::Dvte(e) => {
            for tree in &e.trees {
                let mut nodes = Vec::new();
                tree.visit(&mut |n, _| {
                    if let AxisNode::Internal {
                        feature,
                        channel,
                        cover,
                        ..
                    } = n
                    {
                        nodes.push((*feature, *channel, cover * occupancy_ticks(*feature)));
                    }
                });
                let total: f64 = nodes.iter().map(|n| n.2).sum();
                for (f, ch, w) in nodes {
                    let entry = usage.entry((f, ch)).or_default();
                    entry.0 += 1;
                    if total > 0.0 {
                        entry.1 += w / total;
                    }
                }
            }
        }
        Model::Oblique(t) => {
            for node in &t.nodes {
                for col in node.support() {
                    let (ch, f) = column_parts(col);
                    usage.entry((f, ch)).or_default().0 += 1;
                }
            }
        }
    }
    let dvte = matches!(model, Model::Dvte(_));
    usage
        .into_iter()
        .map(|((feature, channel), (count, expected))| UsageRow {
            feature,
            channel,
            count,
            expected_per_window: dvte.then_some(expected),
        })
        .collect()
}

/// Usage summed over channels, indexed by feature.
pub fn usage_by_feature(rows: &[UsageRow]) -> [f64; N_FEATURES] {
    let mut out = [0.0; N_FEATURES];
    for r in rows {
        out[r.feature.index()] += r.expected_per_window.unwrap_or(r.count as f64);
    }
    out
}

/// Rank AUC with ties counted half.
pub fn auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if labels[k] == 1 {
                rank_sum += avg;
            }
        }
        i = j + 1;
    }
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return 0.5;
    }
    (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{generate_synthetic_recording, SyntheticParams};

    #[test]
    fn metric_examples() {
        let y = [1, 1, 0, 0, 1, 0];
        let perfect: Vec<bool> = y.iter().map(|&l| l == 1).collect();
        let m = confusion_metrics(&perfect, &y, 0.25).unwrap();
        assert_eq!((m.sensitivity, m.specificity, m.f1, m.false_alarms_per_hour), (1.0, 1.0, 1.0, 0.0));

        let m = confusion_metrics(&[false; 6], &y, 0.25).unwrap();
        assert_eq!((m.sensitivity, m.f1), (0.0, 0.0));

        let mut d = vec![true; 8];
        d.extend([false; 2]);
        d.push(true);
        d.extend([false; 89]);
        let mut l = vec![1u8; 10];
        l.extend([0u8; 90]);
        let m = confusion_metrics(&d, &l, 0.25).unwrap();
        assert!((m.sensitivity - 0.8).abs() < 1e-12);
        assert!((m.precision - 8.0 / 9.0).abs() < 1e-12);
        let f1 = 2.0 * (8.0 / 9.0 * 0.8) / (8.0 / 9.0 + 0.8);
        assert!((m.f1 - f1).abs() < 1e-12);
        assert!((m.f1 - 0.842).abs() < 1e-3);
        assert!((m.balanced_accuracy - (0.8 + 89.0 / 90.0) / 2.0).abs() < 1e-12);
        // one rising edge over 90 negative ticks of 0.25 s
        assert!((m.false_alarms_per_hour - 3600.0 / 22.5).abs() < 1e-9);

        assert!(confusion_metrics(&[], &[], 0.25).is_err());
    }

    #[test]
    fn fom_examples() {
        let jetcas = ea_fom(1.29e-9 * 5000.0, 0.031, 5000.0).unwrap();
        assert!((jetcas * 1e12 - 40.3).abs() / 40.3 < 0.02);
        let ours = ea_fom(87.5e-9, 0.01, 500.0).unwrap();
        assert!((ours * 1e12 - 1.75).abs() < 1e-9);
        let doubled = ea_fom(87.5e-9, 0.01, 1000.0).unwrap();
        assert!((doubled * 2.0 - ours).abs() < 1e-24);
        assert!(ea_fom(0.0, 1.0, 1.0).is_err());
        assert!(ea_fom(1.0, 1.0, -5.0).is_err());
    }

    fn recording(n_events: usize) -> Recording {
        generate_synthetic_recording(&SyntheticParams {
            duration_s: 40.0 * n_events as f64,
            n_events,
            event_len_s: 10.0,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn fold_allocation() {
        let six = chronological_cv(&recording(6), 5).unwrap();
        let sizes: Vec<usize> = six.iter().map(|s| s.test_blocks.len()).collect();
        assert_eq!(sizes, vec![2, 1, 1, 1, 1]);
        let three = chronological_cv(&recording(3), 5).unwrap();
        assert_eq!(three.len(), 3);
        assert!(three.iter().all(|s| s.test_blocks.len() == 1));
        assert!(chronological_cv(&recording(1), 5).is_err());
    }

    #[test]
    fn folds_partition_blocks_without_leakage() {
        let rec = recording(6);
        let blocks = event_blocks(&rec);
        assert_eq!(blocks[0].0, 0);
        assert_eq!(blocks.last().unwrap().1, rec.len());
        for w in blocks.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        let splits = chronological_cv(&rec, 5).unwrap();
        let mut all: Vec<usize> = splits.iter().flat_map(|s| s.test_blocks.clone()).collect();
        all.sort();
        assert_eq!(all, (0..6).collect::<Vec<_>>());

        let table = FeatureTable::from_recording(&rec).unwrap();
        let lookback = lookback_samples(rec.sample_rate_hz());
        for s in &splits {
            let (train, test) = s.row_indices(&table.end_samples, lookback);
            let (a, b) = s.test_range;
            for &i in &train {
                let e = table.end_samples[i];
                assert!(e <= a || e - lookback >= b, "train row {i} overlaps the test span");
                assert!(!test.contains(&i));
            }
            for &i in &test {
                assert!(table.end_samples[i] > a && table.end_samples[i] <= b);
            }
            assert!(!test.is_empty() && !train.is_empty());
        }
    }

    #[test]
    fn knee_of_an_elbow() {
        let row = |c: f64, p: f64, f1: f64| SweepRow {
            c,
            f1,
            sensitivity: 0.0,
            specificity: 0.0,
            mean_power_nw: p,
            mean_latency_s: 0.0,
            model_bytes: 0.0,
            false_alarms_per_hour: 0.0,
        };
        let rows = vec![row(0.0, 100.0, 0.95), row(0.1, 20.0, 0.93), row(1.0, 10.0, 0.5)];
        assert_eq!(knee_index(&rows), 1);
        assert_eq!(knee_index(&rows[..2]), 0);
        let csv = sweep_to_csv(&rows);
        assert!(csv.starts_with("C,f1,sensitivity,specificity,mean_power_nw,mean_latency_s,model_bytes\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn stump_usage_is_one_line_length_per_window() {
        let e = AxisEnsemble {
            trees: vec![AxisNode::split(
                FeatureKind::LineLength,
                0,
                0.5,
                AxisNode::leaf(1.0),
                AxisNode::leaf(-1.0),
            )],
            depth_schedule: vec![1],
            learning_rate: 0.3,
            base_score: 0.0,
            channels: 1,
        };
        let rows = feature_usage_report(&Model::Dvte(e));
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].feature, FeatureKind::LineLength);
        assert_eq!(rows[0].expected_per_window, Some(1.0));
    }

    #[test]
    fn auc_matches_pair_counting() {
        let s = [0.1, 0.4, 0.35, 0.8, 0.4];
        let y = [0, 0, 1, 1, 1];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..5 {
            for j in 0..5 {
                if y[i] == 1 && y[j] == 0 {
                    pairs += 1.0;
                    wins += if s[i] > s[j] { 1.0 } else if s[i] == s[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((auc(&s, &y) - wins / pairs).abs() < 1e-12);
    }
}

//! Tick-level streaming simulation of both model families.
//!
//! Every 0.25 s tick, each DVTE tree spends one tick on its current node. A
//! node reads a feature whose window can span several ticks; the comparison
//! resolves on the last of them using the window that ends there. A tree
//! that reaches a leaf latches the leaf value and restarts at its root on
//! the following tick, so the ensemble always combines the most recent
//! output of every tree. The oblique simulator walks groups of tree layers
//! instead, evaluating every reachable node of a group at once.

use std::collections::BTreeSet;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{column_parts, CostTable, FeatureKind, FilterBank, StreamingExtractor};
use crate::gbdt::{sigmoid, AxisEnsemble, AxisNode};
use crate::oblique::ObliqueTree;
use crate::signals::{tick_grid, window_stream, Recording, TICK_S};

/// Detections later than this after an onset count as misses.
pub const MISS_WINDOW_S: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: usize,
    pub time_s: f64,
    pub label: u8,
    pub score: f64,
    pub decision: bool,
    /// Latched output of each tree (one entry for an oblique tree).
    pub per_tree_output: Vec<f64>,
    /// Extractions started this tick.
    pub extracted: Vec<(FeatureKind, usize)>,
    pub power_nw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceReport {
    pub ticks: Vec<TickRecord>,
    /// Extraction power summed over the trace, divided by tick count.
    pub mean_power_nw: f64,
    /// Mean power of one complete inference (summed over DVTE trees).
    pub mean_inference_power_nw: f64,
    /// Mean time of one complete inference (averaged over DVTE trees).
    pub mean_latency_s: f64,
    pub onsets_s: Vec<f64>,
    pub detection_latencies_s: Vec<Option<f64>>,
}

impl TraceReport {
    fn finish(ticks: Vec<TickRecord>, rec: &Recording, power: f64, latency: f64) -> Self {
        let total: f64 = ticks.iter().map(|t| t.power_nw).sum();
        let onsets_s: Vec<f64> = rec
            .onsets()
            .iter()
            .map(|&n| n as f64 / rec.sample_rate_hz())
            .collect();
        let mut report = TraceReport {
            mean_power_nw: total / ticks.len().max(1) as f64,
            mean_inference_power_nw: power,
            mean_latency_s: latency,
            ticks,
            detection_latencies_s: Vec::new(),
            onsets_s,
        };
        report.detection_latencies_s = detection_latency(&report, &report.onsets_s, 1);
        report
    }

    pub fn decisions(&self) -> Vec<bool> {
        self.ticks.iter().map(|t| t.decision).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.ticks.iter().map(|t| t.label).collect()
    }

    /// `tick,time_s,score,decision,power_nw_cum` with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tick,time_s,score,decision,power_nw_cum\n");
        let mut cum = 0.0;
        for t in &self.ticks {
            cum += t.power_nw;
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                t.tick, t.time_s, t.score, t.decision as u8, cum
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::model_io::write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

/// Ticks a feature with this latency keeps its node busy.
fn occupancy(latency_s: f64) -> usize {
    ((latency_s / TICK_S) - 1e-9).ceil().max(1.0) as usize
}

struct RunningMean {
    sum: f64,
    n: usize,
}

impl RunningMean {
    fn new() -> Self {
        RunningMean { sum: 0.0, n: 0 }
    }

    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

struct TreeRunner<'a> {
    root: &'a AxisNode,
    node: &'a AxisNode,
    remaining: usize,
    latched: f64,
    seen: BTreeSet<(FeatureKind, usize)>,
    path_power: f64,
    path_latency: f64,
    power: RunningMean,
    latency: RunningMean,
}

impl<'a> TreeRunner<'a> {
    fn new(root: &'a AxisNode) -> Self {
        TreeRunner {
            root,
            node: root,
            remaining: 0,
            latched: 0.0,
            seen: BTreeSet::new(),
            path_power: 0.0,
            path_latency: 0.0,
            power: RunningMean::new(),
            latency: RunningMean::new(),
        }
    }

    fn tick(
        &mut self,
        ex: &StreamingExtractor,
        costs: &CostTable,
        record: &mut TickRecord,
    ) -> Result<()> {
        let (feature, channel, threshold, left, right) = match self.node {
            AxisNode::Leaf { weight, .. } => {
                // a root that is a leaf needs no features at all
                self.latched = *weight;
                return Ok(());
            }
            AxisNode::Internal {
                feature,
                channel,
                threshold,
                left,
                right,
                ..
            } => (*feature, *channel, *threshold, left, right),
        };
        if self.remaining == 0 {
            self.remaining = occupancy(costs.latency_s(feature));
            self.path_latency += costs.latency_s(feature);
            if self.seen.insert((feature, channel)) {
                let p = costs.power_nw(feature);
                self.path_power += p;
                record.power_nw += p;
                record.extracted.push((feature, channel));
            }
        }
        self.remaining -= 1;
        if self.remaining > 0 {
            return Ok(());
        }
        let next: &AxisNode = if ex.value(channel, feature)? <= threshold {
            left
        } else {
            right
        };
        match next {
            AxisNode::Leaf { weight, .. } => {
                self.latched = *weight;
                self.power.push(self.path_power);
                self.latency.push(self.path_latency);
                self.node = self.root;
                self.seen.clear();
                self.path_power = 0.0;
                self.path_latency = 0.0;
            }
            internal => self.node = internal,
        }
        Ok(())
    }
}

fn check_channels(model_channels: usize, rec: &Recording) -> Result<()> {
    if model_channels != rec.channels() {
        return Err(Error::DimensionMismatch {
            expected: model_channels,
            got: rec.channels(),
        });
    }
    Ok(())
}

/// Streams `rec` through the ensemble with stale-output semantics.
pub fn simulate_stream_dvte(
    ensemble: &AxisEnsemble,
    rec: &Recording,
    costs: &CostTable,
) -> Result<TraceReport> {
    check_channels(ensemble.channels, rec)?;
    let bank = FilterBank::new(rec.sample_rate_hz())?;
    let mut ex = StreamingExtractor::new(&bank, rec.channels());
    let mut runners: Vec<TreeRunner<'_>> = ensemble.trees.iter().map(TreeRunner::new).collect();
    let mut ticks = Vec::with_capacity(tick_grid(rec).2);
    for g in window_stream(rec)? {
        ex.advance_to(rec, g.end_sample);
        let mut record = TickRecord {
            tick: g.tick,
            time_s: g.time_s(),
            label: g.label(),
            score: 0.0,
            decision: false,
            per_tree_output: Vec::with_capacity(runners.len()),
            extracted: Vec::new(),
            power_nw: 0.0,
        };
        for r in &mut runners {
            r.tick(&ex, costs, &mut record)?;
            record.per_tree_output.push(r.latched);
        }
        let raw = ensemble.base_score
            + ensemble.learning_rate * record.per_tree_output.iter().sum::<f64>();
        record.score = sigmoid(raw);
        record.decision = record.score >= 0.5;
        ticks.push(record);
    }
    let power = runners.iter().map(|r| r.power.mean()).sum();
    let latency = if runners.is_empty() {
        0.0
    } else {
        runners.iter().map(|r| r.latency.mean()).sum::<f64>() / runners.len() as f64
    };
    Ok(TraceReport::finish(ticks, rec, power, latency))
}

/// Partition of tree layers (1 = root layer) into groups evaluated one
/// after another; all nodes of a group run concurrently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParallelScheme {
    pub groups: Vec<Vec<usize>>,
}

impl ParallelScheme {
    pub fn single_path(depth: usize) -> Self {
        ParallelScheme {
            groups: (1..=depth).map(|l| vec![l]).collect(),
        }
    }

    pub fn all_parallel(depth: usize) -> Self {
        ParallelScheme {
            groups: if depth == 0 {
                vec![]
            } else {
                vec![(1..=depth).collect()]
            },
        }
    }

    /// `single`, `full`, or `layers:1-2,3-4` (ranges or single layers).
    pub fn parse(text: &str, depth: usize) -> Result<Self> {
        let scheme = match text.trim() {
            "single" => ParallelScheme::single_path(depth),
            "full" => ParallelScheme::all_parallel(depth),
            s => {
                let body = s.strip_prefix("layers:").ok_or_else(|| {
                    Error::invalid(format!("unknown scheme {s:?}; use single, full or layers:<groups>"))
                })?;
                let mut groups = Vec::new();
                for part in body.split(',') {
                    let bad = || Error::invalid(format!("bad layer group {part:?}"));
                    let (a, b) = match part.split_once('-') {
                        Some((a, b)) => (a, b),
                        None => (part, part),
                    };
                    let a: usize = a.trim().parse().map_err(|_| bad())?;
                    let b: usize = b.trim().parse().map_err(|_| bad())?;
                    if a == 0 || b < a {
                        return Err(bad());
                    }
                    groups.push((a..=b).collect());
                }
                ParallelScheme { groups }
            }
        };
        scheme.validate(depth)?;
        Ok(scheme)
    }

    pub fn validate(&self, depth: usize) -> Result<()> {
        let flat: Vec<usize> = self.groups.iter().flatten().copied().collect();
        if self.groups.iter().any(Vec::is_empty) || flat != (1..=depth).collect::<Vec<_>>() {
            return Err(Error::invalid(format!(
                "scheme {self} does not cover layers 1..={depth} in order"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ParallelScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "layers:")?;
        for (i, g) in self.groups.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            match (g.first(), g.last()) {
                (Some(a), Some(b)) if a == b => write!(f, "{a}")?,
                (Some(a), Some(b)) => write!(f, "{a}-{b}")?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// Nodes of the layers in `group` that lie below heap node `pos`.
fn group_candidates(tree: &ObliqueTree, pos: usize, group: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut frontier = vec![pos];
    for _ in group {
        let mut next = Vec::new();
        for &n in &frontier {
            if n < tree.internal_count() {
                out.push(n);
                next.push(2 * n + 1);
                next.push(2 * n + 2);
            }
        }
        frontier = next;
    }
    out
}

/// Power and extraction log of one group started at `pos`: every reachable
/// node of the group's layers is evaluated, on the realized path or not.
pub fn group_cost(
    tree: &ObliqueTree,
    pos: usize,
    group: &[usize],
    costs: &CostTable,
) -> (f64, Vec<(FeatureKind, usize)>) {
    let mut power = 0.0;
    let mut log = Vec::new();
    for n in group_candidates(tree, pos, group) {
        power += tree.node_cost(n, costs).0;
        for col in tree.nodes[n].support() {
            let (ch, kind) = column_parts(col);
            log.push((kind, ch));
        }
    }
    (power, log)
}

fn child(tree: &ObliqueTree, pos: usize, x: &[f64]) -> usize {
    if tree.nodes[pos].logit(x) >= 0.0 {
        2 * pos + 1
    } else {
        2 * pos + 2
    }
}

/// Routes `x` through one group from `pos`. The group resolves once the
/// nodes on the realized path are done, so its dwell is the slowest of
/// those, at least one tick.
pub fn route_group(
    tree: &ObliqueTree,
    mut pos: usize,
    group: &[usize],
    x: &[f64],
    costs: &CostTable,
) -> (usize, f64) {
    let mut dwell = TICK_S;
    for _ in group {
        if pos >= tree.internal_count() {
            break;
        }
        dwell = dwell.max(tree.node_cost(pos, costs).1);
        pos = child(tree, pos, x);
    }
    (pos, dwell)
}

/// Power, latency and leaf of one complete inference on a transformed row
/// when every group sees the same features.
pub fn oblique_inference_cost(
    tree: &ObliqueTree,
    x: &[f64],
    scheme: &ParallelScheme,
    costs: &CostTable,
) -> (f64, f64, usize) {
    let (mut power, mut latency, mut pos) = (0.0, 0.0, 0);
    for group in &scheme.groups {
        power += group_cost(tree, pos, group, costs).0;
        let (next, dwell) = route_group(tree, pos, group, x, costs);
        latency += dwell;
        pos = next;
    }
    (power, latency, pos - tree.internal_count())
}

/// Progress through the current group of a streaming oblique inference.
struct GroupState {
    group: usize,
    /// Layers of the group already routed.
    routed: usize,
    elapsed: usize,
    dwell: f64,
}

/// Streams `rec` through an oblique tree evaluated group by group. Inside a
/// group a node resolves `ceil(latency / 0.25)` ticks after the group
/// starts and routes on the window ending at the tick it is consulted.
pub fn simulate_stream_oblique(
    tree: &ObliqueTree,
    rec: &Recording,
    scheme: &ParallelScheme,
    costs: &CostTable,
) -> Result<TraceReport> {
    scheme.validate(tree.depth)?;
    check_channels(tree.channels, rec)?;
    let bank = FilterBank::new(rec.sample_rate_hz())?;
    let mut ex = StreamingExtractor::new(&bank, rec.channels());
    let mut ticks = Vec::with_capacity(tick_grid(rec).2);
    let mut pos = 0usize;
    let mut state: Option<GroupState> = None;
    let mut next_group = 0usize;
    let mut latched = tree.leaves[0];
    let (mut inf_power, mut inf_latency) = (0.0, 0.0);
    let mut power_mean = RunningMean::new();
    let mut latency_mean = RunningMean::new();
    let n_int = tree.internal_count();

    for g in window_stream(rec)? {
        ex.advance_to(rec, g.end_sample);
        let mut record = TickRecord {
            tick: g.tick,
            time_s: g.time_s(),
            label: g.label(),
            score: 0.0,
            decision: false,
            per_tree_output: Vec::with_capacity(1),
            extracted: Vec::new(),
            power_nw: 0.0,
        };
        if !scheme.groups.is_empty() {
            let st = state.get_or_insert_with(|| {
                let (p, log) = group_cost(tree, pos, &scheme.groups[next_group], costs);
                inf_power += p;
                record.power_nw += p;
                record.extracted = log;
                GroupState {
                    group: next_group,
                    routed: 0,
                    elapsed: 0,
                    dwell: TICK_S,
                }
            });
            st.elapsed += 1;
            let layers = scheme.groups[st.group].len();
            let mut x: Option<Vec<f64>> = None;
            while st.routed < layers && pos < n_int {
                let latency = tree.node_cost(pos, costs).1;
                if occupancy(latency) > st.elapsed {
                    break;
                }
                if x.is_none() {
                    x = Some(tree.transform(&ex.row()?)?);
                }
                st.dwell = st.dwell.max(latency);
                pos = child(tree, pos, x.as_deref().unwrap());
                st.routed += 1;
            }
            if st.routed == layers || pos >= n_int {
                inf_latency += st.dwell;
                next_group = st.group + 1;
                state = None;
                if next_group == scheme.groups.len() {
                    latched = tree.leaves[pos - n_int];
                    power_mean.push(inf_power);
                    latency_mean.push(inf_latency);
                    (pos, next_group, inf_power, inf_latency) = (0, 0, 0.0, 0.0);
                }
            }
        }
        record.per_tree_output.push(latched);
        record.score = sigmoid(latched);
        record.decision = record.score >= 0.5;
        ticks.push(record);
    }
    Ok(TraceReport::finish(
        ticks,
        rec,
        power_mean.mean(),
        latency_mean.mean(),
    ))
}

/// Per onset, the delay until the first tick at or after it that starts
/// `hold_ticks` consecutive positive decisions; `None` if that takes longer
/// than [`MISS_WINDOW_S`].
pub fn detection_latency(trace: &TraceReport, onsets_s: &[f64], hold_ticks: usize) -> Vec<Option<f64>> {
    let hold = hold_ticks.max(1);
    let ticks = &trace.ticks;
    onsets_s
        .iter()
        .map(|&onset| {
            let start = ticks.partition_point(|t| t.time_s < onset - 1e-9);
            (start..ticks.len())
                .take_while(|&i| ticks[i].time_s - onset <= MISS_WINDOW_S)
                .find(|&i| i + hold <= ticks.len() && ticks[i..i + hold].iter().all(|t| t.decision))
                .map(|i| (ticks[i].time_s - onset).max(0.0))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub scheme: ParallelScheme,
    pub mean_latency_s: f64,
    pub mean_power_nw: f64,
}

/// Streams the recording once per scheme; rows go from the most sequential
/// scheme to the most parallel one.
pub fn parallel_eval_tradeoff(
    tree: &ObliqueTree,
    rec: &Recording,
    schemes: &[ParallelScheme],
    costs: &CostTable,
) -> Result<Vec<TradeoffRow>> {
    let mut sorted = schemes.to_vec();
    sorted.sort_by_key(|s| std::cmp::Reverse(s.groups.len()));
    sorted
        .into_iter()
        .map(|scheme| {
            let trace = simulate_stream_oblique(tree, rec, &scheme, costs)?;
            Ok(TradeoffRow {
                scheme,
                mean_latency_s: trace.mean_latency_s,
                mean_power_nw: trace.mean_inference_power_nw,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{generate_synthetic_recording, SyntheticParams};

    fn short_recording() -> Recording {
        generate_synthetic_recording(&SyntheticParams {
            duration_s: 40.0,
            n_events: 1,
            event_len_s: 10.0,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!(ParallelScheme::parse("single", 4).unwrap(), ParallelScheme::single_path(4));
        assert_eq!(ParallelScheme::parse("full", 4).unwrap(), ParallelScheme::all_parallel(4));
        let s = ParallelScheme::parse("layers:1-2,3-4", 4).unwrap();
        assert_eq!(s.groups, vec![vec![1, 2], vec![3, 4]]);
        assert_eq!(s.to_string(), "layers:1-2,3-4");
        assert!(ParallelScheme::parse("layers:1-2,4", 4).is_err());
        assert!(ParallelScheme::parse("layers:1-3", 4).is_err());
        assert!(ParallelScheme::parse("diagonal", 4).is_err());
    }

    #[test]
    fn zero_tree_ensemble_has_constant_score() {
        let rec = short_recording();
        let e = AxisEnsemble {
            trees: vec![],
            depth_schedule: vec![],
            learning_rate: 0.3,
            base_score: -0.7,
            channels: rec.channels(),
        };
        let trace = simulate_stream_dvte(&e, &rec, &CostTable::default()).unwrap();
        assert_eq!(trace.ticks.len(), tick_grid(&rec).2);
        assert!(trace.ticks.iter().all(|t| t.score == sigmoid(-0.7)));
        assert_eq!(trace.mean_power_nw, 0.0);
    }

    #[test]
    fn planted_flip_two_ticks_after_onset() {
        let rec = short_recording();
        let e = AxisEnsemble {
            trees: vec![],
            depth_schedule: vec![],
            learning_rate: 0.3,
            base_score: -1.0,
            channels: rec.channels(),
        };
        let mut trace = simulate_stream_dvte(&e, &rec, &CostTable::default()).unwrap();
        let onset_tick = 40;
        let onset = trace.ticks[onset_tick].time_s;
        for t in &mut trace.ticks[onset_tick + 2..] {
            t.decision = true;
        }
        assert_eq!(detection_latency(&trace, &[onset], 1), vec![Some(0.5)]);
        assert_eq!(detection_latency(&trace, &[trace.ticks[onset_tick + 3].time_s], 1), vec![Some(0.0)]);
        for t in &mut trace.ticks {
            t.decision = false;
        }
        assert_eq!(detection_latency(&trace, &[onset], 1), vec![None]);
    }

    #[test]
    fn csv_header_and_rows() {
        let rec = short_recording();
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
            channels: rec.channels(),
        };
        let trace = simulate_stream_dvte(&e, &rec, &CostTable::default()).unwrap();
        let csv = trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "tick,time_s,score,decision,power_nw_cum");
        assert_eq!(lines.len(), trace.ticks.len() + 1);
        assert!(lines[2].starts_with("1,1.25,"));
        assert!(lines[2].ends_with(",14.8"));
    }
}

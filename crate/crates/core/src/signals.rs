//! Labeled multi-channel recordings: synthetic generation, CSV I/O and the
//! 0.25 s frame grid used by every downstream stage.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Base grid step shared by all feature windows.
pub const TICK_S: f64 = 0.25;
/// The longest window; no frame-group is emitted before it is full.
pub const WARMUP_S: f64 = 1.0;

/// Feature extraction window lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WindowLen {
    Quarter,
    Half,
    Full,
}

impl WindowLen {
    pub const ALL: [WindowLen; 3] = [WindowLen::Quarter, WindowLen::Half, WindowLen::Full];

    pub fn seconds(self) -> f64 {
        match self {
            WindowLen::Quarter => 0.25,
            WindowLen::Half => 0.5,
            WindowLen::Full => 1.0,
        }
    }

    /// Number of grid ticks the window spans.
    pub fn ticks(self) -> usize {
        match self {
            WindowLen::Quarter => 1,
            WindowLen::Half => 2,
            WindowLen::Full => 4,
        }
    }

    pub fn from_seconds(s: f64) -> Option<WindowLen> {
        WindowLen::ALL
            .into_iter()
            .find(|w| (w.seconds() - s).abs() < 1e-9)
    }

    pub fn samples(self, sample_rate_hz: f64) -> usize {
        (self.seconds() * sample_rate_hz).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    sample_rate_hz: f64,
    /// Channel-major storage: `data[ch][n]`.
    data: Vec<Vec<f64>>,
    labels: Vec<u8>,
    onsets: Vec<usize>,
}

impl Recording {
    /// Builds a recording from channel-major data and per-sample labels,
    /// deriving the onsets.
    pub fn new(sample_rate_hz: f64, data: Vec<Vec<f64>>, labels: Vec<u8>) -> Result<Self> {
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if data.is_empty() {
            return Err(Error::invalid("recording needs at least one channel"));
        }
        let n = labels.len();
        if let Some(bad) = data.iter().position(|ch| ch.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: data[bad].len(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::invalid("labels must be 0 or 1"));
        }
        let onsets = derive_onsets(&labels);
        Ok(Recording {
            sample_rate_hz,
            data,
            labels,
            onsets,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        &self.data[ch]
    }

    pub fn sample(&self, n: usize, ch: usize) -> f64 {
        self.data[ch][n]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn onsets(&self) -> &[usize] {
        &self.onsets
    }

    /// `(onset, end)` sample spans of every labeled event, end exclusive.
    pub fn events(&self) -> Vec<(usize, usize)> {
        self.onsets
            .iter()
            .map(|&on| {
                let end = self.labels[on..]
                    .iter()
                    .position(|&l| l == 0)
                    .map_or(self.len(), |p| on + p);
                (on, end)
            })
            .collect()
    }

    /// Copy of samples `[start, end)` as a standalone recording.
    pub fn slice(&self, start: usize, end: usize) -> Result<Recording> {
        if start >= end || end > self.len() {
            return Err(Error::invalid(format!(
                "bad slice [{start}, {end}) of {} samples",
                self.len()
            )));
        }
        let data = self.data.iter().map(|c| c[start..end].to_vec()).collect();
        Recording::new(self.sample_rate_hz, data, self.labels[start..end].to_vec())
    }
}

fn derive_onsets(labels: &[u8]) -> Vec<usize> {
    // An event already in progress at sample 0 has no observable onset.
    (1..labels.len())
        .filter(|&i| labels[i - 1] == 0 && labels[i] == 1)
        .collect()
}

/// Arguments of [`generate_synthetic_recording`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SyntheticParams {
    pub seed: u64,
    pub duration_s: f64,
    pub channels: usize,
    pub sample_rate_hz: f64,
    pub n_events: usize,
    pub event_len_s: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            seed: 42,
            duration_s: 600.0,
            channels: 4,
            sample_rate_hz: 500.0,
            n_events: 6,
            event_len_s: 20.0,
        }
    }
}

/// Background RMS after normalization; event bursts are scaled against it.
const BACKGROUND_RMS: f64 = 1.0;
const BURST_RMS_RATIO: f64 = 3.0;
const RAMP_S: f64 = 0.5;

/// Pink-like background plus 15-30 Hz amplitude-modulated bursts during events.
pub fn generate_synthetic_recording(p: &SyntheticParams) -> Result<Recording> {
    if !(p.duration_s > 0.0) || !(p.event_len_s > 0.0) {
        return Err(Error::invalid("durations must be positive"));
    }
    if p.channels == 0 || p.n_events == 0 {
        return Err(Error::invalid("channel and event counts must be positive"));
    }
    if !(p.sample_rate_hz >= 500.0) {
        return Err(Error::invalid("sample rate must be at least 500 Hz"));
    }
    if p.duration_s < 4.0 * p.n_events as f64 * p.event_len_s {
        return Err(Error::invalid(
            "duration must be at least 4x the total event time",
        ));
    }

    let fs = p.sample_rate_hz;
    let n = (p.duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let mut data: Vec<Vec<f64>> = (0..p.channels)
        .map(|_| {
            let mut x = pink_noise(&mut rng, n);
            let rms = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt();
            let gain = BACKGROUND_RMS / rms;
            x.iter_mut().for_each(|v| *v *= gain);
            x
        })
        .collect();

    let mut labels = vec![0u8; n];
    let event_len = (p.event_len_s * fs).round() as usize;
    let slot = p.duration_s / p.n_events as f64;
    let ramp_len = ((RAMP_S * fs).round() as usize).clamp(1, event_len.max(1));
    // sin(.) modulated by (1 + 0.5 sin(.)) has mean square 1.125 / 2.
    let amp = BURST_RMS_RATIO * BACKGROUND_RMS / (1.125f64 / 2.0).sqrt();

    for e in 0..p.n_events {
        let u: f64 = rng.random();
        let onset_s = e as f64 * slot + (slot - p.event_len_s) * (0.25 + 0.5 * u);
        let onset = ((onset_s * fs).round() as usize).max(1);
        let end = (onset + event_len).min(n);
        let freq = rng.random_range(15.0..30.0);
        let am_freq = rng.random_range(0.5..2.0);
        let am_phase = rng.random_range(0.0..std::f64::consts::TAU);
        for ch in data.iter_mut() {
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            for (k, v) in ch[onset..end].iter_mut().enumerate() {
                let t = k as f64 / fs;
                let ramp = ((k + 1) as f64 / ramp_len as f64).min(1.0);
                let envelope = 1.0 + 0.5 * (std::f64::consts::TAU * am_freq * t + am_phase).sin();
                *v += amp * ramp * envelope * (std::f64::consts::TAU * freq * t + phase).sin();
            }
        }
        labels[onset..end].iter_mut().for_each(|l| *l = 1);
    }

    Recording::new(fs, data, labels)
}

/// White noise shaped by a bank of first-order sections into a 1/f-like
/// spectrum (Kellet's refined pink filter).
fn pink_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    const POLES: [f64; 6] = [0.99886, 0.99332, 0.96900, 0.86650, 0.55000, -0.7616];
    const GAINS: [f64; 6] = [0.0555179, 0.0750759, 0.1538520, 0.3104856, 0.5329522, -0.0168980];
    const BURN_IN: usize = 5000;

    let mut state = [0.0f64; 6];
    let mut last_white = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n + BURN_IN {
        let white: f64 = rng.sample(StandardNormal);
        let mut acc = white * 0.5362 + last_white * 0.115926;
        for ((s, pole), gain) in state.iter_mut().zip(POLES).zip(GAINS) {
            *s = pole * *s + white * gain;
            acc += *s;
        }
        last_white = white;
        if i >= BURN_IN {
            out.push(acc);
        }
    }
    out
}

/// Reads a recording from the `t,ch0,...,chN,label` CSV layout.
pub fn load_recording_csv(path: impl AsRef<Path>) -> Result<Recording> {
    let text = fs::read_to_string(path)?;
    parse_recording_csv(&text)
}

pub fn parse_recording_csv(text: &str) -> Result<Recording> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 3 || cols[0] != "t" {
        return Err(Error::Parse {
            line: 1,
            message: "header must start with `t` and hold at least one channel".into(),
        });
    }
    if cols[cols.len() - 1] != "label" {
        return Err(Error::Parse {
            line: 1,
            message: "missing `label` column".into(),
        });
    }
    let channels = cols.len() - 2;
    for (i, name) in cols[1..cols.len() - 1].iter().enumerate() {
        if *name != format!("ch{i}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column `ch{i}`, found `{name}`"),
            });
        }
    }

    let mut times = Vec::new();
    let mut data = vec![Vec::new(); channels];
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} cells, found {}", cols.len(), cells.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    line: lineno,
                    message: format!("non-numeric cell `{s}`"),
                })
        };
        times.push(num(cells[0])?);
        for (ch, cell) in cells[1..=channels].iter().enumerate() {
            data[ch].push(num(cell)?);
        }
        labels.push(match cells[channels + 1] {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("label must be 0 or 1, found `{other}`"),
                })
            }
        });
    }
    if times.len() < 2 {
        return Err(Error::Parse {
            line: 2,
            message: "need at least two samples to infer the sample rate".into(),
        });
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::Parse {
            line: 3,
            message: "time column must be increasing".into(),
        });
    }
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() / dt > 1e-6 {
            return Err(Error::Parse {
                line: i + 3,
                message: "non-uniform time step".into(),
            });
        }
    }
    let mut fs = 1.0 / dt;
    if (fs - fs.round()).abs() < 1e-6 * fs {
        fs = fs.round();
    }
    Recording::new(fs, data, labels)
}

pub fn recording_to_csv(rec: &Recording) -> String {
    let mut out = String::with_capacity(rec.len() * (12 + 22 * rec.channels()));
    out.push('t');
    for ch in 0..rec.channels() {
        let _ = write!(out, ",ch{ch}");
    }
    out.push_str(",label\n");
    for n in 0..rec.len() {
        let _ = write!(out, "{}", n as f64 / rec.sample_rate_hz());
        for ch in 0..rec.channels() {
            let _ = write!(out, ",{}", rec.sample(n, ch));
        }
        let _ = writeln!(out, ",{}", rec.labels()[n]);
    }
    out
}

pub fn write_recording_csv(rec: &Recording, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, recording_to_csv(rec))?;
    Ok(())
}

/// One feature window on one channel.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    pub start_sample: usize,
    pub window: WindowLen,
    pub channel: usize,
    pub samples: &'a [f64],
    /// Everything on this channel before `start_sample`.
    pub history: &'a [f64],
}

impl Frame<'_> {
    pub fn window_len_s(&self) -> f64 {
        self.window.seconds()
    }

    pub fn prev_sample(&self) -> Option<f64> {
        self.history.last().copied()
    }
}

/// All windows that end at one grid tick.
#[derive(Debug, Clone, Copy)]
pub struct FrameGroup<'a> {
    pub tick: usize,
    /// Exclusive end sample shared by every window of the group.
    pub end_sample: usize,
    recording: &'a Recording,
}

impl<'a> FrameGroup<'a> {
    pub fn time_s(&self) -> f64 {
        self.end_sample as f64 / self.recording.sample_rate_hz()
    }

    pub fn channels(&self) -> usize {
        self.recording.channels()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.recording.sample_rate_hz()
    }

    /// Label of the last sample covered by the group.
    pub fn label(&self) -> u8 {
        self.recording.labels()[self.end_sample - 1]
    }

    pub fn frame(&self, channel: usize, window: WindowLen) -> Frame<'a> {
        let len = window.samples(self.recording.sample_rate_hz());
        let start = self.end_sample - len;
        let ch = self.recording.channel(channel);
        Frame {
            start_sample: start,
            window,
            channel,
            samples: &ch[start..self.end_sample],
            history: &ch[..start],
        }
    }
}

/// Tick grid of a recording: `(first_end_sample, step, count)`.
pub fn tick_grid(rec: &Recording) -> (usize, usize, usize) {
    let fs = rec.sample_rate_hz();
    let warm = WindowLen::Full.samples(fs);
    let step = WindowLen::Quarter.samples(fs);
    let count = if rec.len() > warm {
        (rec.len() - warm).div_ceil(step)
    } else {
        0
    };
    (warm, step, count)
}

/// Frame-groups at every grid time `t` in `[1 s, T)`; each group's windows
/// end at sample `t * fs`.
pub fn window_stream(rec: &Recording) -> Result<impl Iterator<Item = FrameGroup<'_>>> {
    if rec.duration_s() < WARMUP_S {
        return Err(Error::invalid("recording shorter than the 1 s warm-up"));
    }
    let (warm, step, count) = tick_grid(rec);
    Ok((0..count).map(move |tick| FrameGroup {
        tick,
        end_sample: warm + tick * step,
        recording: rec,
    }))
}

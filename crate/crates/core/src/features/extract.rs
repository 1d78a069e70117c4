use std::collections::VecDeque;

use super::fir::{design_bandpass, FirFilter, FirState, FIR_TAPS};
use super::{FeatureKind, N_FEATURES};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::signals::{tick_grid, window_stream, FrameGroup, Recording, WindowLen};

/// Mean absolute first difference. With `prev` the window has `d`
/// differences, otherwise the first is skipped and the divisor is `d - 1`.
pub fn line_length(samples: &[f64], prev: Option<f64>) -> Result<f64> {
    let d = samples.len();
    if d < 2 {
        return Err(Error::invalid("line length needs at least 2 samples"));
    }
    let inner: f64 = samples.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    Ok(match prev {
        Some(p) => (inner + (samples[0] - p).abs()) / d as f64,
        None => inner / (d - 1) as f64,
    })
}

/// Population variance.
pub fn variance(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("variance of an empty window"));
    }
    let d = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / d;
    Ok(samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d)
}

/// Mean-square filter output over `window`. The filter sees the tail of
/// `history` (samples preceding the window) so consecutive windows continue
/// one convolution instead of re-priming from zero.
pub fn bandpower(window: &[f64], history: &[f64], filter: &FirFilter) -> Result<f64> {
    if window.len() < FIR_TAPS {
        return Err(Error::invalid(format!(
            "bandpower window of {} samples is shorter than {FIR_TAPS} taps",
            window.len()
        )));
    }
    let lookback = history.len().min(FIR_TAPS - 1);
    let mut padded = Vec::with_capacity(lookback + window.len());
    padded.extend_from_slice(&history[history.len() - lookback..]);
    padded.extend_from_slice(window);
    let mut acc = 0.0;
    for n in lookback..padded.len() {
        let y = filter.output_at(&padded, n);
        acc += y * y;
    }
    Ok(acc / window.len() as f64)
}

/// One bandpass per bandpower feature at a given sample rate. Bands whose
/// upper edge reaches Nyquist are cut just below it.
#[derive(Debug, Clone)]
pub struct FilterBank {
    filters: Vec<FirFilter>,
    sample_rate_hz: f64,
}

impl FilterBank {
    pub fn new(sample_rate_hz: f64) -> Result<Self> {
        let nyquist = sample_rate_hz / 2.0;
        let filters = FeatureKind::ALL
            .iter()
            .filter_map(|k| k.band_hz())
            .map(|(lo, hi)| design_bandpass(lo, hi.min(0.995 * nyquist), sample_rate_hz))
            .collect::<Result<Vec<_>>>()?;
        Ok(FilterBank {
            filters,
            sample_rate_hz,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn filter(&self, kind: FeatureKind) -> Option<&FirFilter> {
        kind.band_hz().map(|_| &self.filters[kind.index()])
    }
}

/// Exhaustive extraction of every feature on every channel for one group,
/// computed directly from the windows.
pub fn extract_all(group: &FrameGroup<'_>, bank: &FilterBank) -> Result<Vec<f64>> {
    let mut row = Vec::with_capacity(group.channels() * N_FEATURES);
    for ch in 0..group.channels() {
        for kind in FeatureKind::ALL {
            let frame = group.frame(ch, kind.window());
            let v = match kind {
                FeatureKind::LineLength => line_length(frame.samples, frame.prev_sample())?,
                FeatureKind::Variance => variance(frame.samples)?,
                _ => bandpower(frame.samples, frame.history, bank.filter(kind).unwrap())?,
            };
            row.push(v);
        }
    }
    Ok(row)
}

#[derive(Debug, Clone)]
struct ChannelState {
    filters: Vec<FirState>,
    raw: VecDeque<f64>,
    squared: Vec<VecDeque<f64>>,
}

/// Sample-by-sample extractor: filters run continuously, feature values are
/// read on demand from the buffered tail of each stream.
#[derive(Debug, Clone)]
pub struct StreamingExtractor {
    channels: Vec<ChannelState>,
    window_samples: [usize; N_FEATURES],
    raw_cap: usize,
    seen: usize,
}

impl StreamingExtractor {
    pub fn new(bank: &FilterBank, channels: usize) -> Self {
        let fs = bank.sample_rate_hz();
        let window_samples = FeatureKind::ALL.map(|k| k.window().samples(fs));
        let raw_cap = WindowLen::Full.samples(fs) + 1;
        let band_caps: Vec<usize> = FeatureKind::ALL
            .iter()
            .filter(|k| k.is_bandpower())
            .map(|k| window_samples[k.index()])
            .collect();
        let state = ChannelState {
            filters: bank.filters.iter().map(FirState::new).collect(),
            raw: VecDeque::with_capacity(raw_cap),
            squared: band_caps.iter().map(|&c| VecDeque::with_capacity(c)).collect(),
        };
        StreamingExtractor {
            channels: vec![state; channels],
            window_samples,
            raw_cap,
            seen: 0,
        }
    }

    /// Pushes one multi-channel sample.
    pub fn push(&mut self, sample: impl IntoIterator<Item = f64>) {
        for (st, x) in self.channels.iter_mut().zip(sample) {
            if st.raw.len() == self.raw_cap {
                st.raw.pop_front();
            }
            st.raw.push_back(x);
            for (b, f) in st.filters.iter_mut().enumerate() {
                let y = f.process(x);
                let buf = &mut st.squared[b];
                if buf.len() == self.window_samples[b] {
                    buf.pop_front();
                }
                buf.push_back(y * y);
            }
        }
        self.seen += 1;
    }

    /// Pushes samples `[self.samples_seen(), end)` of `rec`.
    pub fn advance_to(&mut self, rec: &Recording, end: usize) {
        for n in self.seen..end {
            self.push((0..rec.channels()).map(|ch| rec.sample(n, ch)));
        }
    }

    pub fn samples_seen(&self) -> usize {
        self.seen
    }

    /// Feature over the window ending at the latest pushed sample.
    pub fn value(&self, channel: usize, kind: FeatureKind) -> Result<f64> {
        let w = self.window_samples[kind.index()];
        if self.seen < w {
            return Err(Error::invalid(format!(
                "{} needs {w} samples, only {} seen",
                kind.name(),
                self.seen
            )));
        }
        let st = &self.channels[channel];
        match kind {
            FeatureKind::LineLength | FeatureKind::Variance => {
                let start = st.raw.len() - w;
                let tail: Vec<f64> = st.raw.range(start..).copied().collect();
                if kind == FeatureKind::Variance {
                    variance(&tail)
                } else {
                    line_length(&tail, start.checked_sub(1).map(|i| st.raw[i]))
                }
            }
            _ => {
                let buf = &st.squared[kind.index()];
                Ok(buf.iter().sum::<f64>() / w as f64)
            }
        }
    }

    pub fn row(&self) -> Result<Vec<f64>> {
        let mut row = Vec::with_capacity(self.channels.len() * N_FEATURES);
        for ch in 0..self.channels.len() {
            for kind in FeatureKind::ALL {
                row.push(self.value(ch, kind)?);
            }
        }
        Ok(row)
    }
}

/// Every feature at every grid tick of a recording, with the tick labels.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    pub dataset: Dataset,
    pub times_s: Vec<f64>,
    pub end_samples: Vec<usize>,
}

impl FeatureTable {
    pub fn from_recording(rec: &Recording) -> Result<Self> {
        let bank = FilterBank::new(rec.sample_rate_hz())?;
        let mut ex = StreamingExtractor::new(&bank, rec.channels());
        let groups: Vec<_> = window_stream(rec)?.collect();
        let (_, _, count) = tick_grid(rec);
        let cols = rec.channels() * N_FEATURES;
        let mut x = Vec::with_capacity(count * cols);
        let mut y = Vec::with_capacity(count);
        let mut times_s = Vec::with_capacity(count);
        let mut end_samples = Vec::with_capacity(count);
        for g in groups {
            ex.advance_to(rec, g.end_sample);
            x.extend(ex.row()?);
            y.push(g.label());
            times_s.push(g.time_s());
            end_samples.push(g.end_sample);
        }
        Ok(FeatureTable {
            dataset: Dataset::new(x, cols, y, rec.channels())?,
            times_s,
            end_samples,
        })
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{generate_synthetic_recording, SyntheticParams};
    use proptest::prelude::*;

    #[test]
    fn line_length_cases() {
        assert_eq!(line_length(&[3.0; 10], None).unwrap(), 0.0);
        assert_eq!(line_length(&[1.0, 2.0, 4.0], None).unwrap(), 1.5);
        assert_eq!(line_length(&[1.0, 2.0, 4.0], Some(0.0)).unwrap(), 4.0 / 3.0);
        assert!(line_length(&[1.0], None).is_err());
    }

    #[test]
    fn variance_cases() {
        assert_eq!(variance(&[5.0; 7]).unwrap(), 0.0);
        assert_eq!(variance(&[0.0, 2.0]).unwrap(), 1.0);
        assert!(variance(&[]).is_err());
    }

    proptest! {
        #[test]
        fn line_length_is_homogeneous(xs in prop::collection::vec(-100.0f64..100.0, 2..64), c in -5.0f64..5.0) {
            let scaled: Vec<f64> = xs.iter().map(|x| c * x).collect();
            let a = line_length(&xs, None).unwrap() * c.abs();
            let b = line_length(&scaled, None).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }

        #[test]
        fn variance_is_translation_invariant(xs in prop::collection::vec(-100.0f64..100.0, 1..64), k in -1e3f64..1e3) {
            let shifted: Vec<f64> = xs.iter().map(|x| x + k).collect();
            let a = variance(&xs).unwrap();
            let b = variance(&shifted).unwrap();
            prop_assert!((a - b).abs() <= 1e-6 * a.max(1.0));
        }
    }

    fn sine(freq: f64, amp: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 500.0).sin())
            .collect()
    }

    #[test]
    fn bandpower_cases() {
        let bank = FilterBank::new(500.0).unwrap();
        let beta = bank.filter(FeatureKind::Beta).unwrap();
        let ripple = bank.filter(FeatureKind::Ripple).unwrap();
        assert_eq!(bandpower(&[0.0; 125], &[], beta).unwrap(), 0.0);

        let x = sine(20.0, 1.0, 625);
        let (hist, win) = x.split_at(500);
        let b = bandpower(win, hist, beta).unwrap();
        let r = bandpower(win, hist, ripple).unwrap();
        // measured ratio ~2e6
        assert!(b >= 20.0 * r, "beta {b} ripple {r}");

        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let (hist2, win2) = x2.split_at(500);
        let b2 = bandpower(win2, hist2, beta).unwrap();
        assert!((b2 - 4.0 * b).abs() <= 1e-6 * 4.0 * b);

        assert!(bandpower(&[1.0; 31], &[], beta).is_err());
    }

    #[test]
    fn streaming_bandpower_equals_whole_channel_convolution() {
        let rec = generate_synthetic_recording(&SyntheticParams {
            duration_s: 40.0,
            n_events: 1,
            event_len_s: 5.0,
            channels: 2,
            ..Default::default()
        })
        .unwrap();
        let bank = FilterBank::new(500.0).unwrap();
        // oracle: convolve the whole channel once, then mean-square per window
        let filtered: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|ch| {
                FeatureKind::ALL
                    .iter()
                    .filter_map(|&k| bank.filter(k))
                    .map(|f| {
                        let x = rec.channel(ch);
                        (0..x.len()).map(|n| f.output_at(x, n)).collect()
                    })
                    .collect()
            })
            .collect();
        let mut ex = StreamingExtractor::new(&bank, 2);
        for g in window_stream(&rec).unwrap() {
            ex.advance_to(&rec, g.end_sample);
            for ch in 0..2 {
                for kind in FeatureKind::ALL.into_iter().filter(|k| k.is_bandpower()) {
                    let w = kind.window().samples(500.0);
                    let y = &filtered[ch][kind.index()][g.end_sample - w..g.end_sample];
                    let oracle = y.iter().map(|v| v * v).sum::<f64>() / w as f64;
                    let got = ex.value(ch, kind).unwrap();
                    assert!(
                        (got - oracle).abs() <= 1e-9 * oracle.abs().max(1e-300),
                        "{kind:?} tick {} {got} vs {oracle}",
                        g.tick
                    );
                }
            }
        }
    }

    #[test]
    fn extract_all_basic_contract() {
        let rec = Recording::new(500.0, vec![vec![0.0; 1000]; 3], vec![0; 1000]).unwrap();
        let bank = FilterBank::new(500.0).unwrap();
        let g = window_stream(&rec).unwrap().next().unwrap();
        let row = extract_all(&g, &bank).unwrap();
        assert_eq!(row.len(), 30);
        assert!(row.iter().all(|&v| v == 0.0));

        let rec = generate_synthetic_recording(&SyntheticParams {
            duration_s: 40.0,
            n_events: 1,
            event_len_s: 5.0,
            ..Default::default()
        })
        .unwrap();
        let g = window_stream(&rec).unwrap().nth(10).unwrap();
        assert_eq!(extract_all(&g, &bank).unwrap(), extract_all(&g, &bank).unwrap());
    }
}

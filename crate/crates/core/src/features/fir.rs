use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const FIR_TAPS: usize = 32;

/// Linear-phase bandpass, windowed-sinc with a Hamming window.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: [f64; FIR_TAPS],
    pub band_hz: (f64, f64),
    pub sample_rate_hz: f64,
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

pub fn design_bandpass(low_hz: f64, high_hz: f64, sample_rate_hz: f64) -> Result<FirFilter> {
    let nyquist = sample_rate_hz / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < nyquist) {
        return Err(Error::invalid(format!(
            "band ({low_hz}, {high_hz}) Hz must satisfy 0 < low < high < {nyquist}"
        )));
    }
    let f1 = low_hz / sample_rate_hz;
    let f2 = high_hz / sample_rate_hz;
    let center = (FIR_TAPS - 1) as f64 / 2.0;
    let mut taps = [0.0; FIR_TAPS];
    for (n, t) in taps.iter_mut().enumerate() {
        let m = n as f64 - center;
        let hamming = 0.54 - 0.46 * (2.0 * PI * n as f64 / (FIR_TAPS - 1) as f64).cos();
        *t = hamming * (2.0 * f2 * sinc(2.0 * f2 * m) - 2.0 * f1 * sinc(2.0 * f1 * m));
    }
    let mut filter = FirFilter {
        taps,
        band_hz: (low_hz, high_hz),
        sample_rate_hz,
    };
    // unit gain at the geometric band center
    let gain = filter.magnitude_at((low_hz * high_hz).sqrt());
    filter.taps.iter_mut().for_each(|t| *t /= gain);
    Ok(filter)
}

impl FirFilter {
    /// |H(f)| from the tap DTFT.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (n, &h)| {
                (re + h * (w * n as f64).cos(), im - h * (w * n as f64).sin())
            });
        (re * re + im * im).sqrt()
    }

    /// Causal output at `n` of the whole-signal convolution, with zeros
    /// before the first sample.
    pub fn output_at(&self, signal: &[f64], n: usize) -> f64 {
        self.taps
            .iter()
            .enumerate()
            .take(n + 1)
            .map(|(k, &h)| h * signal[n - k])
            .sum()
    }
}

/// Running filter with a circular delay line.
#[derive(Debug, Clone)]
pub struct FirState {
    taps: [f64; FIR_TAPS],
    line: [f64; FIR_TAPS],
    head: usize,
}

impl FirState {
    pub fn new(filter: &FirFilter) -> Self {
        FirState {
            taps: filter.taps,
            line: [0.0; FIR_TAPS],
            head: 0,
        }
    }

    pub fn process(&mut self, x: f64) -> f64 {
        self.head = (self.head + FIR_TAPS - 1) % FIR_TAPS;
        self.line[self.head] = x;
        let mut acc = 0.0;
        let mut idx = self.head;
        for &h in &self.taps {
            acc += h * self.line[idx];
            idx += 1;
            if idx == FIR_TAPS {
                idx = 0;
            }
        }
        acc
    }
}

//! The ten per-channel biomarkers, their hardware cost metadata, and the
//! cost standardization consumed by the regularizers.

mod cost;
mod extract;
mod fir;

pub use cost::{standardize_costs, CostEntry, CostTable, StandardizedCosts};
pub use extract::{
    bandpower, extract_all, line_length, variance, FeatureTable, FilterBank, StreamingExtractor,
};
pub use fir::{design_bandpass, FirFilter, FirState, FIR_TAPS};

use serde::{Deserialize, Serialize};

use crate::signals::WindowLen;

pub const N_FEATURES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureKind {
    Delta,
    Theta,
    Alpha,
    Beta,
    LowGamma,
    Gamma,
    HighGamma,
    Ripple,
    LineLength,
    Variance,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; N_FEATURES] = [
        FeatureKind::Delta,
        FeatureKind::Theta,
        FeatureKind::Alpha,
        FeatureKind::Beta,
        FeatureKind::LowGamma,
        FeatureKind::Gamma,
        FeatureKind::HighGamma,
        FeatureKind::Ripple,
        FeatureKind::LineLength,
        FeatureKind::Variance,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<FeatureKind> {
        FeatureKind::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Delta => "Delta",
            FeatureKind::Theta => "Theta",
            FeatureKind::Alpha => "Alpha",
            FeatureKind::Beta => "Beta",
            FeatureKind::LowGamma => "LowGamma",
            FeatureKind::Gamma => "Gamma",
            FeatureKind::HighGamma => "HighGamma",
            FeatureKind::Ripple => "Ripple",
            FeatureKind::LineLength => "LineLength",
            FeatureKind::Variance => "Variance",
        }
    }

    pub fn from_name(name: &str) -> Option<FeatureKind> {
        FeatureKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Passband of the bandpower features, in Hz.
    pub fn band_hz(self) -> Option<(f64, f64)> {
        match self {
            FeatureKind::Delta => Some((1.0, 4.0)),
            FeatureKind::Theta => Some((4.0, 8.0)),
            FeatureKind::Alpha => Some((8.0, 13.0)),
            FeatureKind::Beta => Some((13.0, 30.0)),
            FeatureKind::LowGamma => Some((30.0, 50.0)),
            FeatureKind::Gamma => Some((50.0, 80.0)),
            FeatureKind::HighGamma => Some((80.0, 150.0)),
            FeatureKind::Ripple => Some((150.0, 250.0)),
            FeatureKind::LineLength | FeatureKind::Variance => None,
        }
    }

    /// Extraction window. Low-frequency bands need longer windows.
    pub fn window(self) -> WindowLen {
        match self {
            FeatureKind::Delta => WindowLen::Full,
            FeatureKind::Theta | FeatureKind::Alpha => WindowLen::Half,
            _ => WindowLen::Quarter,
        }
    }

    pub fn is_bandpower(self) -> bool {
        self.band_hz().is_some()
    }
}

/// Position of `(channel, kind)` in a feature row: channel-major, kinds in
/// declaration order.
pub fn column_of(channel: usize, kind: FeatureKind) -> usize {
    channel * N_FEATURES + kind.index()
}

pub fn column_parts(column: usize) -> (usize, FeatureKind) {
    (
        column / N_FEATURES,
        FeatureKind::ALL[column % N_FEATURES],
    )
}

pub fn column_name(column: usize) -> String {
    let (ch, kind) = column_parts(column);
    format!("ch{ch}:{}", kind.name())
}

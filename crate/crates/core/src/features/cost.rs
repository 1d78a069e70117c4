use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FeatureKind, N_FEATURES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEntry {
    pub power_nw: f64,
    pub latency_s: f64,
}

/// Per-feature extraction power and latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    entries: [CostEntry; N_FEATURES],
}

const BANDPOWER_NW: f64 = 250.6;
const LINE_LENGTH_NW: f64 = 7.4;
const VARIANCE_NW: f64 = 21.6;

impl Default for CostTable {
    fn default() -> Self {
        let entries = FeatureKind::ALL.map(|k| CostEntry {
            power_nw: match k {
                FeatureKind::LineLength => LINE_LENGTH_NW,
                FeatureKind::Variance => VARIANCE_NW,
                _ => BANDPOWER_NW,
            },
            latency_s: k.window().seconds(),
        });
        CostTable { entries }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Override {
    power_nw: Option<f64>,
    latency_s: Option<f64>,
}

impl CostTable {
    pub fn get(&self, kind: FeatureKind) -> CostEntry {
        self.entries[kind.index()]
    }

    pub fn power_nw(&self, kind: FeatureKind) -> f64 {
        self.entries[kind.index()].power_nw
    }

    pub fn latency_s(&self, kind: FeatureKind) -> f64 {
        self.entries[kind.index()].latency_s
    }

    pub fn set(&mut self, kind: FeatureKind, entry: CostEntry) -> Result<()> {
        if !(entry.power_nw >= 0.0 && entry.power_nw.is_finite()) {
            return Err(Error::invalid(format!("{}: power must be >= 0", kind.name())));
        }
        if !(entry.latency_s > 0.0 && entry.latency_s.is_finite()) {
            return Err(Error::invalid(format!("{}: latency must be > 0", kind.name())));
        }
        self.entries[kind.index()] = entry;
        Ok(())
    }

    /// Defaults overridden by a TOML file of `[FeatureName]` tables holding
    /// `power_nw` and/or `latency_s`.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let parsed: BTreeMap<String, Override> =
            toml::from_str(text).map_err(|e| Error::Parse {
                line: e
                    .span()
                    .map(|s| text[..s.start].lines().count().max(1))
                    .unwrap_or(0),
                message: e.message().to_string(),
            })?;
        let mut table = CostTable::default();
        for (name, o) in parsed {
            let kind = FeatureKind::from_name(&name)
                .ok_or_else(|| Error::invalid(format!("unknown feature `{name}`")))?;
            let mut e = table.get(kind);
            if let Some(p) = o.power_nw {
                e.power_nw = p;
            }
            if let Some(l) = o.latency_s {
                e.latency_s = l;
            }
            table.set(kind, e)?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }
}

/// Z-scored costs over the ten-feature population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedCosts {
    pub z_power: [f64; N_FEATURES],
    pub z_latency: [f64; N_FEATURES],
    pub power_mean_std: (f64, f64),
    pub latency_mean_std: (f64, f64),
}

fn zscore(values: [f64; N_FEATURES], axis: &str) -> Result<([f64; N_FEATURES], (f64, f64))> {
    let n = N_FEATURES as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(std > 1e-12 * mean.abs().max(1.0)) {
        return Err(Error::invalid(format!("degenerate cost table: zero {axis} spread")));
    }
    Ok((values.map(|v| (v - mean) / std), (mean, std)))
}

pub fn standardize_costs(table: &CostTable) -> Result<StandardizedCosts> {
    StandardizedCosts::new(table)
}

impl StandardizedCosts {
    pub fn new(table: &CostTable) -> Result<Self> {
        let (z_power, power_mean_std) = zscore(table.entries.map(|e| e.power_nw), "power")?;
        let (z_latency, latency_mean_std) =
            zscore(table.entries.map(|e| e.latency_s), "latency")?;
        Ok(StandardizedCosts {
            z_power,
            z_latency,
            power_mean_std,
            latency_mean_std,
        })
    }

    /// `z_power + z_latency`, the per-extraction penalty used by boosting.
    pub fn combined(&self, kind: FeatureKind) -> f64 {
        self.z_power[kind.index()] + self.z_latency[kind.index()]
    }

    /// Combined cost minus that of the cheapest feature, so the cheapest
    /// feature is free and nothing earns a bonus for being extracted.
    pub fn excess(&self, kind: FeatureKind) -> f64 {
        let min = FeatureKind::ALL
            .iter()
            .map(|&k| self.combined(k))
            .fold(f64::INFINITY, f64::min);
        self.combined(kind) - min
    }

    /// Per-feature weight of the oblique L1 term. It must stay positive for
    /// the penalized loss to be bounded below.
    pub fn l1_weight(&self, kind: FeatureKind) -> f64 {
        1.0 + self.excess(kind)
    }

    pub fn cheapest(&self) -> FeatureKind {
        let mut best = FeatureKind::ALL[0];
        for k in FeatureKind::ALL {
            if self.combined(k) < self.combined(best) {
                best = k;
            }
        }
        best
    }
}

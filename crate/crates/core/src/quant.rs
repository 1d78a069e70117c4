//! Fixed-point rounding and storage accounting for both model families.

use crate::error::{Error, Result};
use crate::gbdt::{AxisEnsemble, AxisNode};
use crate::oblique::{bits_for, ObliqueTree};

/// Rounds to the nearest multiple of `2^-frac_bits` (half away from zero)
/// and saturates to the signed 16-bit range of that grid.
pub fn quantize_value(v: f64, frac_bits: u32) -> f64 {
    let scale = (1u32 << frac_bits) as f64;
    let q = (v * scale).round().clamp(i16::MIN as f64, i16::MAX as f64);
    q / scale
}

fn check_bits(frac_bits: u32) -> Result<()> {
    if (4..=16).contains(&frac_bits) {
        Ok(())
    } else {
        Err(Error::invalid("frac_bits must be in 4..=16"))
    }
}

/// Models whose parameters can be put on a fixed-point grid.
pub trait Quantize: Sized {
    fn quantized(&self, frac_bits: u32) -> Self;
}

impl Quantize for AxisEnsemble {
    fn quantized(&self, frac_bits: u32) -> Self {
        let mut out = self.clone();
        for tree in &mut out.trees {
            tree.visit_mut(&mut |node| match node {
                AxisNode::Internal { threshold, .. } => {
                    *threshold = quantize_value(*threshold, frac_bits)
                }
                AxisNode::Leaf { weight, .. } => *weight = quantize_value(*weight, frac_bits),
            });
        }
        out
    }
}

impl Quantize for ObliqueTree {
    fn quantized(&self, frac_bits: u32) -> Self {
        let mut out = self.clone();
        for node in &mut out.nodes {
            for t in &mut node.theta {
                *t = quantize_value(*t, frac_bits);
            }
            node.bias = quantize_value(node.bias, frac_bits);
        }
        for w in &mut out.leaves {
            *w = quantize_value(*w, frac_bits);
        }
        if let Some(book) = &mut out.codebook {
            for c in &mut book.centers {
                *c = quantize_value(*c, frac_bits);
            }
        }
        out.frac_bits = Some(frac_bits);
        out
    }
}

pub fn quantize_fixed_point<M: Quantize>(model: &M, frac_bits: u32) -> Result<M> {
    check_bits(frac_bits)?;
    Ok(model.quantized(frac_bits))
}

/// Storage footprint in bits; [`model_size_bytes`] rounds up.
pub trait ModelSize {
    fn size_bits(&self) -> u64;
}

impl ModelSize for AxisEnsemble {
    fn size_bits(&self) -> u64 {
        let channel_bits = (self.channels.max(1) as f64).log2().ceil() as u64;
        let mut bits = 0;
        for tree in &self.trees {
            tree.visit(&mut |node, _| {
                bits += match node {
                    AxisNode::Internal { .. } => 4 + channel_bits + 16,
                    AxisNode::Leaf { .. } => 16,
                }
            });
        }
        bits
    }
}

impl ModelSize for ObliqueTree {
    fn size_bits(&self) -> u64 {
        let weight_bits = match &self.codebook {
            Some(book) => book.index_bits() as u64,
            None => 16,
        };
        let mut bits = 0;
        for node in &self.nodes {
            let support = node.support();
            let mut prev = 0;
            let mut max_delta = 0;
            for &j in &support {
                max_delta = max_delta.max(j - prev);
                prev = j;
            }
            if !support.is_empty() {
                let index_bits = bits_for(max_delta as u64) as u64;
                bits += support.len() as u64 * (index_bits + weight_bits);
            }
            bits += 16;
        }
        bits += 16 * self.leaves.len() as u64;
        if let Some(book) = &self.codebook {
            bits += 16 * book.centers.len() as u64;
        }
        bits
    }
}

pub fn model_size_bytes<M: ModelSize>(model: &M) -> u64 {
    model.size_bits().div_ceil(8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;

    #[test]
    fn rounding_examples() {
        assert_eq!(quantize_value(0.3, 12), 1229.0 / 4096.0);
        assert!((quantize_value(0.3, 12) - 0.300049).abs() < 1e-6);
        assert_eq!(quantize_value(0.25, 12), 0.25);
        assert_eq!(quantize_value(100.0, 12), 32767.0 / 4096.0);
        assert_eq!(quantize_value(-100.0, 12), -8.0);
        for v in [0.1, -3.7, 7.99, 1e-5] {
            let q = quantize_value(v, 10);
            assert_eq!(quantize_value(q, 10), q);
        }
        assert!(quantize_fixed_point(&ObliqueTree::zeros(0, 1, 1), 3).is_err());
    }

    #[test]
    fn single_leaf_is_two_bytes() {
        let leaf = ObliqueTree::zeros(0, 40, 4);
        assert_eq!(model_size_bytes(&leaf), 2);
    }

    #[test]
    fn axis_sizes() {
        let stump = AxisEnsemble {
            trees: vec![AxisNode::split(
                FeatureKind::Beta,
                3,
                0.1,
                AxisNode::leaf(1.0),
                AxisNode::leaf(-1.0),
            )],
            depth_schedule: vec![1],
            learning_rate: 0.3,
            base_score: 0.0,
            channels: 4,
        };
        // 4 + 2 + 16 for the split, 16 per leaf
        assert_eq!(stump.size_bits(), 22 + 32);
        assert_eq!(model_size_bytes(&stump), 7);
    }
}

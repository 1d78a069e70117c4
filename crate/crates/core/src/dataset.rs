use crate::error::{Error, Result};

/// Row-major feature matrix with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Vec<f64>,
    n_cols: usize,
    y: Vec<u8>,
    channels: usize,
}

impl Dataset {
    pub fn new(x: Vec<f64>, n_cols: usize, y: Vec<u8>, channels: usize) -> Result<Self> {
        if n_cols == 0 || x.len() != n_cols * y.len() {
            return Err(Error::DimensionMismatch {
                expected: n_cols * y.len(),
                got: x.len(),
            });
        }
        Ok(Dataset {
            x,
            n_cols,
            y,
            channels,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], y: Vec<u8>, channels: usize) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                got: r.len(),
            });
        }
        Dataset::new(rows.concat(), n_cols, y, channels)
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.n_cols)
    }

    pub fn value(&self, i: usize, col: usize) -> f64 {
        self.x[i * self.n_cols + col]
    }

    pub fn labels(&self) -> &[u8] {
        &self.y
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut x = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            x.extend_from_slice(self.row(i));
        }
        Dataset {
            x,
            n_cols: self.n_cols,
            y: indices.iter().map(|&i| self.y[i]).collect(),
            channels: self.channels,
        }
    }

    /// Errors on the first non-finite value or on a single-class label set.
    pub fn validate_for_training(&self) -> Result<()> {
        if let Some(pos) = self.x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / self.n_cols,
                column: pos % self.n_cols,
            });
        }
        let pos = self.y.iter().filter(|&&l| l == 1).count();
        if pos == 0 || pos == self.y.len() {
            return Err(Error::SingleClass);
        }
        Ok(())
    }

    pub fn positive_rate(&self) -> f64 {
        self.y.iter().filter(|&&l| l == 1).count() as f64 / self.y.len().max(1) as f64
    }
}

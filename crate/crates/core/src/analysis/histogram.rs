use serde::{Deserialize, Serialize};

use super::AnalysisError;

/// Fixed-width histogram with explicit under/overflow.
///
/// Bin `k` covers `[bin_edges[k], bin_edges[k + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    pub total: u64,
}

impl Histogram {
    pub fn empty(bin_count: usize, range: (f64, f64)) -> Result<Self, AnalysisError> {
        let (lo, hi) = range;
        if bin_count < 2 {
            return Err(AnalysisError::TooFewBins(bin_count));
        }
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(AnalysisError::DegenerateRange(lo, hi));
        }
        let width = (hi - lo) / bin_count as f64;
        let mut bin_edges: Vec<f64> = (0..=bin_count).map(|k| lo + k as f64 * width).collect();
        bin_edges[bin_count] = hi;
        Ok(Self {
            bin_edges,
            counts: vec![0; bin_count],
            underflow: 0,
            overflow: 0,
            total: 0,
        })
    }

    pub fn add(&mut self, v: f64) -> Result<(), AnalysisError> {
        if !v.is_finite() {
            return Err(AnalysisError::NonFinite(v));
        }
        let k = self.bin_edges.partition_point(|&e| e <= v);
        if k == 0 {
            self.underflow += 1;
        } else if k > self.counts.len() {
            self.overflow += 1;
        } else {
            self.counts[k - 1] += 1;
        }
        self.total += 1;
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        0.5 * (self.bin_edges[k] + self.bin_edges[k + 1])
    }

    /// Mean from bin centers, with under/overflow placed at the range ends.
    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return f64::NAN;
        }
        let lo = self.bin_edges[0];
        let hi = *self.bin_edges.last().unwrap();
        let inner: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| c as f64 * self.bin_center(k))
            .sum();
        (inner + lo * self.underflow as f64 + hi * self.overflow as f64) / self.total as f64
    }

    /// Counts at or above edge `k` (including overflow).
    pub fn count_at_or_above(&self, k: usize) -> u64 {
        self.counts[k..].iter().sum::<u64>() + self.overflow
    }
}

pub fn build_histogram(values: &[f64], bin_count: usize, range: (f64, f64)) -> Result<Histogram, AnalysisError> {
    let mut h = Histogram::empty(bin_count, range)?;
    for &v in values {
        h.add(v)?;
    }
    Ok(h)
}

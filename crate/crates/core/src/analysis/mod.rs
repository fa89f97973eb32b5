//! Statistical procedures applied to ensembles of readout records.

mod budget;
mod discriminate;
mod filter;
mod histogram;
mod jumps;
mod reset;
mod selection;

pub use budget::{fidelity_budget, BudgetEntry, BudgetInputs, FidelityBudget};
pub use discriminate::{
    fidelity, fidelity_with_optimal_threshold, optimal_threshold, Discriminator, FidelityEstimate, Polarity,
};
pub use filter::{
    ensemble_decay_time, exp_filter_integrate, extract_value, integrate_records, optimize_filter_constant,
    FilterOptimum,
};
pub use histogram::{build_histogram, Histogram};
pub use jumps::{
    detect_dwells, detect_jumps, extract_rates, ks_exponential, ks_truncated_exponential, CompletedDwell, Dwell, JumpDirection, JumpEvent, KsResult, RateEstimate,
    RateFit,
};
pub use reset::{evaluate_reset, ResetOutcome};
pub use selection::{herald_select, marker_value, two_point_purify, PurifyOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trajectory::SimError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("histogram needs at least 2 bins (got {0})")]
    TooFewBins(usize),
    #[error("degenerate histogram range [{0}, {1})")]
    DegenerateRange(f64, f64),
    #[error("non-finite value {0} in input")]
    NonFinite(f64),
    #[error("histograms do not share binning")]
    BinningMismatch,
    #[error("both histograms are empty")]
    EmptyHistograms,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("time {t_ns} ns is off the sample grid or outside the {what} window")]
    BadTime { t_ns: f64, what: &'static str },
    #[error("filter constant must be positive (got {0})")]
    BadTau(f64),
    #[error("record {0} has no herald marker")]
    MissingHerald(usize),
    #[error("records do not share a sample grid")]
    MixedGrid,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// A point estimate with its standard error and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n: u64,
}

impl Estimate {
    pub fn new(value: f64, stderr: f64, n: u64) -> Self {
        Self { value, stderr, n }
    }

    /// Binomial proportion `k/n`.
    pub fn proportion(k: u64, n: u64) -> Self {
        if n == 0 {
            return Self::new(f64::NAN, f64::NAN, 0);
        }
        let p = k as f64 / n as f64;
        Self::new(p, (p * (1.0 - p) / n as f64).sqrt(), n)
    }
}

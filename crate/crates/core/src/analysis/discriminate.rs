use serde::{Deserialize, Serialize};

use super::{build_histogram, AnalysisError, Estimate, Histogram};
use crate::trajectory::QubitState;

/// Which side of the threshold is read as Excited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Polarity {
    ExcitedAbove,
    ExcitedBelow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub threshold: f64,
    pub polarity: Polarity,
}

impl Discriminator {
    pub fn new(threshold: f64, polarity: Polarity) -> Self {
        Self { threshold, polarity }
    }

    /// Midpoint discriminator for pointer levels at `±separation/2`.
    pub fn midpoint() -> Self {
        Self::new(0.0, Polarity::ExcitedAbove)
    }

    /// Values equal to the threshold belong to the upper side, matching the
    /// half-open histogram bins.
    pub fn classify(&self, v: f64) -> QubitState {
        let above = v >= self.threshold;
        match (self.polarity, above) {
            (Polarity::ExcitedAbove, true) | (Polarity::ExcitedBelow, false) => QubitState::Excited,
            _ => QubitState::Ground,
        }
    }
}

/// Threshold fidelity F = 1 − P0 − P1 with binomial errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityEstimate {
    pub f: Estimate,
    /// Ground-labeled shots read Excited.
    pub p0: Estimate,
    /// Excited-labeled shots read Ground.
    pub p1: Estimate,
}

/// Edge minimizing P0 + P1, scanning every bin edge with both polarities.
pub fn optimal_threshold(hist_g: &Histogram, hist_e: &Histogram) -> Result<Discriminator, AnalysisError> {
    if hist_g.bin_edges != hist_e.bin_edges {
        return Err(AnalysisError::BinningMismatch);
    }
    if hist_g.total == 0 && hist_e.total == 0 {
        return Err(AnalysisError::EmptyHistograms);
    }
    // Errors are compared exactly as err·Ng·Ne = g_wrong·Ne + e_wrong·Ng.
    let ng = hist_g.total.max(1) as u128;
    let ne = hist_e.total.max(1) as u128;
    let mid = match (hist_g.total > 0, hist_e.total > 0) {
        (true, true) => 0.5 * (hist_g.mean() + hist_e.mean()),
        (true, false) => hist_g.mean(),
        _ => hist_e.mean(),
    };
    let preferred = if hist_e.total > 0 && hist_g.total > 0 && hist_e.mean() < hist_g.mean() {
        Polarity::ExcitedBelow
    } else {
        Polarity::ExcitedAbove
    };

    let mut best: Option<(u128, f64, bool, Discriminator)> = None;
    let mut g_above = hist_g.total as u128;
    let mut e_below = 0u128;
    for (k, &edge) in hist_g.bin_edges.iter().enumerate() {
        if k == 0 {
            g_above = hist_g.count_at_or_above(0) as u128;
            e_below = hist_e.underflow as u128;
        } else {
            g_above -= hist_g.counts[k - 1] as u128;
            e_below += hist_e.counts[k - 1] as u128;
        }
        let g_total = hist_g.total as u128;
        let e_total = hist_e.total as u128;
        let candidates = [
            (Polarity::ExcitedAbove, g_above * ne + e_below * ng),
            (Polarity::ExcitedBelow, (g_total - g_above) * ne + (e_total - e_below) * ng),
        ];
        for (pol, err) in candidates {
            let dist = (edge - mid).abs();
            let not_preferred = pol != preferred;
            let cand = (err, dist, not_preferred, Discriminator::new(edge, pol));
            let better = match &best {
                None => true,
                Some((be, bd, bp, _)) => (err, dist, not_preferred) < (*be, *bd, *bp),
            };
            if better {
                best = Some(cand);
            }
        }
    }
    Ok(best.expect("at least two edges").3)
}

fn check_values(values: &[f64], what: &'static str) -> Result<(), AnalysisError> {
    if values.is_empty() {
        return Err(AnalysisError::EmptyInput(what));
    }
    Ok(())
}

pub fn fidelity(values_g: &[f64], values_e: &[f64], disc: &Discriminator) -> Result<FidelityEstimate, AnalysisError> {
    check_values(values_g, "ground-labeled values")?;
    check_values(values_e, "excited-labeled values")?;
    let k0 = values_g
        .iter()
        .filter(|&&v| disc.classify(v) == QubitState::Excited)
        .count() as u64;
    let k1 = values_e
        .iter()
        .filter(|&&v| disc.classify(v) == QubitState::Ground)
        .count() as u64;
    let p0 = Estimate::proportion(k0, values_g.len() as u64);
    let p1 = Estimate::proportion(k1, values_e.len() as u64);
    let f = Estimate::new(
        1.0 - p0.value - p1.value,
        p0.stderr.hypot(p1.stderr),
        p0.n + p1.n,
    );
    Ok(FidelityEstimate { f, p0, p1 })
}

/// Histograms both sets on a shared grid spanning their range, picks the
/// optimal edge, and evaluates the fidelity at it.
pub fn fidelity_with_optimal_threshold(
    values_g: &[f64],
    values_e: &[f64],
    bins: usize,
) -> Result<(Discriminator, FidelityEstimate), AnalysisError> {
    check_values(values_g, "ground-labeled values")?;
    check_values(values_e, "excited-labeled values")?;
    let (mut lo, mut hi) = values_g
        .iter()
        .chain(values_e)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(AnalysisError::NonFinite(if lo.is_finite() { hi } else { lo }));
    }
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 1e-9;
    let range = (lo - pad, hi + pad);
    let hg = build_histogram(values_g, bins, range)?;
    let he = build_histogram(values_e, bins, range)?;
    let disc = optimal_threshold(&hg, &he)?;
    Ok((disc, fidelity(values_g, values_e, &disc)?))
}

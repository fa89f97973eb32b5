use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fidelity_with_optimal_threshold, AnalysisError, Discriminator, Estimate, FidelityEstimate};
use crate::trajectory::{ExperimentRecord, HomodyneTrace, Window};

/// Single-bin sample at `t`, which must be on the grid inside the readout window.
pub fn extract_value(record: &ExperimentRecord, t_ns: f64) -> Result<f64, AnalysisError> {
    let bad = AnalysisError::BadTime {
        t_ns,
        what: "readout",
    };
    if !record.sequence.readout_window.contains(t_ns) {
        return Err(bad);
    }
    record
        .trace
        .index_of(t_ns)
        .map(|i| f64::from(record.trace.samples[i]))
        .ok_or(bad)
}

fn filter_weights(trace: &HomodyneTrace, tau_f_ns: f64, window: Window) -> Result<(usize, Vec<f64>), AnalysisError> {
    if !(tau_f_ns > 0.0) {
        return Err(AnalysisError::BadTau(tau_f_ns));
    }
    let rw = trace.readout_window;
    if window.start_ns < rw.start_ns || window.end_ns > rw.end_ns {
        return Err(AnalysisError::BadTime {
            t_ns: window.start_ns,
            what: "readout",
        });
    }
    let range = trace.index_range(window);
    if range.is_empty() {
        return Err(AnalysisError::EmptyInput("filter window"));
    }
    let weights = range
        .clone()
        .map(|i| (-(trace.time_of(i) - window.start_ns) / tau_f_ns).exp())
        .collect();
    Ok((range.start, weights))
}

// Accumulated relative to the first sample so a constant window is exact.
fn apply_weights(samples: &[f32], start: usize, weights: &[f64]) -> f64 {
    let window = &samples[start..start + weights.len()];
    let v0 = f64::from(window[0]);
    let mut num = 0.0;
    let mut den = 0.0;
    for (w, &v) in weights.iter().zip(window) {
        num += w * (f64::from(v) - v0);
        den += w;
    }
    v0 + num / den
}

/// Exponentially weighted mean `Σ w_i v_i / Σ w_i` with
/// `w_i = exp(−(t_i − start)/τ_f)` over the samples in `window`.
pub fn exp_filter_integrate(trace: &HomodyneTrace, tau_f_ns: f64, window: Window) -> Result<f64, AnalysisError> {
    let (start, weights) = filter_weights(trace, tau_f_ns, window)?;
    Ok(apply_weights(&trace.samples, start, &weights))
}

/// Filter output for every record; all records must share one sample grid.
pub fn integrate_records(records: &[ExperimentRecord], tau_f_ns: f64, window: Window) -> Result<Vec<f64>, AnalysisError> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    let (start, weights) = filter_weights(&first.trace, tau_f_ns, window)?;
    let end = start + weights.len();
    records
        .par_iter()
        .map(|r| {
            if r.trace.sample_dt_ns != first.trace.sample_dt_ns || r.trace.samples.len() < end {
                return Err(AnalysisError::MixedGrid);
            }
            Ok(apply_weights(&r.trace.samples, start, &weights))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptimum {
    pub tau_f_ns: f64,
    pub discriminator: Discriminator,
    pub fidelity: FidelityEstimate,
}

const GRID_POINTS: usize = 25;
const REFINE_STEPS: usize = 14;

/// Maximizes the threshold fidelity of the filtered value over `τ_f` in
/// `tau_range`: a log-spaced grid scan followed by golden-section refinement
/// in log τ around the best grid point. The threshold is re-optimized at
/// every candidate.
pub fn optimize_filter_constant(
    records_g: &[ExperimentRecord],
    records_e: &[ExperimentRecord],
    window: Window,
    tau_range: (f64, f64),
    bins: usize,
) -> Result<FilterOptimum, AnalysisError> {
    if records_g.is_empty() || records_e.is_empty() {
        return Err(AnalysisError::EmptyInput("filter optimization ensembles"));
    }
    let (lo, hi) = tau_range;
    if !(lo > 0.0 && hi >= lo) {
        return Err(AnalysisError::BadTau(lo));
    }
    let eval = |tau: f64| -> Result<FilterOptimum, AnalysisError> {
        let g = integrate_records(records_g, tau, window)?;
        let e = integrate_records(records_e, tau, window)?;
        let (discriminator, fidelity) = fidelity_with_optimal_threshold(&g, &e, bins)?;
        Ok(FilterOptimum {
            tau_f_ns: tau,
            discriminator,
            fidelity,
        })
    };
    let (llo, lhi) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|k| llo + (lhi - llo) * k as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let mut best: Option<FilterOptimum> = None;
    let mut best_k = 0;
    let consider = |cand: FilterOptimum, best: &mut Option<FilterOptimum>| -> bool {
        let take = best.is_none_or(|b| cand.fidelity.f.value > b.fidelity.f.value);
        if take {
            *best = Some(cand);
        }
        take
    };
    for (k, &lt) in grid.iter().enumerate() {
        if consider(eval(lt.exp())?, &mut best) {
            best_k = k;
        }
    }
    let mut a = grid[best_k.saturating_sub(1)];
    let mut b = grid[(best_k + 1).min(GRID_POINTS - 1)];
    if b > a {
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - phi * (b - a);
        let mut d = a + phi * (b - a);
        let mut fc = eval(c.exp())?;
        let mut fd = eval(d.exp())?;
        for _ in 0..REFINE_STEPS {
            consider(fc, &mut best);
            consider(fd, &mut best);
            if fc.fidelity.f.value >= fd.fidelity.f.value {
                b = d;
                d = c;
                fd = fc;
                c = b - phi * (b - a);
                fc = eval(c.exp())?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + phi * (b - a);
                fd = eval(d.exp())?;
            }
        }
        consider(fc, &mut best);
        consider(fd, &mut best);
    }
    Ok(best.expect("grid is non-empty"))
}

/// Relaxation time of the ensemble-averaged signal during readout, in µs.
///
/// The difference between the mean excited-prepared and mean ground-prepared
/// traces decays as `exp(−t(Γ↑ + Γ↓))` for a two-state process; a weighted
/// log-linear fit over `window` gives the decay time. Bins where the
/// difference is not resolved above five standard errors are skipped.
pub fn ensemble_decay_time(
    records_g: &[ExperimentRecord],
    records_e: &[ExperimentRecord],
    window: Window,
) -> Result<Option<Estimate>, AnalysisError> {
    let (Some(first_g), Some(_)) = (records_g.first(), records_e.first()) else {
        return Err(AnalysisError::EmptyInput("decay-time ensembles"));
    };
    let trace = &first_g.trace;
    let range = trace.index_range(window);
    if range.is_empty() {
        return Err(AnalysisError::EmptyInput("decay-time window"));
    }
    let moments = |records: &[ExperimentRecord]| -> Result<Vec<(f64, f64)>, AnalysisError> {
        let n = records.len() as f64;
        let mut out = Vec::with_capacity(range.len());
        for i in range.clone() {
            let (s, s2) = records.iter().try_fold((0.0, 0.0), |(s, s2), r| {
                let v = f64::from(*r.trace.samples.get(i).ok_or(AnalysisError::MixedGrid)?);
                Ok::<_, AnalysisError>((s + v, s2 + v * v))
            })?;
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0) / n;
            out.push((mean, var));
        }
        Ok(out)
    };
    let mg = moments(records_g)?;
    let me = moments(records_e)?;
    let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut used = 0u64;
    for (k, i) in range.clone().enumerate() {
        let diff = me[k].0 - mg[k].0;
        let var = me[k].1 + mg[k].1;
        if !(diff > 5.0 * var.sqrt()) || var <= 0.0 {
            continue;
        }
        let x = trace.time_of(i) * 1e-3;
        let y = diff.ln();
        let w = diff * diff / var;
        sw += w;
        swx += w * x;
        swy += w * y;
        swxx += w * x * x;
        swxy += w * x * y;
        used += 1;
    }
    if used < 3 {
        return Ok(None);
    }
    let det = sw * swxx - swx * swx;
    let slope = (sw * swxy - swx * swy) / det;
    let slope_se = (sw / det).sqrt();
    if !(slope < 0.0) {
        return Ok(None);
    }
    let t1 = -1.0 / slope;
    Ok(Some(Estimate::new(t1, t1 * t1 * slope_se, used)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{PulseSequence, QubitState, StatePath};

    fn record(samples: Vec<f32>) -> ExperimentRecord {
        let n = samples.len() as f64;
        let w = Window::new(0.0, 10.0 * n);
        ExperimentRecord {
            sequence: PulseSequence {
                herald_window: None,
                t_s_ns: None,
                prep_pi_pulse: false,
                readout_window: w,
                t_a_ns: 0.0,
                t_b_ns: 10.0,
                t_d_ns: 0.0,
            },
            trace: HomodyneTrace {
                sample_dt_ns: 10.0,
                samples,
                readout_window: w,
            },
            truth: Some(StatePath::constant(QubitState::Ground, 10.0 * n)),
            prepared_label: QubitState::Ground,
        }
    }

    #[test]
    fn flat_weight_limit_is_mean() {
        let r = record((0..50).map(|i| (i as f32 * 0.37).sin()).collect());
        let w = Window::new(100.0, 400.0);
        let v = exp_filter_integrate(&r.trace, 1e9, w).unwrap();
        let slice = &r.trace.samples[10..40];
        let mean = slice.iter().map(|&x| f64::from(x)).sum::<f64>() / slice.len() as f64;
        assert!((v - mean).abs() <= 1e-6 * mean.abs().max(1e-12), "{v} {mean}");
    }

    #[test]
    fn delta_weight_limit_is_first_bin() {
        let r = record((0..50).map(|i| 1.0 + i as f32).collect());
        let w = Window::new(100.0, 400.0);
        let v = exp_filter_integrate(&r.trace, 0.5, w).unwrap();
        assert!((v - 11.0).abs() < 1e-3 * 11.0);
    }

    #[test]
    fn constant_trace_is_exact() {
        let r = record(vec![0.3125; 40]);
        for tau in [1.0, 17.0, 300.0, 1e6] {
            assert_eq!(exp_filter_integrate(&r.trace, tau, Window::new(0.0, 400.0)).unwrap(), 0.3125);
        }
    }

    #[test]
    fn empty_or_invalid_window_rejected() {
        let r = record(vec![1.0; 10]);
        assert!(exp_filter_integrate(&r.trace, 10.0, Window::new(50.0, 50.0)).is_err());
        assert!(exp_filter_integrate(&r.trace, 10.0, Window::new(0.0, 500.0)).is_err());
        assert!(exp_filter_integrate(&r.trace, 0.0, Window::new(0.0, 50.0)).is_err());
    }

    #[test]
    fn extract_value_checks_grid_and_window() {
        let r = record((0..10).map(|i| i as f32).collect());
        assert_eq!(extract_value(&r, 30.0).unwrap(), 3.0);
        assert!(extract_value(&r, 35.0).is_err());
        assert!(extract_value(&r, -10.0).is_err());
        assert!(extract_value(&r, 100.0).is_err());
    }

    #[test]
    fn noiseless_filter_optimum_is_perfect() {
        let g: Vec<_> = (0..20).map(|_| record(vec![-0.5; 30])).collect();
        let e: Vec<_> = (0..20).map(|_| record(vec![0.5; 30])).collect();
        let opt = optimize_filter_constant(&g, &e, Window::new(0.0, 300.0), (10.0, 18_000.0), 100).unwrap();
        assert_eq!(opt.fidelity.f.value, 1.0);
        assert!(opt.tau_f_ns >= 10.0 && opt.tau_f_ns <= 18_000.0);
    }
}

//! Quantum-jump detection with a two-threshold (Schmitt) state assignment,
//! and dwell-time rate estimation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{Discriminator, Estimate, Polarity};
use crate::trajectory::{ExperimentRecord, HomodyneTrace, QubitState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time_ns: f64,
    pub direction: JumpDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dwell {
    pub state: QubitState,
    pub start_ns: f64,
    pub duration_ns: f64,
    /// Time left in the window when the dwell began.
    pub remaining_ns: f64,
    /// The trace ended before the dwell did.
    pub censored: bool,
}

/// A completed dwell with the longest duration that could have completed
/// inside its window, both after subtracting the dead time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletedDwell {
    pub duration_ns: f64,
    pub limit_ns: f64,
}

struct Schmitt {
    upper: f64,
    lower: f64,
    polarity: Polarity,
}

impl Schmitt {
    fn new(disc: &Discriminator, hysteresis: f64) -> Self {
        let half = 0.5 * hysteresis.max(0.0);
        Self {
            upper: disc.threshold + half,
            lower: disc.threshold - half,
            polarity: disc.polarity,
        }
    }

    /// State confirmed by this sample, if it is beyond either far threshold.
    fn confirm(&self, v: f64) -> Option<QubitState> {
        let (high, low) = match self.polarity {
            Polarity::ExcitedAbove => (QubitState::Excited, QubitState::Ground),
            Polarity::ExcitedBelow => (QubitState::Ground, QubitState::Excited),
        };
        if v >= self.upper {
            Some(high)
        } else if v < self.lower {
            Some(low)
        } else {
            None
        }
    }
}

/// Runs the state machine over the readout window and returns the time the
/// state was first established together with all subsequent jumps.
///
/// A state change is confirmed at the far threshold but timed at the start of
/// the run of samples on the new side of the centre threshold, so entering
/// and leaving a state carry the same small delay.
fn schmitt_scan(trace: &HomodyneTrace, disc: &Discriminator, hysteresis: f64) -> (Option<(f64, QubitState)>, Vec<JumpEvent>) {
    let schmitt = Schmitt::new(disc, hysteresis);
    let mut state: Option<QubitState> = None;
    let mut established = None;
    let mut events = Vec::new();
    let mut side: Option<QubitState> = None;
    let mut run_start = 0.0;
    for i in trace.index_range(trace.readout_window) {
        let v = f64::from(trace.samples[i]);
        let here = disc.classify(v);
        if side != Some(here) {
            side = Some(here);
            run_start = trace.time_of(i);
        }
        let Some(seen) = schmitt.confirm(v) else {
            continue;
        };
        let t = run_start;
        match state {
            None => {
                state = Some(seen);
                established = Some((t, seen));
            }
            Some(s) if s != seen => {
                state = Some(seen);
                events.push(JumpEvent {
                    time_ns: t,
                    direction: match seen {
                        QubitState::Excited => JumpDirection::Up,
                        QubitState::Ground => JumpDirection::Down,
                    },
                });
            }
            _ => {}
        }
    }
    (established, events)
}

/// Jumps found by the Schmitt trigger with thresholds at
/// `threshold ± hysteresis/2`. Consecutive events always alternate.
pub fn detect_jumps(trace: &HomodyneTrace, disc: &Discriminator, hysteresis: f64) -> Vec<JumpEvent> {
    schmitt_scan(trace, disc, hysteresis).1
}

/// Dwell intervals between detected jumps. The first dwell starts when the
/// state is first established; the last is censored at the window end.
pub fn detect_dwells(trace: &HomodyneTrace, disc: &Discriminator, hysteresis: f64) -> Vec<Dwell> {
    let (established, events) = schmitt_scan(trace, disc, hysteresis);
    let Some((mut start, mut state)) = established else {
        return Vec::new();
    };
    let end = trace.readout_window.end_ns.min(trace.time_of(trace.samples.len()));
    let mut out = Vec::with_capacity(events.len() + 1);
    for ev in events {
        out.push(Dwell {
            state,
            start_ns: start,
            duration_ns: ev.time_ns - start,
            remaining_ns: end - start,
            censored: false,
        });
        start = ev.time_ns;
        state = state.flipped();
    }
    out.push(Dwell {
        state,
        start_ns: start,
        duration_ns: end - start,
        remaining_ns: end - start,
        censored: true,
    });
    out
}

/// Folds every dwell shorter than `min_dwell_ns` into its neighbours, so an
/// excursion counts only if it outlasts the dead time. A short final dwell
/// leaves the one before it censored.
fn merge_short(dwells: Vec<Dwell>, min_dwell_ns: f64) -> Vec<Dwell> {
    let mut out: Vec<Dwell> = Vec::with_capacity(dwells.len());
    let mut absorb = false;
    for d in dwells {
        if absorb {
            let last = out.last_mut().expect("absorb follows a kept dwell");
            last.duration_ns += d.duration_ns;
            last.censored = d.censored;
            absorb = false;
            continue;
        }
        if d.duration_ns >= min_dwell_ns {
            out.push(d);
            continue;
        }
        match out.last_mut() {
            None => {}
            Some(last) if d.censored => last.censored = true,
            Some(last) => {
                last.duration_ns += d.duration_ns;
                absorb = true;
            }
        }
    }
    out
}

/// Censored-exponential maximum-likelihood rate for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    /// `None` when fewer than [`MIN_DWELLS`] dwells were usable.
    pub rate_per_us: Option<f64>,
    /// Rate of excursions that outlast the dead time, before the correction
    /// for shorter ones; this is the law the completed dwells follow.
    pub observed_per_us: Option<f64>,
    pub stderr_per_us: f64,
    /// One-sided 95% upper bound.
    pub upper95_per_us: f64,
    /// Completed dwells (observed transitions out of the state).
    pub events: u64,
    /// Dwells used, completed plus censored.
    pub dwells: u64,
    pub exposure_us: f64,
}

pub const MIN_DWELLS: u64 = 10;

impl RateEstimate {
    fn from_dwells<'a>(dwells: impl Iterator<Item = &'a Dwell>, min_dwell_ns: f64) -> Self {
        let (mut events, mut used, mut exposure_ns) = (0u64, 0u64, 0.0);
        for d in dwells {
            if d.duration_ns < min_dwell_ns {
                continue;
            }
            used += 1;
            exposure_ns += d.duration_ns - min_dwell_ns;
            if !d.censored {
                events += 1;
            }
        }
        let exposure_us = exposure_ns * 1e-3;
        let upper95_per_us = if exposure_us > 0.0 {
            ChiSquared::new(2.0 * (events as f64 + 1.0))
                .map(|c| c.inverse_cdf(0.95) / (2.0 * exposure_us))
                .unwrap_or(f64::INFINITY)
        } else {
            f64::INFINITY
        };
        let (rate, se) = if used >= MIN_DWELLS && exposure_us > 0.0 {
            let r = events as f64 / exposure_us;
            (Some(r), if events > 0 { r / (events as f64).sqrt() } else { 0.0 })
        } else {
            (None, f64::NAN)
        };
        Self {
            rate_per_us: rate,
            observed_per_us: rate,
            stderr_per_us: se,
            upper95_per_us,
            events,
            dwells: used,
            exposure_us,
        }
    }

    fn scaled(mut self, factor: f64) -> Self {
        self.rate_per_us = self.observed_per_us.map(|r| r * factor);
        self.stderr_per_us *= factor;
        self.upper95_per_us *= factor;
        self
    }
}

/// Undoes the dead time: leaving a state is seen only when the excursion
/// lasts at least `min_dwell_ns`, so each observed rate is the true one times
/// `exp(−Γ_other·min_dwell)`. The pair is solved by fixed-point iteration.
fn correct_for_dead_time(up: RateEstimate, down: RateEstimate, min_dwell_ns: f64) -> (RateEstimate, RateEstimate) {
    let t = min_dwell_ns * 1e-3;
    let (r_up, r_down) = (up.observed_per_us.unwrap_or(0.0), down.observed_per_us.unwrap_or(0.0));
    let (mut g_up, mut g_down) = (r_up, r_down);
    for _ in 0..100 {
        (g_up, g_down) = (r_up * (g_down * t).exp(), r_down * (g_up * t).exp());
    }
    (up.scaled((g_down * t).exp()), down.scaled((g_up * t).exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub gamma_up: RateEstimate,
    pub gamma_down: RateEstimate,
    /// 1/Γ↓ in µs.
    pub t1_fit_us: Option<Estimate>,
    pub excited_dwells: Vec<CompletedDwell>,
    pub ground_dwells: Vec<CompletedDwell>,
    pub min_dwell_ns: f64,
}

/// Rates from detected dwells across `records`.
///
/// `min_dwell_ns` is a dead time. Excursions shorter than it, which the
/// detector resolves only partly, are merged into the surrounding dwell; the
/// remaining dwells are shortened by it, which leaves an exponential law
/// unchanged, and the rates are corrected for the merged excursions.
/// Censored dwells contribute exposure only.
pub fn extract_rates(records: &[ExperimentRecord], disc: &Discriminator, hysteresis: f64, min_dwell_ns: f64) -> RateFit {
    let dwells: Vec<Dwell> = records
        .par_iter()
        .map(|r| merge_short(detect_dwells(&r.trace, disc, hysteresis), min_dwell_ns))
        .collect::<Vec<_>>()
        .concat();
    let of = |s: QubitState| dwells.iter().filter(move |d| d.state == s);
    let (gamma_up, gamma_down) = correct_for_dead_time(
        RateEstimate::from_dwells(of(QubitState::Ground), min_dwell_ns),
        RateEstimate::from_dwells(of(QubitState::Excited), min_dwell_ns),
        min_dwell_ns,
    );
    let t1_fit_us = gamma_down.rate_per_us.filter(|&r| r > 0.0).map(|r| {
        Estimate::new(1.0 / r, gamma_down.stderr_per_us / (r * r), gamma_down.events)
    });
    let complete = |s: QubitState| -> Vec<CompletedDwell> {
        of(s)
            .filter(|d| !d.censored && d.duration_ns >= min_dwell_ns)
            .map(|d| CompletedDwell {
                duration_ns: d.duration_ns - min_dwell_ns,
                limit_ns: d.remaining_ns - min_dwell_ns,
            })
            .collect()
    };
    RateFit {
        gamma_up,
        gamma_down,
        t1_fit_us,
        excited_dwells: complete(QubitState::Excited),
        ground_dwells: complete(QubitState::Ground),
        min_dwell_ns,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: u64,
}

/// One-sample Kolmogorov–Smirnov test of `samples` against an exponential
/// law with the given rate (same time unit as the samples).
pub fn ks_exponential(samples: &[f64], rate: f64) -> KsResult {
    ks_uniform(samples.iter().map(|&x| 1.0 - (-rate * x.max(0.0)).exp()).collect())
}

/// Kolmogorov–Smirnov test of completed dwells against an exponential law
/// with `rate` per ns. A dwell only completes if it is shorter than its
/// limit, so each is compared with the exponential truncated there; under
/// the null `F(d)/F(limit)` is uniform.
pub fn ks_truncated_exponential(dwells: &[CompletedDwell], rate: f64) -> KsResult {
    let cdf = |x: f64| -(-rate * x.max(0.0)).exp_m1();
    ks_uniform(
        dwells
            .iter()
            .map(|d| {
                let top = cdf(d.limit_ns);
                if top > 0.0 {
                    (cdf(d.duration_ns) / top).min(1.0)
                } else {
                    1.0
                }
            })
            .collect(),
    )
}

/// Asymptotic Kolmogorov p-value with Stephens' small-sample factor. With a
/// fitted rate the test is conservative.
fn ks_uniform(mut us: Vec<f64>) -> KsResult {
    us.sort_by(f64::total_cmp);
    let n = us.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &u) in us.iter().enumerate() {
        d = d.max((i as f64 + 1.0) / n - u).max(u - i as f64 / n);
    }
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    KsResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
        n: us.len() as u64,
    }
}

fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += if j % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

use serde::{Deserialize, Serialize};

use super::{Estimate, FidelityEstimate};
use crate::model::RatePair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub name: String,
    pub loss: f64,
    pub stderr: f64,
    pub method: String,
}

/// Decomposition of `1 − F_raw` into named contributions; `remaining` is the
/// residual, so the entries always sum to `total_loss`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityBudget {
    pub entries: Vec<BudgetEntry>,
    pub total_loss: Estimate,
}

impl FidelityBudget {
    pub fn entry(&self, name: &str) -> Option<&BudgetEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.loss).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetInputs {
    pub raw: FidelityEstimate,
    pub heralded: FidelityEstimate,
    /// Rates measured during readout, in 1/µs.
    pub rates: RatePair,
    pub rates_stderr: RatePair,
    /// Misclassification rate of purified survivors.
    pub purified_overlap: Estimate,
    /// Effective time between preparation and the discrimination point, in ns.
    pub t_window_ns: f64,
    /// Independently measured T1, in µs.
    pub t1_us: f64,
}

fn loss_over(rate_per_us: f64, t_window_ns: f64) -> f64 {
    1.0 - (-rate_per_us * t_window_ns * 1e-3).exp()
}

/// Derivative of `loss_over` with respect to the rate, for error propagation.
fn loss_slope(rate_per_us: f64, t_window_ns: f64) -> f64 {
    let t = t_window_ns * 1e-3;
    t * (-rate_per_us * t).exp()
}

pub fn fidelity_budget(inputs: &BudgetInputs) -> FidelityBudget {
    let BudgetInputs {
        raw,
        heralded,
        rates,
        rates_stderr,
        purified_overlap,
        t_window_ns,
        t1_us,
    } = *inputs;
    let t1_rate = 1.0 / t1_us;
    let excess_down = rates.gamma_down - t1_rate;
    let mut entries = vec![
        BudgetEntry {
            name: "t1_decay".into(),
            loss: loss_over(t1_rate, t_window_ns),
            stderr: 0.0,
            method: "measured T1".into(),
        },
        BudgetEntry {
            name: "thermal_population".into(),
            loss: heralded.f.value - raw.f.value,
            // heralded shots are a subset of the raw ones; adding in
            // quadrature overstates the error
            stderr: heralded.f.stderr.hypot(raw.f.stderr),
            method: "heralding".into(),
        },
        BudgetEntry {
            name: "gamma_up".into(),
            loss: loss_over(rates.gamma_up, t_window_ns),
            stderr: loss_slope(rates.gamma_up, t_window_ns) * rates_stderr.gamma_up,
            method: "individual jumps".into(),
        },
        BudgetEntry {
            name: "gamma_down".into(),
            loss: loss_over(excess_down, t_window_ns),
            stderr: loss_slope(excess_down, t_window_ns) * rates_stderr.gamma_down,
            method: "individual jumps".into(),
        },
        BudgetEntry {
            name: "snr".into(),
            loss: purified_overlap.value,
            stderr: purified_overlap.stderr,
            method: "pointer state overlap".into(),
        },
    ];
    let total = 1.0 - raw.f.value;
    let accounted: f64 = entries.iter().map(|e| e.loss).sum();
    let remaining_se = entries.iter().map(|e| e.stderr * e.stderr).sum::<f64>() + raw.f.stderr * raw.f.stderr;
    entries.push(BudgetEntry {
        name: "remaining".into(),
        loss: total - accounted,
        stderr: remaining_se.sqrt(),
        method: "residual".into(),
    });
    FidelityBudget {
        entries,
        total_loss: Estimate::new(total, raw.f.stderr, raw.f.n),
    }
}

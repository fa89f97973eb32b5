//! Named experiments: simulate, analyze, and write a JSON report plus CSV
//! artifacts.
//!
//! Every analysis runs on records reduced to what a trace file stores (see
//! [`observed_view`]), so `analyze` on exported traces reproduces `run`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{
    self, build_histogram, ensemble_decay_time, extract_rates, fidelity, fidelity_with_optimal_threshold,
    herald_select, ks_truncated_exponential, marker_value, optimize_filter_constant, two_point_purify, AnalysisError,
    BudgetInputs, CompletedDwell, Discriminator, Estimate, FidelityBudget, FidelityEstimate, Histogram, KsResult, RateEstimate,
    ResetOutcome,
};
use crate::config::{serialize, SimParams};
use crate::model::{self, RatePair};
use crate::traceio::{export_traces, observed_view, write_atomic, TraceFormat, TraceIoError};
use crate::trajectory::{simulate_ensemble, ExperimentRecord, PulseSequence, QubitState, SimError, Window};

pub const EXPERIMENTS: [&str; 7] = ["hist", "power-sweep", "purify", "herald", "budget", "reset", "jumps"];

/// Experiments that need nothing but recorded traces.
pub const ANALYZABLE: [&str; 4] = ["hist", "purify", "herald", "jumps"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown experiment `{0}`; available: {list}", list = EXPERIMENTS.join(", "))]
    Unknown(String),
    #[error("experiment `{0}` needs simulation; traces can be analyzed with: {list}", list = ANALYZABLE.join(", "))]
    NeedsSimulation(String),
    #[error("invalid parameters: {0}")]
    Sim(#[from] SimError),
    #[error("analysis failed: {0}")]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Io(#[from] TraceIoError),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    /// `simulation`, or the path of the analyzed trace file.
    pub source: String,
    pub params: SimParams,
    pub summary: Summary,
    /// Files written next to the report.
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summary {
    Hist(HistSummary),
    PowerSweep(Vec<SweepPoint>),
    Purify(PurifySummary),
    Herald(HeraldSummary),
    Budget(Box<BudgetSummary>),
    Reset(ResetSummary),
    Jumps(JumpSummary),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistSummary {
    pub t_d_ns: f64,
    pub discriminator: Discriminator,
    pub fidelity: FidelityEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub nbar: f64,
    pub snr: f64,
    pub single_bin: FidelityEstimate,
    pub integrated: FidelityEstimate,
    pub tau_f_ns: f64,
    /// From the decay of the labeled mean traces; `None` if it cannot be fitted.
    pub t1_readout_us: Option<Estimate>,
    pub t1_model_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurifySummary {
    pub t_d_ns: f64,
    /// Fitted to the raw `t_A` values; decides which records survive.
    pub discriminator: Discriminator,
    /// Fitted to the survivors' `t_D` values; counts misclassifications.
    pub pure_discriminator: Discriminator,
    /// Single-bin fidelity at `t_A` before selection.
    pub raw_at_t_a: FidelityEstimate,
    pub retained: Estimate,
    pub misclassified: u64,
    /// Misclassified survivors over survivors.
    pub misclassification: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeraldSummary {
    pub discriminator: Discriminator,
    pub raw: FidelityEstimate,
    pub heralded: FidelityEstimate,
    pub improvement: Estimate,
    pub retained_ground: Estimate,
    pub retained_excited: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpSummary {
    pub hysteresis: f64,
    pub min_dwell_ns: f64,
    pub gamma_up: RateEstimate,
    pub gamma_down: RateEstimate,
    pub t1_fit_us: Option<Estimate>,
    /// Exponentiality of completed excited dwells against the fitted Γ↓.
    pub ks_down: Option<KsResult>,
    pub ks_up: Option<KsResult>,
    /// Rates the model injects while the readout is on.
    pub model_rates: RatePair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub budget: FidelityBudget,
    pub inputs: BudgetInputs,
    pub herald: HeraldSummary,
    pub purify: PurifySummary,
    pub jumps: JumpSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResetSummary {
    pub t_s_ns: f64,
    pub t_d_ns: f64,
    pub outcome: ResetOutcome,
}

/// Collects artifacts; writes nothing when there is no output directory.
struct Artifacts<'a> {
    dir: Option<&'a Path>,
    written: Vec<String>,
}

impl Artifacts<'_> {
    fn path(&mut self, name: &str) -> Option<PathBuf> {
        let dir = self.dir?;
        self.written.push(name.to_string());
        Some(dir.join(name))
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), ExperimentError> {
        let Some(path) = self.path(name) else {
            return Ok(());
        };
        let mut text = header.join(",");
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        write_atomic(&path, text.as_bytes())?;
        Ok(())
    }

    fn traces(&mut self, name: &str, records: &[ExperimentRecord], truth: bool) -> Result<(), ExperimentError> {
        if let Some(path) = self.path(name) {
            export_traces(records, &path, TraceFormat::Binary, truth)?;
        }
        Ok(())
    }

    fn histograms(&mut self, name: &str, ground: &[f64], excited: &[f64], bins: usize) -> Result<(), ExperimentError> {
        if self.dir.is_none() {
            return Ok(());
        }
        let (hg, he) = shared_histograms(ground, excited, bins)?;
        let rows: Vec<Vec<String>> = (0..hg.bin_count())
            .map(|k| {
                vec![
                    hg.bin_center(k).to_string(),
                    hg.counts[k].to_string(),
                    he.counts[k].to_string(),
                ]
            })
            .collect();
        self.csv(name, &["voltage", "ground_count", "excited_count"], &rows)
    }
}

fn shared_histograms(ground: &[f64], excited: &[f64], bins: usize) -> Result<(Histogram, Histogram), AnalysisError> {
    let (lo, hi) = ground
        .iter()
        .chain(excited)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    // widen so the maximum lands inside the last half-open bin
    let hi = hi + (hi - lo) * 1e-9;
    Ok((build_histogram(ground, bins, (lo, hi))?, build_histogram(excited, bins, (lo, hi))?))
}

fn values_at(records: &[ExperimentRecord], marker: impl Fn(&PulseSequence) -> f64) -> Result<Vec<f64>, AnalysisError> {
    records.iter().map(|r| marker_value(r, marker(&r.sequence))).collect()
}

fn check_labels(g: &[ExperimentRecord], e: &[ExperimentRecord]) -> Result<(), ExperimentError> {
    if g.is_empty() || e.is_empty() {
        return Err(ExperimentError::Input(format!(
            "need both ground- and excited-prepared records (got {} and {})",
            g.len(),
            e.len()
        )));
    }
    Ok(())
}

fn labeled_ensembles(
    params: &SimParams,
    seq: &PulseSequence,
) -> Result<(Vec<ExperimentRecord>, Vec<ExperimentRecord>), SimError> {
    let run = |label| -> Result<Vec<ExperimentRecord>, SimError> {
        let mut rs = simulate_ensemble(params, &seq.for_label(label), label, params.n_traces, params.master_seed)?;
        rs.iter_mut().for_each(observed_view);
        Ok(rs)
    };
    Ok((run(QubitState::Ground)?, run(QubitState::Excited)?))
}

fn joined(g: Vec<ExperimentRecord>, e: Vec<ExperimentRecord>) -> Vec<ExperimentRecord> {
    let mut all = g;
    all.extend(e);
    all
}

fn analyze_hist(
    g: &[ExperimentRecord],
    e: &[ExperimentRecord],
    params: &SimParams,
    art: &mut Artifacts,
) -> Result<HistSummary, ExperimentError> {
    check_labels(g, e)?;
    let t_d_ns = g[0].sequence.t_d_ns;
    let vg = values_at(g, |s| s.t_d_ns)?;
    let ve = values_at(e, |s| s.t_d_ns)?;
    let (discriminator, fid) = fidelity_with_optimal_threshold(&vg, &ve, params.analysis.threshold_bins)?;
    art.histograms("histogram.csv", &vg, &ve, params.analysis.hist_bins)?;
    Ok(HistSummary {
        t_d_ns,
        discriminator,
        fidelity: fid,
    })
}

fn analyze_purify(
    g: &[ExperimentRecord],
    e: &[ExperimentRecord],
    params: &SimParams,
    art: &mut Artifacts,
) -> Result<PurifySummary, ExperimentError> {
    check_labels(g, e)?;
    let ag = values_at(g, |s| s.t_a_ns)?;
    let ae = values_at(e, |s| s.t_a_ns)?;
    let (disc, raw_at_t_a) = fidelity_with_optimal_threshold(&ag, &ae, params.analysis.threshold_bins)?;
    let mut out = two_point_purify(g, &disc)?;
    let from_e = two_point_purify(e, &disc)?;
    out.retained.extend(from_e.retained.iter().map(|i| i + g.len()));
    out.values_ground.extend(from_e.values_ground);
    out.values_excited.extend(from_e.values_excited);
    // the raw threshold is pulled toward ground by decays; the pure
    // distributions get their own
    let pure_discriminator = if out.values_ground.is_empty() || out.values_excited.is_empty() {
        disc
    } else {
        fidelity_with_optimal_threshold(&out.values_ground, &out.values_excited, params.analysis.threshold_bins)?.0
    };
    let mis = out.misclassified(&pure_discriminator);
    if !out.values_ground.is_empty() && !out.values_excited.is_empty() {
        art.histograms(
            "purified_histogram.csv",
            &out.values_ground,
            &out.values_excited,
            params.analysis.hist_bins,
        )?;
    }
    Ok(PurifySummary {
        t_d_ns: g[0].sequence.t_d_ns,
        discriminator: disc,
        pure_discriminator,
        raw_at_t_a,
        retained: Estimate::proportion(out.survivors(), (g.len() + e.len()) as u64),
        misclassified: mis,
        misclassification: Estimate::proportion(mis, out.survivors()),
    })
}

fn analyze_herald(
    g: &[ExperimentRecord],
    e: &[ExperimentRecord],
    params: &SimParams,
    art: &mut Artifacts,
) -> Result<HeraldSummary, ExperimentError> {
    check_labels(g, e)?;
    let vg = values_at(g, |s| s.t_d_ns)?;
    let ve = values_at(e, |s| s.t_d_ns)?;
    let (disc, raw) = fidelity_with_optimal_threshold(&vg, &ve, params.analysis.threshold_bins)?;
    let kg = herald_select(g, &disc)?;
    let ke = herald_select(e, &disc)?;
    let hg: Vec<f64> = kg.iter().map(|&i| vg[i]).collect();
    let he: Vec<f64> = ke.iter().map(|&i| ve[i]).collect();
    if hg.is_empty() || he.is_empty() {
        return Err(ExperimentError::Input("heralding rejected every record of one label".into()));
    }
    let heralded = fidelity(&hg, &he, &disc)?;
    art.histograms("histogram_raw.csv", &vg, &ve, params.analysis.hist_bins)?;
    art.histograms("histogram_heralded.csv", &hg, &he, params.analysis.hist_bins)?;
    Ok(HeraldSummary {
        discriminator: disc,
        raw,
        heralded,
        improvement: Estimate::new(
            heralded.f.value - raw.f.value,
            heralded.f.stderr.hypot(raw.f.stderr),
            heralded.f.n,
        ),
        retained_ground: Estimate::proportion(kg.len() as u64, g.len() as u64),
        retained_excited: Estimate::proportion(ke.len() as u64, e.len() as u64),
    })
}

fn analyze_jumps(
    records: &[ExperimentRecord],
    params: &SimParams,
    art: &mut Artifacts,
) -> Result<JumpSummary, ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::Input("no records to analyze".into()));
    }
    let disc = Discriminator::midpoint();
    let hysteresis = params.analysis.hysteresis_sigma * params.readout.sigma_bin();
    if !hysteresis.is_finite() {
        return Err(ExperimentError::Input("hysteresis is undefined at zero SNR".into()));
    }
    let fit = extract_rates(records, &disc, hysteresis, params.analysis.min_dwell_ns);
    let ks = |dwells: &[CompletedDwell], rate: &RateEstimate| {
        rate.observed_per_us
            .filter(|&r| r > 0.0 && !dwells.is_empty())
            .map(|r| ks_truncated_exponential(dwells, r * 1e-3))
    };
    let rows: Vec<Vec<String>> = fit
        .excited_dwells
        .iter()
        .map(|d| ("excited", d))
        .chain(fit.ground_dwells.iter().map(|d| ("ground", d)))
        .map(|(s, d)| vec![s.to_string(), d.duration_ns.to_string(), d.limit_ns.to_string()])
        .collect();
    art.csv("dwells.csv", &["state", "duration_ns", "limit_ns"], &rows)?;
    Ok(JumpSummary {
        hysteresis,
        min_dwell_ns: fit.min_dwell_ns,
        gamma_up: fit.gamma_up,
        gamma_down: fit.gamma_down,
        t1_fit_us: fit.t1_fit_us,
        ks_down: ks(&fit.excited_dwells, &fit.gamma_down),
        ks_up: ks(&fit.ground_dwells, &fit.gamma_up),
        model_rates: model::effective_rates(&params.qubit, &params.readout, true).map_err(SimError::from)?,
    })
}

fn hist_sequence(params: &SimParams) -> Result<PulseSequence, SimError> {
    params.sequence.resolve(&params.readout)
}

fn herald_sequence(params: &SimParams) -> Result<PulseSequence, SimError> {
    let mut t = params.sequence;
    t.herald = true;
    t.resolve(&params.readout)
}

/// `t_D` moved off `t_A`, midway to `t_B` unless configured.
fn purify_sequence(params: &SimParams) -> Result<PulseSequence, SimError> {
    let mut t = params.sequence;
    let offset = params.analysis.purify_t_d_offset_ns.unwrap_or_else(|| {
        let mid = t.t_a_offset(&params.readout) + 0.5 * t.t_ab_spacing_ns;
        let dt = params.readout.sample_dt_ns;
        (mid / dt).round() * dt
    });
    t.t_d_offset_ns = Some(offset);
    t.resolve(&params.readout)
}

/// Long Excited-prepared records for jump statistics.
fn jump_records(params: &SimParams) -> Result<Vec<ExperimentRecord>, SimError> {
    let mut t = params.sequence;
    t.herald = false;
    t.readout_duration_ns = params.analysis.jump_record_us * 1e3;
    let seq = t.resolve(&params.readout)?.for_label(QubitState::Excited);
    let mut rs = simulate_ensemble(
        params,
        &seq,
        QubitState::Excited,
        params.analysis.jump_records.max(1),
        params.master_seed,
    )?;
    rs.iter_mut().for_each(observed_view);
    Ok(rs)
}

fn fmt_est(e: &Estimate) -> [String; 2] {
    [e.value.to_string(), e.stderr.to_string()]
}

fn power_sweep(params: &SimParams, art: &mut Artifacts) -> Result<Vec<SweepPoint>, ExperimentError> {
    let mut points = Vec::new();
    for &nbar in &params.analysis.sweep_nbar {
        let mut p = params.clone();
        p.readout.nbar = nbar;
        p.validate()?;
        let seq = hist_sequence(&p)?;
        let (g, e) = labeled_ensembles(&p, &seq)?;
        let vg = values_at(&g, |s| s.t_d_ns)?;
        let ve = values_at(&e, |s| s.t_d_ns)?;
        let (_, single_bin) = fidelity_with_optimal_threshold(&vg, &ve, p.analysis.threshold_bins)?;
        let window = Window::new(seq.t_a_ns, seq.readout_window.end_ns);
        let tau_range = (p.readout.sample_dt_ns, 10.0 * p.qubit.t1_idle_us * 1e3);
        let opt = optimize_filter_constant(&g, &e, window, tau_range, p.analysis.threshold_bins)?;
        let t1_readout_us = ensemble_decay_time(&g, &e, window)?;
        let on = model::effective_rates(&p.qubit, &p.readout, true).map_err(SimError::from)?;
        points.push(SweepPoint {
            nbar,
            snr: model::pointer_snr(&p.readout),
            single_bin,
            integrated: opt.fidelity,
            tau_f_ns: opt.tau_f_ns,
            t1_readout_us,
            t1_model_us: on.t1_us(),
        });
    }
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|pt| {
            let t1 = pt.t1_readout_us.map_or(["".into(), "".into()], |e| fmt_est(&e));
            let mut row = vec![pt.nbar.to_string(), pt.snr.to_string()];
            row.extend(fmt_est(&pt.single_bin.f));
            row.extend(fmt_est(&pt.integrated.f));
            row.push(pt.tau_f_ns.to_string());
            row.extend(t1);
            row.push(pt.t1_model_us.to_string());
            row
        })
        .collect();
    art.csv(
        "power_sweep.csv",
        &[
            "nbar",
            "snr",
            "f_single",
            "f_single_se",
            "f_integrated",
            "f_integrated_se",
            "tau_f_ns",
            "t1_readout_us",
            "t1_readout_se_us",
            "t1_model_us",
        ],
        &rows,
    )?;
    Ok(points)
}

/// Effective integration time of a single-bin reading at `t_D`: time since
/// readout turn-on less the filter's midpoint delay.
pub fn budget_window_ns(params: &SimParams, seq: &PulseSequence) -> f64 {
    params.analysis.budget_window_ns.unwrap_or_else(|| {
        (seq.t_d_ns - seq.readout_window.start_ns - params.readout.midpoint_delay_ns()).max(0.0)
    })
}

fn budget(params: &SimParams, art: &mut Artifacts) -> Result<BudgetSummary, ExperimentError> {
    let mut none = Artifacts {
        dir: None,
        written: Vec::new(),
    };
    let hseq = herald_sequence(params)?;
    let (g, e) = labeled_ensembles(params, &hseq)?;
    let herald = analyze_herald(&g, &e, params, &mut none)?;
    drop((g, e));
    let (g, e) = labeled_ensembles(params, &purify_sequence(params)?)?;
    let purify = analyze_purify(&g, &e, params, &mut none)?;
    drop((g, e));
    let jumps = analyze_jumps(&jump_records(params)?, params, &mut none)?;
    // an unavailable rate enters as zero with its upper bound as uncertainty
    let rate = |r: &RateEstimate| r.rate_per_us.map_or((0.0, r.upper95_per_us), |v| (v, r.stderr_per_us));
    let (up, up_se) = rate(&jumps.gamma_up);
    let (down, down_se) = rate(&jumps.gamma_down);
    let inputs = BudgetInputs {
        raw: herald.raw,
        heralded: herald.heralded,
        rates: RatePair::new(up, down),
        rates_stderr: RatePair::new(up_se, down_se),
        purified_overlap: purify.misclassification,
        t_window_ns: budget_window_ns(params, &hseq),
        t1_us: params.qubit.t1_idle_us,
    };
    let budget = analysis::fidelity_budget(&inputs);
    let rows: Vec<Vec<String>> = budget
        .entries
        .iter()
        .map(|b| vec![b.name.clone(), b.loss.to_string(), b.stderr.to_string(), b.method.clone()])
        .collect();
    art.csv("budget.csv", &["entry", "loss", "stderr", "method"], &rows)?;
    Ok(BudgetSummary {
        budget,
        inputs,
        herald,
        purify,
        jumps,
    })
}

fn split(records: Vec<ExperimentRecord>) -> (Vec<ExperimentRecord>, Vec<ExperimentRecord>) {
    records.into_iter().partition(|r| r.prepared_label == QubitState::Ground)
}

fn write_report(report: &ExperimentReport, out_dir: Option<&Path>) -> Result<(), ExperimentError> {
    if let Some(dir) = out_dir {
        let mut text = serde_json::to_string_pretty(report).expect("report serializes");
        text.push('\n');
        write_atomic(&dir.join("report.json"), text.as_bytes())?;
        write_atomic(&dir.join("config.txt"), serialize(&report.params).as_bytes())?;
    }
    Ok(())
}

/// Runs experiment `name`. With `out_dir`, writes `report.json`, the
/// resolved `config.txt` and the CSV artifacts there; `traces.qrt` holds the
/// analyzed ensemble for experiments that can be re-analyzed from file.
pub fn run_experiment(
    name: &str,
    params: &SimParams,
    out_dir: Option<&Path>,
    export_truth: bool,
) -> Result<ExperimentReport, ExperimentError> {
    if !EXPERIMENTS.contains(&name) {
        return Err(ExperimentError::Unknown(name.to_string()));
    }
    params.validate()?;
    let mut art = Artifacts {
        dir: out_dir,
        written: Vec::new(),
    };
    let summary = match name {
        "hist" => {
            let (g, e) = labeled_ensembles(params, &hist_sequence(params)?)?;
            let s = analyze_hist(&g, &e, params, &mut art)?;
            art.traces("traces.qrt", &joined(g, e), export_truth)?;
            Summary::Hist(s)
        }
        "purify" => {
            let (g, e) = labeled_ensembles(params, &purify_sequence(params)?)?;
            let s = analyze_purify(&g, &e, params, &mut art)?;
            art.traces("traces.qrt", &joined(g, e), export_truth)?;
            Summary::Purify(s)
        }
        "herald" => {
            let (g, e) = labeled_ensembles(params, &herald_sequence(params)?)?;
            let s = analyze_herald(&g, &e, params, &mut art)?;
            art.traces("traces.qrt", &joined(g, e), export_truth)?;
            Summary::Herald(s)
        }
        "jumps" => {
            let rs = jump_records(params)?;
            let s = analyze_jumps(&rs, params, &mut art)?;
            art.traces("traces.qrt", &rs, export_truth)?;
            Summary::Jumps(s)
        }
        "power-sweep" => Summary::PowerSweep(power_sweep(params, &mut art)?),
        "budget" => Summary::Budget(Box::new(budget(params, &mut art)?)),
        "reset" => {
            let seq = herald_sequence(params)?;
            let outcome = analysis::evaluate_reset(params, params.n_traces, params.master_seed)?;
            Summary::Reset(ResetSummary {
                t_s_ns: seq.t_s_ns.unwrap_or(f64::NAN),
                t_d_ns: seq.t_d_ns,
                outcome,
            })
        }
        _ => unreachable!("checked against EXPERIMENTS"),
    };
    let report = ExperimentReport {
        experiment: name.to_string(),
        source: "simulation".to_string(),
        params: params.clone(),
        summary,
        artifacts: art.written,
    };
    write_report(&report, out_dir)?;
    Ok(report)
}

/// Runs the analysis half of experiment `name` on imported records. `params`
/// supplies analysis settings and the noise level used for the hysteresis.
pub fn analyze_experiment(
    name: &str,
    records: Vec<ExperimentRecord>,
    source: &str,
    params: &SimParams,
    out_dir: Option<&Path>,
) -> Result<ExperimentReport, ExperimentError> {
    if !EXPERIMENTS.contains(&name) {
        return Err(ExperimentError::Unknown(name.to_string()));
    }
    if !ANALYZABLE.contains(&name) {
        return Err(ExperimentError::NeedsSimulation(name.to_string()));
    }
    let mut art = Artifacts {
        dir: out_dir,
        written: Vec::new(),
    };
    let summary = match name {
        "jumps" => Summary::Jumps(analyze_jumps(&records, params, &mut art)?),
        _ => {
            let (g, e) = split(records);
            match name {
                "hist" => Summary::Hist(analyze_hist(&g, &e, params, &mut art)?),
                "purify" => Summary::Purify(analyze_purify(&g, &e, params, &mut art)?),
                _ => Summary::Herald(analyze_herald(&g, &e, params, &mut art)?),
            }
        }
    };
    let report = ExperimentReport {
        experiment: name.to_string(),
        source: source.to_string(),
        params: params.clone(),
        summary,
        artifacts: art.written,
    };
    write_report(&report, out_dir)?;
    Ok(report)
}

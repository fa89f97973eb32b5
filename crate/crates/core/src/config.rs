//! Plain-text configuration.
//!
//! One `key = value` per line, keys dotted by section (`qubit.*`,
//! `readout.*`, `sequence.*`, `run.*`, `analysis.*`). `#` starts a comment.
//! Optional timings accept `auto`. Lists are comma separated.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, QubitParams, ReadoutParams};
use crate::trajectory::{SequenceTiming, SimError};

/// Keys that must appear in every config file.
pub const REQUIRED_KEYS: &[&str] = &["readout.nbar"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSettings {
    /// Scan grid for the optimal threshold.
    pub threshold_bins: usize,
    /// Bins of the exported histograms.
    pub hist_bins: usize,
    /// Total Schmitt-trigger width in units of σ_bin.
    pub hysteresis_sigma: f64,
    /// Detector dead time: shorter dwells are dropped and the rest shortened by it.
    pub min_dwell_ns: f64,
    /// Readout length of the long records used for jump statistics.
    pub jump_record_us: f64,
    pub jump_records: usize,
    pub sweep_nbar: Vec<f64>,
    /// Integration time used by the budget. `None` derives it from `t_D`.
    pub budget_window_ns: Option<f64>,
    /// `t_D` for the purification run, from readout turn-on. `None` is
    /// midway between `t_A` and `t_B`.
    pub purify_t_d_offset_ns: Option<f64>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            threshold_bins: 1000,
            hist_bins: 200,
            hysteresis_sigma: 6.0,
            min_dwell_ns: 100.0,
            jump_record_us: 20.0,
            jump_records: 2000,
            sweep_nbar: vec![1.0, 3.7, 10.0, 14.6, 37.8, 100.0, 400.0],
            budget_window_ns: None,
            purify_t_d_offset_ns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub qubit: QubitParams,
    pub readout: ReadoutParams,
    pub sequence: SequenceTiming,
    pub n_traces: usize,
    pub master_seed: u64,
    /// Amplifier noise on or off.
    pub noise: bool,
    pub analysis: AnalysisSettings,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            qubit: QubitParams::default(),
            readout: ReadoutParams::default(),
            sequence: SequenceTiming::default(),
            n_traces: 100_000,
            master_seed: 1,
            noise: true,
            analysis: AnalysisSettings::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

impl SimParams {
    /// Checks parameter ranges and that the default sequence resolves.
    pub fn validate(&self) -> Result<(), SimError> {
        self.qubit.validate()?;
        self.readout.validate()?;
        self.sequence.resolve(&self.readout)?;
        let mut heralded = self.sequence;
        heralded.herald = true;
        heralded.resolve(&self.readout)?;
        Ok(())
    }
}

fn num(v: &str) -> Result<f64, String> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(format!("`{v}` is not a finite number")),
    }
}

fn opt_num(v: &str) -> Result<Option<f64>, String> {
    if v == "auto" {
        Ok(None)
    } else {
        num(v).map(Some)
    }
}

fn count(v: &str) -> Result<usize, String> {
    v.parse().map_err(|_| format!("`{v}` is not a non-negative integer"))
}

fn flag(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("`{v}` is not true or false")),
    }
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    if v.is_empty() {
        return Err("needs at least one value".into());
    }
    v.split(',').map(|s| num(s.trim())).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "auto".to_string(), |x| x.to_string())
}

fn set(p: &mut SimParams, key: &str, v: &str) -> Result<(), String> {
    let (q, r, s, a) = (&mut p.qubit, &mut p.readout, &mut p.sequence, &mut p.analysis);
    match key {
        "qubit.t1_idle_us" => q.t1_idle_us = num(v)?,
        "qubit.f01_ghz" => q.f01_ghz = num(v)?,
        "qubit.t_eff_mk" => q.t_eff_mk = num(v)?,
        "qubit.gamma_up_readout_per_us" => q.gamma_up_readout_per_us = num(v)?,
        "qubit.pi_pulse_error" => q.pi_pulse_error = num(v)?,
        "readout.nbar" => r.nbar = num(v)?,
        "readout.sample_dt_ns" => r.sample_dt_ns = num(v)?,
        "readout.system_bandwidth_mhz" => r.system_bandwidth_mhz = num(v)?,
        "readout.pointer_separation" => r.pointer_separation = num(v)?,
        "readout.snr_calibration" => r.snr_calibration = num(v)?,
        "readout.ringup_start_ns" => r.ringup_start_ns = num(v)?,
        "readout.equilibration_time_ns" => r.equilibration_time_ns = num(v)?,
        "readout.backaction_knee" => r.backaction_knee = num(v)?,
        "readout.backaction_exponent" => r.backaction_exponent = num(v)?,
        "sequence.herald" => s.herald = flag(v)?,
        "sequence.herald_duration_ns" => s.herald_duration_ns = num(v)?,
        "sequence.herald_gap_ns" => s.herald_gap_ns = opt_num(v)?,
        "sequence.t_s_offset_ns" => s.t_s_offset_ns = opt_num(v)?,
        "sequence.readout_duration_ns" => s.readout_duration_ns = num(v)?,
        "sequence.t_a_offset_ns" => s.t_a_offset_ns = opt_num(v)?,
        "sequence.t_ab_spacing_ns" => s.t_ab_spacing_ns = num(v)?,
        "sequence.t_d_offset_ns" => s.t_d_offset_ns = opt_num(v)?,
        "run.n_traces" => p.n_traces = count(v)?,
        "run.master_seed" => p.master_seed = v.parse().map_err(|_| format!("`{v}` is not a u64 seed"))?,
        "run.noise" => p.noise = flag(v)?,
        "analysis.threshold_bins" => a.threshold_bins = count(v)?,
        "analysis.hist_bins" => a.hist_bins = count(v)?,
        "analysis.hysteresis_sigma" => a.hysteresis_sigma = num(v)?,
        "analysis.min_dwell_ns" => a.min_dwell_ns = num(v)?,
        "analysis.jump_record_us" => a.jump_record_us = num(v)?,
        "analysis.jump_records" => a.jump_records = count(v)?,
        "analysis.sweep_nbar" => a.sweep_nbar = list(v)?,
        "analysis.budget_window_ns" => a.budget_window_ns = opt_num(v)?,
        "analysis.purify_t_d_offset_ns" => a.purify_t_d_offset_ns = opt_num(v)?,
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

/// Every key with its current value, in file order.
pub fn entries(p: &SimParams) -> Vec<(&'static str, String)> {
    let (q, r, s, a) = (&p.qubit, &p.readout, &p.sequence, &p.analysis);
    let sweep = a.sweep_nbar.iter().map(f64::to_string).collect::<Vec<_>>().join(", ");
    vec![
        ("qubit.t1_idle_us", q.t1_idle_us.to_string()),
        ("qubit.f01_ghz", q.f01_ghz.to_string()),
        ("qubit.t_eff_mk", q.t_eff_mk.to_string()),
        ("qubit.gamma_up_readout_per_us", q.gamma_up_readout_per_us.to_string()),
        ("qubit.pi_pulse_error", q.pi_pulse_error.to_string()),
        ("readout.nbar", r.nbar.to_string()),
        ("readout.sample_dt_ns", r.sample_dt_ns.to_string()),
        ("readout.system_bandwidth_mhz", r.system_bandwidth_mhz.to_string()),
        ("readout.pointer_separation", r.pointer_separation.to_string()),
        ("readout.snr_calibration", r.snr_calibration.to_string()),
        ("readout.ringup_start_ns", r.ringup_start_ns.to_string()),
        ("readout.equilibration_time_ns", r.equilibration_time_ns.to_string()),
        ("readout.backaction_knee", r.backaction_knee.to_string()),
        ("readout.backaction_exponent", r.backaction_exponent.to_string()),
        ("sequence.herald", s.herald.to_string()),
        ("sequence.herald_duration_ns", s.herald_duration_ns.to_string()),
        ("sequence.herald_gap_ns", fmt_opt(s.herald_gap_ns)),
        ("sequence.t_s_offset_ns", fmt_opt(s.t_s_offset_ns)),
        ("sequence.readout_duration_ns", s.readout_duration_ns.to_string()),
        ("sequence.t_a_offset_ns", fmt_opt(s.t_a_offset_ns)),
        ("sequence.t_ab_spacing_ns", s.t_ab_spacing_ns.to_string()),
        ("sequence.t_d_offset_ns", fmt_opt(s.t_d_offset_ns)),
        ("run.n_traces", p.n_traces.to_string()),
        ("run.master_seed", p.master_seed.to_string()),
        ("run.noise", p.noise.to_string()),
        ("analysis.threshold_bins", a.threshold_bins.to_string()),
        ("analysis.hist_bins", a.hist_bins.to_string()),
        ("analysis.hysteresis_sigma", a.hysteresis_sigma.to_string()),
        ("analysis.min_dwell_ns", a.min_dwell_ns.to_string()),
        ("analysis.jump_record_us", a.jump_record_us.to_string()),
        ("analysis.jump_records", a.jump_records.to_string()),
        ("analysis.sweep_nbar", sweep),
        ("analysis.budget_window_ns", fmt_opt(a.budget_window_ns)),
        ("analysis.purify_t_d_offset_ns", fmt_opt(a.purify_t_d_offset_ns)),
    ]
}

pub fn serialize(p: &SimParams) -> String {
    let mut out = String::new();
    let mut section = "";
    for (key, value) in entries(p) {
        let head = key.split('.').next().unwrap_or("");
        if head != section {
            if !section.is_empty() {
                out.push('\n');
            }
            section = head;
        }
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}

pub fn parse_config(text: &str) -> Result<SimParams, ConfigError> {
    let mut params = SimParams::default();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| ConfigError::Line { line, message };
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(prev) = seen.get(key) {
            return Err(err(format!("`{key}` already set on line {prev}")));
        }
        set(&mut params, key, value).map_err(|m| err(format!("{key}: {m}")))?;
        seen.insert(key.to_string(), line);
    }
    for &key in REQUIRED_KEYS {
        if !seen.contains_key(key) {
            return Err(ConfigError::Missing(key));
        }
    }
    params.validate().map_err(|e| anchor(&e, &seen))?;
    check_analysis(&params, &seen)?;
    Ok(params)
}

fn anchor(e: &SimError, seen: &BTreeMap<String, usize>) -> ConfigError {
    let key = match e {
        SimError::Model(ModelError::InvalidParameter { name, .. }) => Some(*name),
        _ => None,
    };
    match key.and_then(|k| seen.get(k)) {
        Some(&line) => ConfigError::Line {
            line,
            message: e.to_string(),
        },
        None => {
            // cross-field sequence errors point at the last timing key given
            let line = seen
                .iter()
                .filter(|(k, _)| k.starts_with("sequence.") || k.starts_with("readout."))
                .map(|(_, &l)| l)
                .max();
            match line {
                Some(line) => ConfigError::Line {
                    line,
                    message: e.to_string(),
                },
                None => ConfigError::Invalid(e.to_string()),
            }
        }
    }
}

fn check_analysis(p: &SimParams, seen: &BTreeMap<String, usize>) -> Result<(), ConfigError> {
    let a = &p.analysis;
    let problems: [(&str, bool, &str); 8] = [
        ("analysis.threshold_bins", a.threshold_bins >= 2, "must be >= 2"),
        ("analysis.hist_bins", a.hist_bins >= 2, "must be >= 2"),
        ("analysis.hysteresis_sigma", a.hysteresis_sigma >= 0.0, "must be >= 0"),
        ("analysis.min_dwell_ns", a.min_dwell_ns >= 0.0, "must be >= 0"),
        ("analysis.jump_record_us", a.jump_record_us > 0.0, "must be > 0"),
        (
            "analysis.sweep_nbar",
            !a.sweep_nbar.is_empty() && a.sweep_nbar.iter().all(|&n| n >= 0.0),
            "needs entries >= 0",
        ),
        ("analysis.budget_window_ns", a.budget_window_ns.is_none_or(|t| t >= 0.0), "must be >= 0"),
        ("run.n_traces", p.n_traces >= 1, "must be >= 1"),
    ];
    for (key, ok, why) in problems {
        if !ok {
            let message = format!("{key}: {why}");
            return Err(match seen.get(key) {
                Some(&line) => ConfigError::Line { line, message },
                None => ConfigError::Invalid(message),
            });
        }
    }
    Ok(())
}

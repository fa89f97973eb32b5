//! Post-selection: two-point purification and heralding.

use serde::{Deserialize, Serialize};

use super::{AnalysisError, Discriminator};
use crate::trajectory::{ExperimentRecord, QubitState};

/// Sample at a marker time anywhere in the trace.
pub fn marker_value(record: &ExperimentRecord, t_ns: f64) -> Result<f64, AnalysisError> {
    record
        .trace
        .index_of(t_ns)
        .map(|i| f64::from(record.trace.samples[i]))
        .ok_or(AnalysisError::BadTime { t_ns, what: "trace" })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PurifyOutcome {
    /// Indices of records whose `t_A` and `t_B` readings agree.
    pub retained: Vec<usize>,
    /// `t_D` values of survivors read Ground at both points.
    pub values_ground: Vec<f64>,
    /// `t_D` values of survivors read Excited at both points.
    pub values_excited: Vec<f64>,
}

impl PurifyOutcome {
    /// Survivors whose `t_D` reading disagrees with their two-point label.
    pub fn misclassified(&self, disc: &Discriminator) -> u64 {
        let wrong_g = self
            .values_ground
            .iter()
            .filter(|&&v| disc.classify(v) != QubitState::Ground)
            .count();
        let wrong_e = self
            .values_excited
            .iter()
            .filter(|&&v| disc.classify(v) != QubitState::Excited)
            .count();
        (wrong_g + wrong_e) as u64
    }

    pub fn survivors(&self) -> u64 {
        self.retained.len() as u64
    }
}

/// Keeps records whose single-bin readings at `t_A` and `t_B` agree, and
/// groups their `t_D` values by that agreed state.
pub fn two_point_purify(records: &[ExperimentRecord], disc: &Discriminator) -> Result<PurifyOutcome, AnalysisError> {
    let mut out = PurifyOutcome {
        retained: Vec::new(),
        values_ground: Vec::new(),
        values_excited: Vec::new(),
    };
    for (i, r) in records.iter().enumerate() {
        let a = disc.classify(marker_value(r, r.sequence.t_a_ns)?);
        let b = disc.classify(marker_value(r, r.sequence.t_b_ns)?);
        if a != b {
            continue;
        }
        let d = marker_value(r, r.sequence.t_d_ns)?;
        out.retained.push(i);
        match a {
            QubitState::Ground => out.values_ground.push(d),
            QubitState::Excited => out.values_excited.push(d),
        }
    }
    Ok(out)
}

/// Indices of records whose herald reading at `t_S` is Ground.
pub fn herald_select(records: &[ExperimentRecord], disc: &Discriminator) -> Result<Vec<usize>, AnalysisError> {
    let mut kept = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let ts = r.sequence.t_s_ns.ok_or(AnalysisError::MissingHerald(i))?;
        if disc.classify(marker_value(r, ts)?) == QubitState::Ground {
            kept.push(i);
        }
    }
    Ok(kept)
}

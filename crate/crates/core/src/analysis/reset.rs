use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, Discriminator, Estimate};
use crate::config::SimParams;
use crate::trajectory::{render_homodyne, PathBuilder, QubitState, RecordStreams, SequenceModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetOutcome {
    /// Fraction of shots the verification readout reads Ground.
    pub reset_fidelity: Estimate,
    /// Fraction actually in Ground at the verification marker.
    pub true_ground: Estimate,
    /// Fraction of shots that triggered the conditional π pulse.
    pub pulsed: Estimate,
}

/// Single-iteration heralded reset: read the herald at `t_S`; if it reads
/// Excited, apply a π pulse at the main readout turn-on; then read the
/// verification marker `t_D`. Discrimination uses the midpoint between the
/// pointer levels.
pub fn evaluate_reset(params: &SimParams, n_shots: usize, master_seed: u64) -> Result<ResetOutcome, AnalysisError> {
    if n_shots == 0 {
        return Err(AnalysisError::EmptyInput("reset shots"));
    }
    let mut timing = params.sequence;
    timing.herald = true;
    let sequence = timing.resolve(&params.readout)?;
    let model = SequenceModel::new(params, &sequence)?;
    let disc = Discriminator::midpoint();
    let t_s = sequence.t_s_ns.expect("herald sequence has t_S");
    let t_d = sequence.t_d_ns;
    let pi_at = sequence.readout_window.start_ns;
    let duration = sequence.duration_ns();
    let i_s = (t_s / params.readout.sample_dt_ns).round() as usize;
    let i_d = (t_d / params.readout.sample_dt_ns).round() as usize;

    let shots: Result<Vec<(bool, bool, bool)>, AnalysisError> = (0..n_shots)
        .into_par_iter()
        .map(|i| {
            let mut streams = RecordStreams::derive(master_seed, QubitState::Ground, i as u64);
            let initial = crate::trajectory::sample_initial_state(model.p_thermal, &mut streams.path)?;
            let mut path = PathBuilder::new(initial);
            path.evolve(&model.schedule, pi_at, &mut streams.path);
            // rendering is causal, so the prefix path fixes the herald sample
            let prefix = path.clone().finish(duration);
            let mut noise = streams.noise.clone();
            let herald = render_homodyne(&prefix, &model.readout, &sequence, model.noisy.then_some(&mut noise))?;
            let pulsed = disc.classify(f64::from(herald.samples[i_s])) == QubitState::Excited;
            if pulsed {
                path.pi_pulse(model.pi_pulse_error, &mut streams.path);
            }
            path.evolve(&model.schedule, duration, &mut streams.path);
            let truth = path.finish(duration);
            let trace = render_homodyne(&truth, &model.readout, &sequence, model.noisy.then_some(&mut streams.noise))?;
            let read_ground = disc.classify(f64::from(trace.samples[i_d])) == QubitState::Ground;
            let true_ground = truth.state_at(t_d) == QubitState::Ground;
            Ok((read_ground, true_ground, pulsed))
        })
        .collect();
    let shots = shots?;
    let n = shots.len() as u64;
    let count = |f: fn(&(bool, bool, bool)) -> bool| shots.iter().filter(|s| f(s)).count() as u64;
    Ok(ResetOutcome {
        reset_fidelity: Estimate::proportion(count(|s| s.0), n),
        true_ground: Estimate::proportion(count(|s| s.1), n),
        pulsed: Estimate::proportion(count(|s| s.2), n),
    })
}

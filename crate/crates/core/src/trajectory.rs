//! Hidden telegraph trajectories and their rendering into homodyne traces.
//!
//! A record is produced in two independent random streams: one drives the
//! qubit state (initial thermal draw, jump times, π-pulse outcomes), the
//! other drives the amplifier noise. Both are ChaCha8 streams split from the
//! master seed by `(index, label)`, so a record never depends on which worker
//! produced it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SimParams;
use crate::model::{self, ModelError, RatePair, ReadoutParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("invalid pulse sequence: {0}")]
    Sequence(String),
    #[error("pointer SNR must be positive while a readout window is open (got {0})")]
    NonPositiveSnr(f64),
    #[error("prepared label {label:?} inconsistent with prep_pi_pulse = {pi}")]
    LabelMismatch { label: QubitState, pi: bool },
    #[error("cannot allocate {0} samples")]
    ResourceExhausted(usize),
    #[error("ensemble size must be at least 1")]
    EmptyEnsemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QubitState {
    Ground,
    Excited,
}

impl QubitState {
    pub fn flipped(self) -> Self {
        match self {
            QubitState::Ground => QubitState::Excited,
            QubitState::Excited => QubitState::Ground,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            QubitState::Ground => 0,
            QubitState::Excited => 1,
        }
    }

    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(QubitState::Ground),
            1 => Some(QubitState::Excited),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub time_ns: f64,
    pub state: QubitState,
}

/// Ground-truth telegraph trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePath {
    pub initial: QubitState,
    pub transitions: Vec<Transition>,
    pub duration_ns: f64,
}

impl StatePath {
    pub fn constant(state: QubitState, duration_ns: f64) -> Self {
        Self {
            initial: state,
            transitions: Vec::new(),
            duration_ns,
        }
    }

    pub fn state_at(&self, t_ns: f64) -> QubitState {
        let idx = self.transitions.partition_point(|tr| tr.time_ns <= t_ns);
        if idx == 0 {
            self.initial
        } else {
            self.transitions[idx - 1].state
        }
    }

    pub fn final_state(&self) -> QubitState {
        self.transitions.last().map_or(self.initial, |tr| tr.state)
    }

    /// Number of transitions inside the closed interval `[from, to]`.
    pub fn transitions_between(&self, from_ns: f64, to_ns: f64) -> usize {
        self.transitions
            .iter()
            .filter(|tr| tr.time_ns >= from_ns && tr.time_ns <= to_ns)
            .count()
    }

    /// Checks ordering, bounds and alternation of the transition list.
    pub fn validate(&self) -> Result<(), String> {
        let mut prev_t = f64::NEG_INFINITY;
        let mut prev_state = self.initial;
        for tr in &self.transitions {
            if !(tr.time_ns > prev_t) {
                return Err(format!("transition times not strictly increasing at {}", tr.time_ns));
            }
            if tr.time_ns < 0.0 || tr.time_ns > self.duration_ns {
                return Err(format!("transition at {} outside [0, {}]", tr.time_ns, self.duration_ns));
            }
            if tr.state == prev_state {
                return Err(format!("transition at {} does not change state", tr.time_ns));
            }
            prev_t = tr.time_ns;
            prev_state = tr.state;
        }
        Ok(())
    }

    /// Completed and trailing dwell intervals, as `(state, start, end)`.
    pub fn dwells(&self) -> Vec<(QubitState, f64, f64)> {
        let mut out = Vec::with_capacity(self.transitions.len() + 1);
        let mut state = self.initial;
        let mut start = 0.0;
        for tr in &self.transitions {
            out.push((state, start, tr.time_ns));
            state = tr.state;
            start = tr.time_ns;
        }
        out.push((state, start, self.duration_ns));
        out
    }
}

/// Piecewise-constant rates; segment `i` holds from its start to the next
/// segment's start.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSchedule {
    segments: Vec<(f64, RatePair)>,
}

impl RateSchedule {
    pub fn constant(rates: RatePair) -> Self {
        Self {
            segments: vec![(0.0, rates)],
        }
    }

    /// Builds a schedule from `(start_ns, rates)` pairs; the first start must be 0.
    pub fn from_segments(segments: Vec<(f64, RatePair)>) -> Result<Self, SimError> {
        if segments.first().map(|s| s.0) != Some(0.0) {
            return Err(SimError::Sequence("rate schedule must start at t = 0".into()));
        }
        if segments.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(SimError::Sequence("rate segments must be strictly ordered".into()));
        }
        for (_, r) in &segments {
            if !(r.gamma_up >= 0.0 && r.gamma_down >= 0.0) || !r.gamma_up.is_finite() || !r.gamma_down.is_finite() {
                return Err(SimError::Sequence(format!("invalid rates {r:?}")));
            }
        }
        Ok(Self { segments })
    }

    fn segment_index(&self, t_ns: f64) -> usize {
        self.segments.partition_point(|s| s.0 <= t_ns).saturating_sub(1)
    }

    fn segment_end(&self, idx: usize) -> f64 {
        self.segments.get(idx + 1).map_or(f64::INFINITY, |s| s.0)
    }

    /// Rate of leaving `state`, in 1/ns.
    fn leave_rate(&self, idx: usize, state: QubitState) -> f64 {
        let r = self.segments[idx].1;
        1.0e-3
            * match state {
                QubitState::Ground => r.gamma_up,
                QubitState::Excited => r.gamma_down,
            }
    }
}

/// Incremental path construction: evolve under a schedule, apply pulses.
#[derive(Debug, Clone)]
pub struct PathBuilder {
    initial: QubitState,
    state: QubitState,
    now_ns: f64,
    transitions: Vec<Transition>,
}

impl PathBuilder {
    pub fn new(initial: QubitState) -> Self {
        Self {
            initial,
            state: initial,
            now_ns: 0.0,
            transitions: Vec::new(),
        }
    }

    pub fn state(&self) -> QubitState {
        self.state
    }

    /// Exact continuous-time sampling up to `until_ns`. Waiting times restart
    /// at each rate boundary, which is exact by memorylessness.
    pub fn evolve<R: Rng + ?Sized>(&mut self, schedule: &RateSchedule, until_ns: f64, rng: &mut R) {
        while self.now_ns < until_ns {
            let idx = schedule.segment_index(self.now_ns);
            let seg_end = schedule.segment_end(idx).min(until_ns);
            let rate = schedule.leave_rate(idx, self.state);
            let jump_at = if rate > 0.0 {
                self.now_ns + Exp::new(rate).expect("positive rate").sample(rng)
            } else {
                f64::INFINITY
            };
            if jump_at < seg_end {
                self.state = self.state.flipped();
                self.transitions.push(Transition {
                    time_ns: jump_at,
                    state: self.state,
                });
                self.now_ns = jump_at;
            } else {
                self.now_ns = seg_end;
            }
        }
    }

    /// Instantaneous π pulse at the current time.
    pub fn pi_pulse<R: Rng + ?Sized>(&mut self, error_prob: f64, rng: &mut R) {
        let after = apply_pi_pulse(self.state, error_prob, rng);
        if after != self.state {
            self.state = after;
            self.transitions.push(Transition {
                time_ns: self.now_ns,
                state: after,
            });
        }
    }

    pub fn finish(self, duration_ns: f64) -> StatePath {
        StatePath {
            initial: self.initial,
            transitions: self.transitions,
            duration_ns,
        }
    }
}

pub fn sample_initial_state<R: Rng + ?Sized>(p_exc: f64, rng: &mut R) -> Result<QubitState, SimError> {
    if !(0.0..=1.0).contains(&p_exc) {
        return Err(SimError::Probability(p_exc));
    }
    Ok(if rng.random::<f64>() < p_exc {
        QubitState::Excited
    } else {
        QubitState::Ground
    })
}

pub fn simulate_state_path<R: Rng + ?Sized>(
    initial: QubitState,
    schedule: &RateSchedule,
    duration_ns: f64,
    rng: &mut R,
) -> StatePath {
    let mut builder = PathBuilder::new(initial);
    builder.evolve(schedule, duration_ns, rng);
    builder.finish(duration_ns)
}

pub fn apply_pi_pulse<R: Rng + ?Sized>(state: QubitState, error_prob: f64, rng: &mut R) -> QubitState {
    if rng.random::<f64>() < error_prob {
        state
    } else {
        state.flipped()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_ns: f64,
    pub end_ns: f64,
}

impl Window {
    pub fn new(start_ns: f64, end_ns: f64) -> Self {
        Self { start_ns, end_ns }
    }

    pub fn contains(&self, t_ns: f64) -> bool {
        t_ns >= self.start_ns && t_ns < self.end_ns
    }

    pub fn len_ns(&self) -> f64 {
        self.end_ns - self.start_ns
    }
}

/// Resolved pulse sequence: drive windows and discrimination markers, in
/// absolute ns from the start of the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub herald_window: Option<Window>,
    pub t_s_ns: Option<f64>,
    pub prep_pi_pulse: bool,
    pub readout_window: Window,
    pub t_a_ns: f64,
    pub t_b_ns: f64,
    pub t_d_ns: f64,
}

/// Relative timing from which a [`PulseSequence`] is resolved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceTiming {
    pub herald: bool,
    pub herald_duration_ns: f64,
    /// Idle time between the herald pulse and the main readout turn-on.
    /// `None` resolves to 3τ_sys rounded up to the sample grid.
    pub herald_gap_ns: Option<f64>,
    /// `t_S` measured from the herald turn-on. `None` resolves to the last
    /// bin of the herald pulse, the latest reading before manipulation.
    pub t_s_offset_ns: Option<f64>,
    pub readout_duration_ns: f64,
    /// `t_A` measured from the readout turn-on. `None` resolves to the
    /// equilibration time.
    pub t_a_offset_ns: Option<f64>,
    pub t_ab_spacing_ns: f64,
    /// `t_D` measured from the readout turn-on. `None` places it at `t_A`.
    pub t_d_offset_ns: Option<f64>,
}

impl Default for SequenceTiming {
    fn default() -> Self {
        Self {
            herald: false,
            herald_duration_ns: 200.0,
            herald_gap_ns: None,
            t_s_offset_ns: None,
            readout_duration_ns: 1000.0,
            t_a_offset_ns: None,
            t_ab_spacing_ns: 160.0,
            t_d_offset_ns: None,
        }
    }
}

fn snap_up(t: f64, dt: f64) -> f64 {
    let k = (t / dt - 1e-9).ceil();
    k * dt
}

impl SequenceTiming {
    pub fn herald_gap(&self, readout: &ReadoutParams) -> f64 {
        self.herald_gap_ns
            .unwrap_or_else(|| snap_up(3.0 * readout.tau_sys_ns(), readout.sample_dt_ns))
    }

    pub fn t_s_offset(&self, readout: &ReadoutParams) -> f64 {
        self.t_s_offset_ns
            .unwrap_or(self.herald_duration_ns - readout.sample_dt_ns)
    }

    pub fn t_a_offset(&self, readout: &ReadoutParams) -> f64 {
        self.t_a_offset_ns.unwrap_or(readout.equilibration_time_ns)
    }

    pub fn t_d_offset(&self, readout: &ReadoutParams) -> f64 {
        self.t_d_offset_ns.unwrap_or_else(|| self.t_a_offset(readout))
    }

    /// Resolves absolute times. The main readout turns on at
    /// `readout.ringup_start_ns`; the herald pulse, if any, ends one gap
    /// earlier.
    pub fn resolve(&self, readout: &ReadoutParams) -> Result<PulseSequence, SimError> {
        let start = readout.ringup_start_ns;
        let readout_window = Window::new(start, start + self.readout_duration_ns);
        let (herald_window, t_s_ns) = if self.herald {
            let end = start - self.herald_gap(readout);
            let w = Window::new(end - self.herald_duration_ns, end);
            (Some(w), Some(w.start_ns + self.t_s_offset(readout)))
        } else {
            (None, None)
        };
        let t_a = start + self.t_a_offset(readout);
        let seq = PulseSequence {
            herald_window,
            t_s_ns,
            prep_pi_pulse: false,
            readout_window,
            t_a_ns: t_a,
            t_b_ns: t_a + self.t_ab_spacing_ns,
            t_d_ns: start + self.t_d_offset(readout),
        };
        seq.validate(readout.sample_dt_ns)?;
        Ok(seq)
    }
}

fn on_grid(t: f64, dt: f64) -> bool {
    let k = (t / dt).round();
    (k * dt - t).abs() <= 1e-9 * dt.max(t.abs())
}

impl PulseSequence {
    pub fn duration_ns(&self) -> f64 {
        self.readout_window.end_ns
    }

    pub fn for_label(&self, label: QubitState) -> Self {
        Self {
            prep_pi_pulse: label == QubitState::Excited,
            ..self.clone()
        }
    }

    pub fn validate(&self, sample_dt_ns: f64) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Sequence(m));
        let r = self.readout_window;
        if !(r.start_ns >= 0.0 && r.end_ns > r.start_ns) {
            return err(format!("readout window [{}, {}) is empty or negative", r.start_ns, r.end_ns));
        }
        if let Some(h) = self.herald_window {
            if !(h.start_ns >= 0.0 && h.end_ns > h.start_ns && h.end_ns <= r.start_ns) {
                return err(format!(
                    "herald window [{}, {}) must be non-empty, non-negative and end before the readout at {}",
                    h.start_ns, h.end_ns, r.start_ns
                ));
            }
            match self.t_s_ns {
                Some(ts) if h.contains(ts) => {}
                other => return err(format!("t_S {other:?} outside herald window")),
            }
        }
        if !(self.t_a_ns < self.t_b_ns) {
            return err(format!("t_A = {} must precede t_B = {}", self.t_a_ns, self.t_b_ns));
        }
        for (name, t) in [("t_A", self.t_a_ns), ("t_B", self.t_b_ns), ("t_D", self.t_d_ns)] {
            if !r.contains(t) {
                return err(format!("{name} = {t} outside readout window [{}, {})", r.start_ns, r.end_ns));
            }
        }
        let mut markers = vec![
            ("t_A", self.t_a_ns),
            ("t_B", self.t_b_ns),
            ("t_D", self.t_d_ns),
            ("readout start", r.start_ns),
            ("readout end", r.end_ns),
        ];
        if let Some(ts) = self.t_s_ns {
            markers.push(("t_S", ts));
        }
        if let Some(h) = self.herald_window {
            markers.push(("herald start", h.start_ns));
            markers.push(("herald end", h.end_ns));
        }
        for (name, t) in markers {
            if !on_grid(t, sample_dt_ns) {
                return err(format!("{name} = {t} ns is not on the {sample_dt_ns} ns sample grid"));
            }
        }
        Ok(())
    }

    /// Windows during which the readout drive is on, in time order.
    pub fn drive_windows(&self) -> Vec<Window> {
        self.herald_window.into_iter().chain(Some(self.readout_window)).collect()
    }

    /// Whether `t` lies inside any drive window.
    pub fn driven_at(&self, t_ns: f64) -> bool {
        self.drive_windows().iter().any(|w| w.contains(t_ns))
    }
}

/// Noisy, band-limited homodyne voltage on a fixed grid; sample `i` is the
/// filtered output at `i·sample_dt_ns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomodyneTrace {
    pub sample_dt_ns: f64,
    pub samples: Vec<f32>,
    pub readout_window: Window,
}

impl HomodyneTrace {
    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 * self.sample_dt_ns
    }

    /// Index of the sample at exactly `t`, if `t` is on the grid and in range.
    pub fn index_of(&self, t_ns: f64) -> Option<usize> {
        if !(t_ns >= 0.0) || !on_grid(t_ns, self.sample_dt_ns) {
            return None;
        }
        let i = (t_ns / self.sample_dt_ns).round() as usize;
        (i < self.samples.len()).then_some(i)
    }

    /// Index range of samples whose times fall in `[start, end)`.
    pub fn index_range(&self, window: Window) -> std::ops::Range<usize> {
        let lo = (window.start_ns / self.sample_dt_ns - 1e-9).ceil().max(0.0) as usize;
        let hi = (window.end_ns / self.sample_dt_ns - 1e-9).ceil().max(0.0) as usize;
        lo.min(self.samples.len())..hi.min(self.samples.len())
    }
}

/// One shot: sequence, trace, and the hidden truth when it is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub sequence: PulseSequence,
    pub trace: HomodyneTrace,
    pub truth: Option<StatePath>,
    pub prepared_label: QubitState,
}

/// The two random streams of one record.
#[derive(Debug, Clone)]
pub struct RecordStreams {
    pub path: ChaCha8Rng,
    pub noise: ChaCha8Rng,
}

impl RecordStreams {
    pub fn derive(master_seed: u64, label: QubitState, index: u64) -> Self {
        let stream = |purpose: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rng.set_stream((index << 2) | (u64::from(label.as_u8()) << 1) | purpose);
            rng
        };
        Self {
            path: stream(0),
            noise: stream(1),
        }
    }
}

fn pointer_level(state: QubitState, readout: &ReadoutParams) -> f64 {
    match state {
        QubitState::Excited => 0.5 * readout.pointer_separation,
        QubitState::Ground => -0.5 * readout.pointer_separation,
    }
}

fn n_samples(duration_ns: f64, dt: f64) -> usize {
    (duration_ns / dt - 1e-9).ceil().max(0.0) as usize
}

/// Noise-free filtered pointer signal of `truth` under the drive windows of
/// `sequence`. The single pole relaxes toward the pointer level while driven,
/// toward zero otherwise, and restarts from zero at every turn-on.
pub fn render_signal(truth: &StatePath, readout: &ReadoutParams, sequence: &PulseSequence) -> Vec<f64> {
    #[derive(Clone, Copy)]
    enum Ev {
        On,
        Off,
        Jump(QubitState),
    }
    let mut events: Vec<(f64, u8, Ev)> = Vec::new();
    for w in sequence.drive_windows() {
        events.push((w.start_ns, 1, Ev::On));
        events.push((w.end_ns, 0, Ev::Off));
    }
    for tr in &truth.transitions {
        events.push((tr.time_ns, 2, Ev::Jump(tr.state)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let tau = readout.tau_sys_ns();
    let dt = readout.sample_dt_ns;
    let n = n_samples(sequence.duration_ns(), dt);
    let mut out = Vec::with_capacity(n);
    let mut state = truth.initial;
    let mut driven = false;
    let mut x = 0.0;
    let mut now = 0.0;
    let mut ev = events.iter().peekable();
    let target = |driven: bool, state: QubitState| if driven { pointer_level(state, readout) } else { 0.0 };
    for i in 0..n {
        let t = i as f64 * dt;
        while let Some(&&(te, _, e)) = ev.peek() {
            if te > t {
                break;
            }
            let u = target(driven, state);
            x = u + (x - u) * (-(te - now) / tau).exp();
            now = te;
            match e {
                Ev::On => {
                    driven = true;
                    x = 0.0;
                }
                Ev::Off => driven = false,
                Ev::Jump(s) => state = s,
            }
            ev.next();
        }
        let u = target(driven, state);
        x = u + (x - u) * (-(t - now) / tau).exp();
        now = t;
        out.push(x);
    }
    out
}

/// Stationary single-pole-filtered Gaussian noise with per-bin standard
/// deviation `sigma`; lag-k autocorrelation is `exp(-k·dt/τ)`.
pub fn render_noise<R: Rng + ?Sized>(n: usize, sigma: f64, readout: &ReadoutParams, rng: &mut R) -> Vec<f64> {
    let rho = (-readout.sample_dt_ns / readout.tau_sys_ns()).exp();
    let innov = sigma * (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut x = 0.0;
    for i in 0..n {
        let z: f64 = StandardNormal.sample(rng);
        x = if i == 0 { sigma * z } else { rho * x + innov * z };
        out.push(x);
    }
    out
}

/// Renders `truth` into a noisy trace. With `noise = None` the trace is the
/// bare filtered signal.
pub fn render_homodyne<R: Rng + ?Sized>(
    truth: &StatePath,
    readout: &ReadoutParams,
    sequence: &PulseSequence,
    noise: Option<&mut R>,
) -> Result<HomodyneTrace, SimError> {
    let signal = render_signal(truth, readout, sequence);
    let n = signal.len();
    let mut samples = Vec::new();
    samples.try_reserve_exact(n).map_err(|_| SimError::ResourceExhausted(n))?;
    match noise {
        Some(rng) => {
            let snr = model::pointer_snr(readout);
            if !(snr > 0.0) {
                return Err(SimError::NonPositiveSnr(snr));
            }
            let noise = render_noise(n, readout.sigma_bin(), readout, rng);
            samples.extend(signal.iter().zip(&noise).map(|(s, w)| (s + w) as f32));
        }
        None => samples.extend(signal.iter().map(|&s| s as f32)),
    }
    Ok(HomodyneTrace {
        sample_dt_ns: readout.sample_dt_ns,
        samples,
        readout_window: sequence.readout_window,
    })
}

/// Precomputed per-ensemble quantities for [`run_sequence`].
#[derive(Debug, Clone)]
pub struct SequenceModel {
    pub readout: ReadoutParams,
    pub sequence: PulseSequence,
    pub schedule: RateSchedule,
    pub p_thermal: f64,
    pub pi_pulse_error: f64,
    pub noisy: bool,
}

impl SequenceModel {
    pub fn new(params: &SimParams, sequence: &PulseSequence) -> Result<Self, SimError> {
        params.qubit.validate()?;
        params.readout.validate()?;
        sequence.validate(params.readout.sample_dt_ns)?;
        let idle = model::effective_rates(&params.qubit, &params.readout, false)?;
        let on = model::effective_rates(&params.qubit, &params.readout, true)?;
        let schedule = rate_schedule(sequence, idle, on)?;
        Ok(Self {
            readout: params.readout,
            sequence: sequence.clone(),
            schedule,
            p_thermal: model::thermal_population(&params.qubit),
            pi_pulse_error: params.qubit.pi_pulse_error,
            noisy: params.noise,
        })
    }

    pub fn run(&self, label: QubitState, streams: &mut RecordStreams) -> Result<ExperimentRecord, SimError> {
        if self.sequence.prep_pi_pulse != (label == QubitState::Excited) {
            return Err(SimError::LabelMismatch {
                label,
                pi: self.sequence.prep_pi_pulse,
            });
        }
        let seq = &self.sequence;
        let duration = seq.duration_ns();
        let initial = sample_initial_state(self.p_thermal, &mut streams.path)?;
        let mut path = PathBuilder::new(initial);
        let pi_at = seq.readout_window.start_ns;
        path.evolve(&self.schedule, pi_at, &mut streams.path);
        if seq.prep_pi_pulse {
            path.pi_pulse(self.pi_pulse_error, &mut streams.path);
        }
        path.evolve(&self.schedule, duration, &mut streams.path);
        let truth = path.finish(duration);
        let noise = self.noisy.then_some(&mut streams.noise);
        let trace = render_homodyne(&truth, &self.readout, seq, noise)?;
        Ok(ExperimentRecord {
            sequence: seq.clone(),
            trace,
            truth: Some(truth),
            prepared_label: label,
        })
    }
}

/// Rates per sequence segment: readout-on inside drive windows, idle elsewhere.
pub fn rate_schedule(sequence: &PulseSequence, idle: RatePair, on: RatePair) -> Result<RateSchedule, SimError> {
    let mut segs = vec![(0.0, idle)];
    for w in sequence.drive_windows() {
        if w.start_ns == 0.0 {
            segs[0] = (0.0, on);
        } else {
            segs.push((w.start_ns, on));
        }
        segs.push((w.end_ns, idle));
    }
    segs.dedup_by(|b, a| b.0 == a.0);
    RateSchedule::from_segments(segs)
}

/// One shot of `sequence` for the given preparation.
pub fn run_sequence(
    params: &SimParams,
    sequence: &PulseSequence,
    prepared_label: QubitState,
    streams: &mut RecordStreams,
) -> Result<ExperimentRecord, SimError> {
    SequenceModel::new(params, sequence)?.run(prepared_label, streams)
}

/// `n_traces` independent records; record `i` uses
/// `RecordStreams::derive(master_seed, label, i)`.
pub fn simulate_ensemble(
    params: &SimParams,
    sequence: &PulseSequence,
    label: QubitState,
    n_traces: usize,
    master_seed: u64,
) -> Result<Vec<ExperimentRecord>, SimError> {
    if n_traces == 0 {
        return Err(SimError::EmptyEnsemble);
    }
    let model = SequenceModel::new(params, sequence)?;
    let mut out = Vec::new();
    out.try_reserve_exact(n_traces)
        .map_err(|_| SimError::ResourceExhausted(n_traces))?;
    let records: Result<Vec<_>, _> = (0..n_traces)
        .into_par_iter()
        .map(|i| {
            let mut streams = RecordStreams::derive(master_seed, label, i as u64);
            model.run(label, &mut streams)
        })
        .collect();
    out.extend(records?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QubitParams;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn initial_state_extremes() {
        let mut r = rng(1);
        for _ in 0..1000 {
            assert_eq!(sample_initial_state(0.0, &mut r).unwrap(), QubitState::Ground);
            assert_eq!(sample_initial_state(1.0, &mut r).unwrap(), QubitState::Excited);
        }
        assert!(sample_initial_state(1.5, &mut r).is_err());
        assert!(sample_initial_state(-0.1, &mut r).is_err());
    }

    #[test]
    fn initial_state_thermal_fraction() {
        // binomial: sd = sqrt(0.014 * 0.986 / 1e6) = 1.2e-4; bound 0.0004 is > 3 sd
        let mut r = rng(2);
        let n = 1_000_000;
        let k = (0..n)
            .filter(|_| sample_initial_state(0.0140, &mut r).unwrap() == QubitState::Excited)
            .count();
        let frac = k as f64 / n as f64;
        assert!((frac - 0.0140).abs() < 4e-4, "{frac}");
    }

    #[test]
    fn zero_rates_no_transitions() {
        let p = simulate_state_path(QubitState::Excited, &RateSchedule::constant(RatePair::ZERO), 1e6, &mut rng(3));
        assert!(p.transitions.is_empty());
        let p = simulate_state_path(
            QubitState::Ground,
            &RateSchedule::constant(RatePair::new(0.0, 5.0)),
            1e6,
            &mut rng(3),
        );
        assert!(p.transitions.is_empty());
        assert_eq!(p.state_at(5e5), QubitState::Ground);
    }

    #[test]
    fn first_decay_time_mean_is_t1() {
        // mean of 1e5 exponential draws: relative sd = 1/sqrt(1e5) = 0.32%
        let sched = RateSchedule::constant(RatePair::new(0.0, 1.0 / 1.8));
        let mut r = rng(4);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let p = simulate_state_path(QubitState::Excited, &sched, 1e6, &mut r);
            p.validate().unwrap();
            assert_eq!(p.transitions.len(), 1);
            sum += p.transitions[0].time_ns;
        }
        let mean_us = sum / n as f64 / 1000.0;
        assert!((mean_us - 1.8).abs() < 0.02 * 1.8, "{mean_us}");
    }

    #[test]
    fn pi_pulse() {
        let mut r = rng(5);
        assert_eq!(apply_pi_pulse(QubitState::Ground, 0.0, &mut r), QubitState::Excited);
        assert_eq!(apply_pi_pulse(QubitState::Excited, 0.0, &mut r), QubitState::Ground);
        // binomial sd = sqrt(0.985*0.015/1e5) = 3.8e-4
        let n = 100_000;
        let k = (0..n)
            .filter(|_| apply_pi_pulse(QubitState::Ground, 0.015, &mut r) == QubitState::Excited)
            .count();
        assert!((k as f64 / n as f64 - 0.985).abs() < 1e-3 + 1e-4);
    }

    #[test]
    fn paths_alternate_across_segments() {
        let sched = RateSchedule::from_segments(vec![
            (0.0, RatePair::new(2.0, 3.0)),
            (500.0, RatePair::new(0.1, 0.2)),
            (900.0, RatePair::new(5.0, 5.0)),
        ])
        .unwrap();
        let mut r = rng(6);
        for _ in 0..2000 {
            let p = simulate_state_path(QubitState::Ground, &sched, 3000.0, &mut r);
            p.validate().unwrap();
        }
    }

    #[test]
    fn step_response_at_tau() {
        // bandwidth chosen so tau = 20 ns lands on the grid
        let readout = ReadoutParams {
            system_bandwidth_mhz: 1.0e3 / (2.0 * std::f64::consts::PI * 20.0),
            ringup_start_ns: 100.0,
            ..Default::default()
        };
        let seq = SequenceTiming::default().resolve(&readout).unwrap();
        let path = StatePath::constant(QubitState::Excited, seq.duration_ns());
        let trace = render_homodyne::<ChaCha8Rng>(&path, &readout, &seq, None).unwrap();
        let v = trace.samples[trace.index_of(120.0).unwrap()] as f64;
        let expect = 0.5 * (1.0 - (-1.0f64).exp());
        assert!((v - expect).abs() < 0.01 * expect, "{v} vs {expect}");
        assert_eq!(trace.samples[trace.index_of(50.0).unwrap()], 0.0);
    }

    #[test]
    fn jump_crosses_midpoint_within_three_tau() {
        let readout = ReadoutParams::default();
        let seq = SequenceTiming::default().resolve(&readout).unwrap();
        let t_jump = 705.0;
        let path = StatePath {
            initial: QubitState::Excited,
            transitions: vec![Transition {
                time_ns: t_jump,
                state: QubitState::Ground,
            }],
            duration_ns: seq.duration_ns(),
        };
        let trace = render_homodyne::<ChaCha8Rng>(&path, &readout, &seq, None).unwrap();
        let first_neg = (0..trace.samples.len())
            .find(|&i| trace.time_of(i) > t_jump && trace.samples[i] < 0.0)
            .unwrap();
        let cross = trace.time_of(first_neg);
        assert!(cross - t_jump <= 3.0 * readout.tau_sys_ns(), "{cross}");
        assert!(trace.samples[first_neg - 2] > 0.0);
    }

    #[test]
    fn noise_autocorrelation_at_160_ns() {
        let readout = ReadoutParams::default();
        let mut r = rng(7);
        let noise = render_noise(400_000, 1.0, &readout, &mut r);
        let lag = 16;
        let n = noise.len() - lag;
        let c: f64 = (0..n).map(|i| noise[i] * noise[i + lag]).sum::<f64>() / n as f64;
        let var: f64 = noise.iter().map(|x| x * x).sum::<f64>() / noise.len() as f64;
        assert!((var - 1.0).abs() < 0.02);
        // theory exp(-160/22.74) = 8.8e-4; estimator sd ~ 1/sqrt(n) * ~2 ≈ 3e-3,
        // so the measured value is bounded through the theory, not the sample
        let theory = (-160.0 / readout.tau_sys_ns()).exp();
        assert!(theory <= 1e-3);
        assert!(c.abs() < 1e-2, "{c}");
        let lag1: f64 = (0..noise.len() - 1).map(|i| noise[i] * noise[i + 1]).sum::<f64>() / (noise.len() - 1) as f64;
        assert!((lag1 - (-10.0 / readout.tau_sys_ns()).exp()).abs() < 0.01);
    }

    #[test]
    fn rendering_is_linear_in_noise() {
        let params = SimParams::default();
        let seq = params.sequence.resolve(&params.readout).unwrap();
        let mut streams = RecordStreams::derive(11, QubitState::Excited, 3);
        let path = simulate_state_path(
            QubitState::Excited,
            &RateSchedule::constant(RatePair::new(0.5, 0.5)),
            seq.duration_ns(),
            &mut streams.path,
        );
        let mut noise_a = streams.noise.clone();
        let mut noise_b = streams.noise.clone();
        let noisy = render_homodyne(&path, &params.readout, &seq, Some(&mut noise_a)).unwrap();
        let clean = render_homodyne::<ChaCha8Rng>(&path, &params.readout, &seq, None).unwrap();
        let pure = render_noise(
            clean.samples.len(),
            params.readout.sigma_bin(),
            &params.readout,
            &mut noise_b,
        );
        for i in 0..clean.samples.len() {
            let sum = clean.samples[i] as f64 + pure[i];
            assert!((noisy.samples[i] as f64 - sum).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_snr_rejected() {
        let readout = ReadoutParams {
            nbar: 0.0,
            ..Default::default()
        };
        let seq = SequenceTiming::default().resolve(&readout).unwrap();
        let path = StatePath::constant(QubitState::Ground, seq.duration_ns());
        let err = render_homodyne(&path, &readout, &seq, Some(&mut rng(1))).unwrap_err();
        assert!(matches!(err, SimError::NonPositiveSnr(_)));
    }

    #[test]
    fn clean_ground_run_reads_ground_after_ringup() {
        let params = SimParams {
            qubit: QubitParams {
                t_eff_mk: 0.0,
                ..Default::default()
            },
            noise: false,
            ..Default::default()
        };
        let seq = params.sequence.resolve(&params.readout).unwrap();
        let rec = run_sequence(&params, &seq, QubitState::Ground, &mut RecordStreams::derive(0, QubitState::Ground, 0)).unwrap();
        let start = seq.readout_window.start_ns + 3.0 * params.readout.tau_sys_ns();
        for (i, &v) in rec.trace.samples.iter().enumerate() {
            if rec.trace.time_of(i) >= start {
                assert!(v < 0.0);
            }
        }
    }

    #[test]
    fn label_mismatch_rejected() {
        let params = SimParams::default();
        let seq = params.sequence.resolve(&params.readout).unwrap();
        let err = run_sequence(&params, &seq, QubitState::Excited, &mut RecordStreams::derive(0, QubitState::Excited, 0));
        assert!(matches!(err, Err(SimError::LabelMismatch { .. })));
    }

    #[test]
    fn sequence_markers_default() {
        let readout = ReadoutParams::default();
        let timing = SequenceTiming {
            herald: true,
            ..Default::default()
        };
        let seq = timing.resolve(&readout).unwrap();
        assert_eq!(seq.readout_window.start_ns, 300.0);
        assert_eq!(seq.t_a_ns, 390.0);
        assert_eq!(seq.t_b_ns, 550.0);
        assert_eq!(seq.t_d_ns, 390.0);
        let h = seq.herald_window.unwrap();
        assert_eq!(h.end_ns, 230.0);
        assert_eq!(h.start_ns, 30.0);
        assert_eq!(seq.t_s_ns, Some(220.0));
    }

    #[test]
    fn sequence_off_grid_rejected() {
        let readout = ReadoutParams::default();
        let timing = SequenceTiming {
            t_ab_spacing_ns: 155.0,
            ..Default::default()
        };
        assert!(timing.resolve(&readout).is_err());
    }
}

use qrl_core::analysis::{extract_rates, herald_select, marker_value, two_point_purify, Discriminator};
use qrl_core::model::{effective_rates, thermal_population};
use qrl_core::traceio::observed_view;
use qrl_core::trajectory::{
    sample_initial_state, simulate_ensemble, simulate_state_path, ExperimentRecord, QubitState, RateSchedule,
};
use qrl_core::SimParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ensembles(p: &SimParams, seed: u64, n: usize) -> (Vec<ExperimentRecord>, Vec<ExperimentRecord>) {
    let seq = p.sequence.resolve(&p.readout).unwrap();
    let g = simulate_ensemble(p, &seq, QubitState::Ground, n, seed).unwrap();
    let e = simulate_ensemble(p, &seq.for_label(QubitState::Excited), QubitState::Excited, n, seed).unwrap();
    (g, e)
}

fn read(r: &ExperimentRecord, t: f64) -> QubitState {
    Discriminator::midpoint().classify(marker_value(r, t).unwrap())
}

#[test]
fn idle_occupation_matches_thermal_population() {
    let mut p = SimParams::default();
    p.qubit.t_eff_mk = 150.0;
    p.qubit.t1_idle_us = 1.0;
    let rates = effective_rates(&p.qubit, &p.readout, false).unwrap();
    let schedule = RateSchedule::constant(rates);
    let want = thermal_population(&p.qubit);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let duration = 100_000.0;
    let fractions: Vec<f64> = (0..200)
        .map(|_| {
            let start = sample_initial_state(want, &mut rng).unwrap();
            let path = simulate_state_path(start, &schedule, duration, &mut rng);
            path.dwells()
                .iter()
                .filter(|d| d.0 == QubitState::Excited)
                .map(|d| d.2 - d.1)
                .sum::<f64>()
                / duration
        })
        .collect();
    let n = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / n;
    let se = (fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((mean - want).abs() <= 3.0 * se, "{mean} vs {want} ± {se}");
}

#[test]
fn purification_discards_only_jumps_or_misreads() {
    let mut p = SimParams::default();
    p.sequence.t_d_offset_ns = Some(170.0);
    let (g, e) = ensembles(&p, 3, 20_000);
    let disc = Discriminator::midpoint();
    for records in [&g, &e] {
        let kept = two_point_purify(records, &disc).unwrap();
        let mut is_kept = vec![false; records.len()];
        kept.retained.iter().for_each(|&i| is_kept[i] = true);
        for (r, kept) in records.iter().zip(is_kept) {
            if kept {
                continue;
            }
            let truth = r.truth.as_ref().unwrap();
            let (a, b) = (r.sequence.t_a_ns, r.sequence.t_b_ns);
            let jumped = truth.transitions_between(a, b) > 0;
            let misread = read(r, a) != truth.state_at(a) || read(r, b) != truth.state_at(b);
            assert!(jumped || misread);
        }
        // misreads at t_D against the label: prepared label before, agreed label after
        let t_d = records[0].sequence.t_d_ns;
        let raw = records.iter().filter(|r| read(r, t_d) != r.prepared_label).count() as f64 / records.len() as f64;
        let pure = kept.misclassified(&disc) as f64 / kept.survivors() as f64;
        assert!(pure < raw, "{pure} vs {raw}");
    }
}

#[test]
fn heralding_never_raises_ground_error() {
    let mut p = SimParams::default();
    p.sequence.herald = true;
    for seed in 1..=6 {
        let (mut g, _) = ensembles(&p, seed, 3000);
        g.iter_mut().for_each(observed_view);
        let t_d = g[0].sequence.t_d_ns;
        let wrong = |r: &ExperimentRecord| read(r, t_d) == QubitState::Excited;
        let raw = g.iter().filter(|r| wrong(r)).count() as f64 / g.len() as f64;
        let kept = herald_select(&g, &Discriminator::midpoint()).unwrap();
        let heralded = kept.iter().filter(|&&i| wrong(&g[i])).count() as f64 / kept.len() as f64;
        assert!(heralded <= raw, "seed {seed}: {heralded} > {raw}");
    }
}

#[test]
fn detected_rates_converge_to_injected() {
    let mut p = SimParams::default();
    p.qubit.gamma_up_readout_per_us = 0.2;
    let injected = effective_rates(&p.qubit, &p.readout, true).unwrap();
    let mut t = p.sequence;
    t.readout_duration_ns = 20_000.0;
    let seq = t.resolve(&p.readout).unwrap().for_label(QubitState::Excited);
    let hysteresis = p.analysis.hysteresis_sigma * p.readout.sigma_bin();
    let mut errors = Vec::new();
    for n in [400, 4000] {
        let mut rs = simulate_ensemble(&p, &seq, QubitState::Excited, n, 8).unwrap();
        rs.iter_mut().for_each(observed_view);
        let fit = extract_rates(&rs, &Discriminator::midpoint(), hysteresis, p.analysis.min_dwell_ns);
        for (est, want) in [(fit.gamma_down, injected.gamma_down), (fit.gamma_up, injected.gamma_up)] {
            let r = est.rate_per_us.unwrap();
            assert!((r - want).abs() <= 3.0 * est.stderr_per_us, "{n} records: {r} vs {want} ± {}", est.stderr_per_us);
        }
        errors.push(fit.gamma_down.stderr_per_us);
        assert!(fit.gamma_down.events >= n as u64 * 5 / 2);
    }
    assert!(errors[1] < errors[0] / 2.5);
}

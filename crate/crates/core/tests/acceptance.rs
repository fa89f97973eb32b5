//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::process::ExitCode;
use std::time::Instant;

use qrl_core::analysis::{
    build_histogram, exp_filter_integrate, fidelity_with_optimal_threshold, optimal_threshold, Discriminator,
    Polarity,
};
use qrl_core::experiments::{Summary, SweepPoint};
use qrl_core::model::{effective_rates, pointer_snr, thermal_population, QubitParams, ReadoutParams};
use qrl_core::traceio::{encode_binary, imported_record};
use qrl_core::trajectory::{render_noise, simulate_ensemble, QubitState, Window};
use qrl_core::{run_experiment, SimParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<(bool, String), String>;

fn within(x: f64, centre: f64, tol: f64) -> bool {
    (x - centre).abs() <= tol
}

fn run(name: &str, p: &SimParams) -> Result<Summary, String> {
    run_experiment(name, p, None, false).map(|r| r.summary).map_err(|e| e.to_string())
}

fn raw_fidelity() -> Outcome {
    let Summary::Hist(h) = run("hist", &SimParams::default())? else { unreachable!() };
    let f = h.fidelity.f;
    Ok((
        within(f.value, 0.910, 0.012),
        format!("raw single-bin F = {:.4} ± {:.4} (want 0.910 ± 0.012)", f.value, f.stderr),
    ))
}

fn heralded_fidelity() -> Outcome {
    let Summary::Herald(h) = run("herald", &SimParams::default())? else { unreachable!() };
    let (f, d) = (h.heralded.f, h.improvement);
    Ok((
        within(f.value, 0.939, 0.012) && within(d.value, 0.029, 0.006),
        format!(
            "heralded F = {:.4} (want 0.939 ± 0.012), improvement {:.4} ± {:.4} over raw {:.4} (want 0.029 ± 0.006)",
            f.value, d.value, d.stderr, h.raw.f.value
        ),
    ))
}

fn purification() -> Outcome {
    let Summary::Purify(s) = run("purify", &SimParams::default())? else { unreachable!() };
    let m = s.misclassification;
    Ok((
        m.value <= 1e-3,
        format!(
            "survivor misclassification {} / {} = {:.2e} at t_D = {} ns (want <= 1e-3)",
            s.misclassified, m.n, m.value, s.t_d_ns
        ),
    ))
}

fn budget() -> Outcome {
    let p = SimParams::default();
    let Summary::Budget(b) = run("budget", &p)? else { unreachable!() };
    let get = |name: &str| b.budget.entry(name).map(|e| e.loss).unwrap_or(f64::NAN);
    let (t1, th, up, snr, rem) = (
        get("t1_decay"),
        get("thermal_population"),
        get("gamma_up"),
        get("snr"),
        get("remaining"),
    );
    let pi = p.qubit.pi_pulse_error;
    let ok = (0.039..=0.052).contains(&t1)
        && (0.024..=0.034).contains(&th)
        && snr < 1e-3
        && (0.001..=0.004).contains(&up)
        && within(rem, pi, 0.005);
    Ok((
        ok,
        format!(
            "t1_decay {:.2}% thermal {:.2}% gamma_up {:.3}% gamma_down {:.3}% snr {:.3}% remaining {:.2}% (π error {:.1}%)",
            100.0 * t1,
            100.0 * th,
            100.0 * up,
            100.0 * get("gamma_down"),
            100.0 * snr,
            100.0 * rem,
            100.0 * pi
        ),
    ))
}

fn jump_statistics() -> Outcome {
    let mut p = SimParams::default();
    // a readout-induced Γ↑ keeps the qubit cycling, so each record holds
    // several completed excited dwells
    p.qubit.gamma_up_readout_per_us = 0.2;
    p.analysis.jump_records = 4000;
    let Summary::Jumps(j) = run("jumps", &p)? else { unreachable!() };
    let injected = 1.0 / j.model_rates.gamma_down;
    let fit = j.t1_fit_us.ok_or("no T1 fit")?;
    let ks = j.ks_down.ok_or("no KS result")?;
    let dwells = j.gamma_down.events;
    let rel = fit.value / injected - 1.0;
    Ok((
        rel.abs() <= 0.05 && dwells >= 10_000 && ks.p_value >= 0.01,
        format!(
            "T1 fit {:.3} ± {:.3} µs vs injected {:.3} µs ({:+.1}%) from {} dwells; KS D = {:.4}, p = {:.3}",
            fit.value,
            fit.stderr,
            injected,
            100.0 * rel,
            dwells,
            ks.statistic,
            ks.p_value
        ),
    ))
}

fn power_sweep() -> Outcome {
    let p = SimParams::default();
    let Summary::PowerSweep(points) = run("power-sweep", &p)? else { unreachable!() };
    let knee = p.readout.backaction_knee;
    let f = |s: &SweepPoint| s.single_bin.f.value;
    let (below, above): (Vec<&SweepPoint>, Vec<&SweepPoint>) = points.iter().partition(|s| s.nbar <= knee);
    let rising = below.windows(2).all(|w| f(w[1]) > f(w[0]));
    let falling = match below.last() {
        Some(peak) => above.iter().all(|s| f(s) < f(peak)) && above.windows(2).all(|w| f(w[1]) < f(w[0])),
        None => false,
    };
    let agree = points
        .iter()
        .filter(|s| s.nbar >= 10.0)
        .map(|s| (s.integrated.f.value - f(s)).abs())
        .fold(0.0, f64::max);
    let low = points
        .iter()
        .find(|s| (s.nbar - 1.0).abs() < 0.05)
        .ok_or("sweep lacks n̄ = 1")?;
    let gain = low.integrated.f.value - f(low);
    let curve: Vec<String> = points.iter().map(|s| format!("{}:{:.3}", s.nbar, f(s))).collect();
    Ok((
        rising && falling && !above.is_empty() && agree <= 0.01 && gain > 0.2,
        format!(
            "single-bin F [{}] rising {rising} falling {falling}; max |F_int − F_single| for n̄ >= 10: {agree:.4}; gain at n̄ = 1: {gain:.3}",
            curve.join(" ")
        ),
    ))
}

fn long_t1() -> Outcome {
    let mut p = SimParams::default();
    p.qubit.t1_idle_us = 10.0;
    p.qubit.pi_pulse_error = 0.0;
    let Summary::Reset(r) = run("reset", &p)? else { unreachable!() };
    p.qubit.t_eff_mk = 0.0;
    let Summary::Hist(h) = run("hist", &p)? else { unreachable!() };
    let (reset, raw) = (r.outcome.reset_fidelity.value, h.fidelity.f.value);
    Ok((
        reset >= 0.985 && raw >= 0.98,
        format!("T1 = 10 µs: reset fidelity {reset:.4} (want >= 0.985), raw F with perfect preparation {raw:.4} (want >= 0.98)"),
    ))
}

fn fingerprint(p: &SimParams) -> Vec<u8> {
    let seq = p.sequence.resolve(&p.readout).unwrap();
    let mut records = simulate_ensemble(p, &seq, QubitState::Ground, 500, p.master_seed).unwrap();
    records.extend(simulate_ensemble(p, &seq.for_label(QubitState::Excited), QubitState::Excited, 500, p.master_seed).unwrap());
    let mut bytes = encode_binary(&records, true).unwrap();
    for name in ["herald", "purify", "jumps"] {
        bytes.extend(serde_json::to_vec(&run_experiment(name, p, None, false).unwrap()).unwrap());
    }
    bytes
}

fn properties() -> Outcome {
    let mut failed = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    // optimizer vs exhaustive scan of every edge and polarity
    let mut scans = 0;
    for trial in 0..50 {
        let s = 0.2 + 0.05 * f64::from(trial);
        let g: Vec<f64> = (0..400).map(|_| Normal::new(-0.5, s).unwrap().sample(&mut rng)).collect();
        let e: Vec<f64> = (0..300).map(|_| Normal::new(0.5, s).unwrap().sample(&mut rng)).collect();
        let hg = build_histogram(&g, 80, (-3.0, 3.0)).unwrap();
        let he = build_histogram(&e, 80, (-3.0, 3.0)).unwrap();
        let err = |d: &Discriminator| {
            let wg = g.iter().filter(|&&v| d.classify(v) == QubitState::Excited).count() as u64;
            let we = e.iter().filter(|&&v| d.classify(v) == QubitState::Ground).count() as u64;
            wg * e.len() as u64 + we * g.len() as u64
        };
        let best = hg
            .bin_edges
            .iter()
            .flat_map(|&t| [Polarity::ExcitedAbove, Polarity::ExcitedBelow].map(|p| Discriminator::new(t, p)))
            .map(|d| err(&d))
            .min()
            .unwrap();
        if err(&optimal_threshold(&hg, &he).unwrap()) != best {
            failed.push(format!("threshold scan trial {trial}"));
        }
        scans += 1;
    }

    // decisions unchanged by v -> a·v + b, a > 0
    for trial in 0..50 {
        let g: Vec<f64> = (0..200).map(|_| rng.random_range(-2.0..1.0)).collect();
        let e: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..2.0)).collect();
        let (a, b) = (rng.random_range(0.01..100.0), rng.random_range(-50.0..50.0));
        let (d1, f1) = fidelity_with_optimal_threshold(&g, &e, 100).unwrap();
        let g2: Vec<f64> = g.iter().map(|v| a * v + b).collect();
        let e2: Vec<f64> = e.iter().map(|v| a * v + b).collect();
        let (d2, f2) = fidelity_with_optimal_threshold(&g2, &e2, 100).unwrap();
        let same = g.iter().chain(&e).all(|&v| d1.classify(v) == d2.classify(a * v + b));
        if !same || f1 != f2 {
            failed.push(format!("affine invariance trial {trial}"));
        }
    }

    // filter limits
    let samples: Vec<f32> = (0..50).map(|_| rng.random_range(-3.0f32..3.0)).collect();
    let mean = samples.iter().map(|&v| f64::from(v)).sum::<f64>() / 50.0;
    let r = imported_record(QubitState::Ground, [f64::NAN, 0.0, 0.0, 0.0], 10.0, samples.clone());
    let w = Window::new(0.0, 500.0);
    if (exp_filter_integrate(&r.trace, 1e15, w).unwrap() - mean).abs() > 1e-9 {
        failed.push("filter τ→∞ limit".into());
    }
    if exp_filter_integrate(&r.trace, 1e-3, w).unwrap() != f64::from(samples[0]) {
        failed.push("filter τ→0 limit".into());
    }

    // noise correlation at 160 ns, from the single-pole law and the generator
    let readout = ReadoutParams::default();
    let tau = 1e3 / (2.0 * std::f64::consts::PI * readout.system_bandwidth_mhz);
    let rho160 = (-160.0 / tau).exp();
    let x = render_noise(2_000_000, 1.0, &readout, &mut rng);
    let acf = |lag: usize| (0..x.len() - lag).map(|i| x[i] * x[i + lag]).sum::<f64>() / (x.len() - lag) as f64;
    let var = acf(0);
    let lag1 = acf(1) / var;
    if rho160 > 1e-3 || (lag1 - (-readout.sample_dt_ns / tau).exp()).abs() > 6e-3 || (acf(16) / var).abs() > 4e-3 {
        failed.push(format!("noise correlation (law {rho160:.2e}, lag-1 {lag1:.4})"));
    }

    // detailed balance and √n̄
    for (t1, t_mk, f) in [(1.8, 88.0, 7.8), (10.0, 30.0, 5.0), (0.5, 300.0, 9.0)] {
        let q = QubitParams { t1_idle_us: t1, t_eff_mk: t_mk, f01_ghz: f, ..Default::default() };
        let r = effective_rates(&q, &readout, false).unwrap();
        let boltz = (-6.626_070_15e-34 * f * 1e9 / (1.380_649e-23 * t_mk * 1e-3)).exp();
        let p = thermal_population(&q);
        if (r.gamma_up / r.gamma_down / boltz - 1.0).abs() > 1e-6
            || ((r.gamma_up + r.gamma_down) * t1 - 1.0).abs() > 1e-12
            || (p / (1.0 - p) / boltz - 1.0).abs() > 1e-6
        {
            failed.push(format!("detailed balance at {t_mk} mK"));
        }
    }
    for nbar in [1.0, 14.6, 100.0] {
        let one = pointer_snr(&ReadoutParams { nbar, ..Default::default() });
        let four = pointer_snr(&ReadoutParams { nbar: 4.0 * nbar, ..Default::default() });
        if (four / one - 2.0).abs() > 1e-12 {
            failed.push(format!("√n̄ scaling at {nbar}"));
        }
    }

    // bit-exact reruns under different worker counts
    let mut p = SimParams::default();
    p.n_traces = 2000;
    p.analysis.jump_records = 50;
    let prints: Vec<Vec<u8>> = [1usize, 4, 4]
        .iter()
        .map(|&n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(|| fingerprint(&p)))
        .collect();
    if prints.windows(2).any(|w| w[0] != w[1]) {
        failed.push("determinism across worker counts".into());
    }

    Ok((
        failed.is_empty(),
        if failed.is_empty() {
            format!("{scans} threshold scans exact, 50 affine maps invariant, filter limits, noise ρ(160 ns) = {rho160:.2e}, detailed balance, √n̄, determinism over 1/4 workers")
        } else {
            format!("failed: {}", failed.join("; "))
        },
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 raw fidelity", raw_fidelity),
        ("2 heralded fidelity", heralded_fidelity),
        ("3 two-point purification", purification),
        ("4 fidelity budget", budget),
        ("5 jump statistics", jump_statistics),
        ("6 power sweep", power_sweep),
        ("7 long-T1 reset and readout", long_t1),
        ("8 property suite", properties),
    ];
    let mut all = true;
    for (name, check) in criteria {
        let start = Instant::now();
        let (ok, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        all &= ok;
        println!(
            "{} criterion {name}: {detail} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. Pass
//! criterion numbers (`cargo test --test acceptance -- 4 6`) to run a subset.
//! The process exits non-zero when any selected criterion fails.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use radcal::lsfit::detrend;
use radcal::nlms::normalize_and_detrend;
use radcal::reconstruction::Reconstructor;
use radcal::*;
use radcal_sim::bias::{empirical_bias_oracle, BiasOptions};
use radcal_sim::config::{HeatmapSpec, SbbInjection, SllsEval};
use radcal_sim::experiment::ChannelSide;
use radcal_sim::parallel::default_workers;
use radcal_sim::replay::{generate_replay, parse_replay, relative_estimation, write_replay};
use radcal_sim::scene::{ImbalanceTrack, SceneGenerator};
use radcal_sim::slls::{slls_heatmap, SllsMethod};
use radcal_sim::*;
use radcal_sim::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Criterion 1
const C1_MCS: usize = 200;
const C1_PHASE_TOL_DEG: f64 = 0.5;
const C1_GAIN_TOL: f64 = 0.01;
const C1_MAE_RATIO: f64 = 1.5;
// Criterion 2
const C2_MCS: usize = 200;
const C2_MIN_SLLS_DB: f64 = 3.0;
const C2_IDEAL_GAP_DB: f64 = 1.0;
const C2_ST_LOW_DB: f64 = 1.0;
const C2_ST_LOW_FRACTION: f64 = 0.05;
// Criterion 3
const C3_MCS: usize = 100;
const C3_PROPOSED_GAP_DB: f64 = 1.5;
const C3_ST_GAP_DB: f64 = 2.0;
// Criterion 4
const C4_MCS: usize = 500;
const C4_ITERATIONS: u64 = 1100;
const C4_STANDALONE: (f64, u64) = (10.0, 20);
const C4_COMBINED: (f64, u64) = (14.0, 40);
const C4_QUIET_MCS: usize = 100;
const C4_QUIET_ITERATIONS: u64 = 2000;
// Criterion 5
const C5_STABLE_MU: [f64; 4] = [0.1, 1.0, 3.0, 12.0];
const C5_UNSTABLE_MU: f64 = 48.0;
const C5_ITERATIONS: usize = 2000;
const C5_CONVERGED_RATIO: f64 = 1e-3;
const C5_DIVERGE_WINDOW: usize = 500;
const C5_DIVERGE_RATIO: f64 = 10.0;
const C5_RUNS: u64 = 10;
// Criterion 6
const C6_MCS: usize = 500;
const C6_MAX_Z: f64 = 3.0;
// Criterion 7
const C7_TIGHT: f64 = 1e-9;
const C7_PREDISTORT: f64 = 1e-6;
const C7_REPLAY_PHASE_DEG: f64 = 1.5;
const C7_REPLAY_GAIN: f64 = 0.05;
// Criterion 8
const C8_BUDGET_US: f64 = 1000.0;
const C8_ITERATIONS: u64 = 2000;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn opts() -> RunOptions {
    RunOptions {
        workers: default_workers(),
        keep_traces: false,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn convergence() -> Result<Outcome> {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.n_mcs = C1_MCS;
    cfg.scenario.n_iterations = 2000;
    let exp = run_experiment(&cfg, &[Mode::Calibration], &opts())?;
    let m = &exp.metrics[0];
    let mut worst = Vec::new();
    let mut pass = true;
    for side in [ChannelSide::Va, ChannelSide::Tx, ChannelSide::Rx] {
        let (mut phi, mut gamma) = ((0, 0.0f64), (0, 0.0f64));
        for c in m.channels.iter().filter(|c| c.side == side) {
            let p = c.phi.last().expect("iterations").mean.abs();
            let g = c.gamma.last().expect("iterations").mean.abs();
            if p > phi.1 {
                phi = (c.channel, p);
            }
            if g > gamma.1 {
                gamma = (c.channel, g);
            }
        }
        pass &= phi.1 < C1_PHASE_TOL_DEG && gamma.1 < C1_GAIN_TOL;
        worst.push(format!(
            "{} max|phase| {:.3} deg (ch {}), max|gain| {:.4} (ch {})",
            side.name(),
            phi.1,
            phi.0,
            gamma.1,
            gamma.0
        ));
    }
    let (mae_1000, mae_2000) = (m.mae_phi_deg[999], m.mae_phi_deg[1999]);
    let ratio_ok = mae_1000 <= C1_MAE_RATIO * mae_2000;
    Ok(Outcome::new(
        pass && ratio_ok,
        format!(
            "{}; MAE phase {:.3} deg at 1000 vs {:.3} at 2000 (ratio {:.3})",
            worst.join("; "),
            mae_1000,
            mae_2000,
            mae_1000 / mae_2000
        ),
    ))
}

fn sidelobe_suppression() -> Result<Outcome> {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.n_mcs = C2_MCS;
    cfg.slls_eval = Some(SllsEval::default());
    let exp = run_experiment(&cfg, &[Mode::Calibration, Mode::StBaseline], &opts())?;
    let prop = exp.metrics_for(Mode::Calibration).expect("requested");
    let st = exp.metrics_for(Mode::StBaseline).expect("requested");
    let (p, i, s) = (
        mean(&prop.slls_values()),
        mean(&prop.ideal_slls_values()),
        mean(&st.slls_values()),
    );
    let st_vals = st.slls_values();
    let low = st_vals.iter().filter(|v| **v < C2_ST_LOW_DB).count() as f64 / st_vals.len() as f64;
    let pass = p >= C2_MIN_SLLS_DB && (i - p).abs() <= C2_IDEAL_GAP_DB && s < p && low >= C2_ST_LOW_FRACTION;
    Ok(Outcome::new(
        pass,
        format!(
            "proposed {p:.2} dB, ideal {i:.2} dB, ST {s:.2} dB, ST below {C2_ST_LOW_DB} dB in {:.1}% of MCS",
            100.0 * low
        ),
    ))
}

fn heat_map() -> Result<Outcome> {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.n_mcs = C3_MCS;
    cfg.heatmap = Some(HeatmapSpec {
        snr_db: vec![6.0, 12.0, 20.0],
        levels: vec![1, 3, 5],
        ..HeatmapSpec::default()
    });
    let cells = slls_heatmap(&cfg, default_workers())?;
    let find = |snr: f64, level: u32, method: SllsMethod| {
        cells
            .iter()
            .find(|c| c.snr_db == snr && c.level == level && c.method == method)
            .expect("cell on grid")
            .mean_slls_db
    };
    let mut pass = true;
    let mut worst_gap = 0.0f64;
    for snr in [6.0, 12.0, 20.0] {
        for level in [1, 3, 5] {
            let gap = (find(snr, level, SllsMethod::Ideal) - find(snr, level, SllsMethod::Proposed)).abs();
            worst_gap = worst_gap.max(gap);
            pass &= gap <= C3_PROPOSED_GAP_DB;
        }
    }
    let mut st_gaps = Vec::new();
    for level in [3, 5] {
        let gap = find(6.0, level, SllsMethod::Ideal) - find(6.0, level, SllsMethod::St);
        pass &= gap >= C3_ST_GAP_DB;
        st_gaps.push(format!("I{level} {gap:.2} dB"));
    }
    Ok(Outcome::new(
        pass,
        format!(
            "largest proposed-to-ideal gap {worst_gap:.2} dB; ST below ideal at 6 dB: {}",
            st_gaps.join(", ")
        ),
    ))
}

fn sbb_detection() -> Result<Outcome> {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.imbalance_gen = ImbalanceGen::None;
    cfg.scenario.n_mcs = C4_MCS;
    cfg.scenario.n_iterations = C4_ITERATIONS;
    cfg.sbb_injection = Some(SbbInjection::default());
    let exp = run_experiment(&cfg, &[Mode::Sbb, Mode::Combined], &opts())?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (mode, (mean_max, max_max)) in [(Mode::Sbb, C4_STANDALONE), (Mode::Combined, C4_COMBINED)] {
        let m = exp.metrics_for(mode).expect("requested");
        let d = m.detection_delays();
        let missed = m.completed - d.len();
        let avg = d.iter().sum::<u64>() as f64 / d.len().max(1) as f64;
        let max = d.iter().copied().max().unwrap_or(0);
        pass &= missed == 0 && m.false_alarms() == 0 && avg <= mean_max && max <= max_max;
        parts.push(format!(
            "{} mean {avg:.2} max {max} (missed {missed}, early {})",
            mode.name(),
            m.false_alarms()
        ));
    }
    let mut quiet = cfg.clone();
    quiet.sbb_injection = None;
    quiet.scenario.n_mcs = C4_QUIET_MCS;
    quiet.scenario.n_iterations = C4_QUIET_ITERATIONS;
    let exp = run_experiment(&quiet, &[Mode::Sbb, Mode::Combined], &opts())?;
    let alarms: usize = exp.metrics.iter().map(|m| m.false_alarms()).sum();
    pass &= alarms == 0;
    parts.push(format!("false alarms without SBB {alarms}"));
    Ok(Outcome::new(pass, parts.join("; ")))
}

/// Raw-weight error norm per iteration with the true `s` as reconstruction
/// and no noise.
fn exact_run(mu_0: f64, seed: u64, iterations: usize) -> Result<Vec<f64>> {
    let mut scenario = ScenarioConfig::default();
    scenario.noise_enabled = false;
    let gen = SceneGenerator::new(&scenario)?;
    let geom = scenario.geom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let track = ImbalanceTrack::draw(&scenario.imbalance_gen, &geom, &mut rng)?;
    let profile = track.profile_at(1)?.into_owned();
    let mut est = NlmsEstimator::new(EstimatorConfig::constant(0.1, geom.k())?)?;
    let mut errors = Vec::with_capacity(iterations + 1);
    let error = |est: &NlmsEstimator64| -> f64 {
        est.state()
            .psi_hat
            .iter()
            .zip(&profile.psi)
            .map(|(w, p)| (w - p).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    errors.push(error(&est));
    for _ in 0..iterations {
        let scene = gen.draw_scene(&profile, &mut rng)?;
        // the schedule is bypassed so 4K can be exercised
        est.step_with_mu0(mu_0, &scene.measured, &scene.ideal)?;
        errors.push(error(&est));
    }
    Ok(errors)
}

fn stability() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for mu_0 in C5_STABLE_MU {
        let mut worst = 0.0f64;
        for seed in 0..C5_RUNS {
            let e = exact_run(mu_0, seed, C5_ITERATIONS)?;
            worst = worst.max(e[C5_ITERATIONS] / e[0]);
        }
        pass &= worst < C5_CONVERGED_RATIO;
        parts.push(format!("mu0 {mu_0}: final/initial <= {worst:.1e}"));
    }
    let mut diverged = 0;
    for seed in 0..C5_RUNS {
        let e = exact_run(C5_UNSTABLE_MU, seed, C5_DIVERGE_WINDOW)?;
        if e.iter().any(|v| !v.is_finite() || *v > C5_DIVERGE_RATIO * e[0]) {
            diverged += 1;
        }
    }
    pass &= diverged == C5_RUNS;
    parts.push(format!("mu0 {C5_UNSTABLE_MU}: {diverged}/{C5_RUNS} runs beyond {C5_DIVERGE_RATIO}x"));
    Ok(Outcome::new(pass, parts.join("; ")))
}

fn bias_agreement() -> Result<(Outcome, String)> {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.n_mcs = C6_MCS;
    let rep = empirical_bias_oracle(&cfg, &BiasOptions::default())?;
    let max_z = rep
        .channels
        .iter()
        .skip(1)
        .map(|c| {
            let (r, i) = c.z();
            r.abs().max(i.abs())
        })
        .fold(0.0, f64::max);
    let max_z_full = rep
        .channels
        .iter()
        .skip(1)
        .map(|c| {
            let (r, i) = c.z_full();
            r.abs().max(i.abs())
        })
        .fold(0.0, f64::max);
    let max_im = rep.channels.iter().skip(1).map(|c| c.z_b0_im().abs()).fold(0.0, f64::max);
    let pass = max_z <= C6_MAX_Z && max_im <= C6_MAX_Z;
    let outcome = Outcome::new(
        pass,
        format!(
            "max |measured - b0| {max_z:.2} SE, max |Im b0| {max_im:.2} SE (reconstruction-error-only prediction)"
        ),
    );
    let note = format!(
        "with the measurement-noise term included the largest disagreement is {max_z_full:.2} SE"
    );
    Ok((outcome, note))
}

fn close(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol)
}

fn oracles() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failed = Vec::new();
    let geom = ArrayGeometry64::automotive_3x4();
    let random_factor = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Complex64> {
        (0..n)
            .map(|i| {
                if i == 0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::from_polar(rng.random_range(0.5..1.5), rng.random_range(-PI..PI))
                }
            })
            .collect()
    };

    let mut kron = true;
    for _ in 0..100 {
        let (xi_t, xi_r) = (random_factor(&mut rng, 3), random_factor(&mut rng, 4));
        let f = factorize_txrx(&factor_to_va(&xi_t, &xi_r)?, &geom)?;
        kron &= close(&f.xi_t, &xi_t, C7_TIGHT) && close(&f.xi_r, &xi_r, C7_TIGHT);
    }
    if !kron {
        failed.push("kronecker round trip");
    }

    let mut lines = true;
    for _ in 0..100 {
        let (a, b) = (rng.random_range(-10.0..10.0), rng.random_range(-3.0..3.0));
        let y: Vec<f64> = (0..12).map(|k| a + b * k as f64).collect();
        let (_, r) = detrend(&y);
        lines &= r.iter().all(|v| v.abs() <= C7_TIGHT);
    }
    if !lines {
        failed.push("detrend");
    }

    // Phases within +-20 deg and slopes below 0.35 cycles keep every
    // adjacent phase step inside the unwrapping range.
    let mut invariant = true;
    for _ in 0..100 {
        let psi: Vec<Complex64> = (0..12)
            .map(|_| Complex64::from_polar(rng.random_range(0.8..1.2), rng.random_range(-20f64..20.0).to_radians()))
            .collect();
        let c = Complex64::from_polar(rng.random_range(0.2..5.0), rng.random_range(-PI..PI));
        let slope = rng.random_range(-0.35..0.35);
        let moved: Vec<Complex64> = psi
            .iter()
            .enumerate()
            .map(|(k, p)| c * p * Complex64::from_polar(1.0, 2.0 * PI * slope * k as f64))
            .collect();
        let (a, b) = (normalize_and_detrend(&psi)?, normalize_and_detrend(&moved)?);
        invariant &= close(&a.xi_hat, &b.xi_hat, C7_TIGHT);
    }
    if !invariant {
        failed.push("normalization invariance");
    }

    // On-grid means on the K-point grid of an unpadded FFT: there the
    // targets are orthogonal and no sidelobe shifts another target's peak.
    let grid = ArrayGeometry64::new(4, 4, 0.5)?;
    let mut clean = Reconstructor::new(CleanConfig {
        fft_len: 16,
        ..CleanConfig::default()
    })?;
    let mut on_grid = true;
    for _ in 0..50 {
        let mut bins: Vec<i32> = (-8..8).collect();
        let mut truth = TargetSet::empty();
        for _ in 0..3 {
            let b = bins.remove(rng.random_range(0..bins.len()));
            let a = Complex64::from_polar(rng.random_range(0.3..1.0), rng.random_range(-PI..PI));
            truth.push(a, b as f64 / 16.0)?;
        }
        let s = synthesize_ideal(&truth, &grid);
        let found = clean.clean(&s.samples)?;
        let rebuilt = synthesize_ideal(&found, &grid);
        on_grid &= found.q() == 3 && close(&rebuilt.samples, &s.samples, C7_TIGHT);
    }
    if !on_grid {
        failed.push("on-grid CLEAN");
    }

    let gen = SceneGenerator::new(&ScenarioConfig {
        noise_enabled: false,
        ..ScenarioConfig::default()
    })?;
    let mut recovers = true;
    for _ in 0..100 {
        let profile = ImbalanceProfile::from_factors(random_factor(&mut rng, 3), random_factor(&mut rng, 4))?;
        let scene = gen.draw_scene(&profile, &mut rng)?;
        let back = predistort(&scene.measured, &profile.xi)?;
        recovers &= close(&back.samples, &scene.ideal.samples, C7_PREDISTORT);
    }
    if !recovers {
        failed.push("predistort with truth");
    }

    let mut cfg = ExperimentConfig::default();
    cfg.scenario.n_mcs = 6;
    cfg.scenario.n_iterations = 200;
    cfg.sbb_injection = Some(SbbInjection {
        iteration: 100,
        ..SbbInjection::default()
    });
    let modes = [Mode::Calibration, Mode::Combined, Mode::StBaseline];
    let run = |workers| run_experiment(&cfg, &modes, &RunOptions { workers, keep_traces: true });
    let (a, b, c) = (run(1)?, run(1)?, run(3)?);
    let traces = |e: &Experiment| serde_json::to_string(&e.traces).expect("serializable");
    if a.metrics != b.metrics || traces(&a) != traces(&b) || a.metrics != c.metrics {
        failed.push("bit-identical reruns");
    }

    let mut rcfg = ExperimentConfig::default();
    rcfg.scenario.geom = ArrayGeometry64::new(3, 4, 0.6)?;
    rcfg.scenario.n_mcs = 2;
    rcfg.scenario.snr_db = 25.0;
    rcfg.estimator = EstimatorConfig::heat_up(12)?;
    rcfg.relative = Some(radcal_sim::config::RelativeSpec {
        phase_deg: 0.0,
        gain: 0.0,
        min_vectors: 100,
    });
    let (records, _) = generate_replay(&rcfg.scenario, 3000, 10)?;
    let mut buf = Vec::new();
    write_replay(&mut buf, &records, Some("acceptance")).map_err(|e| SimError::Replay {
        line: 0,
        msg: e.to_string(),
    })?;
    let parsed = parse_replay(buf.as_slice())?;
    let rel = relative_estimation(&parsed, &rcfg, default_workers())?;
    let (phase, gain) = (
        *rel.proposed.mae_phi_deg.last().expect("iterations"),
        *rel.proposed.mae_gamma.last().expect("iterations"),
    );
    if parsed != records || phase > C7_REPLAY_PHASE_DEG || gain > C7_REPLAY_GAIN {
        failed.push("replay self-validation");
    }

    let detail = if failed.is_empty() {
        format!("all identities hold; replay null-injection residual {phase:.2} deg, {gain:.3} gain")
    } else {
        format!("failed: {}", failed.join(", "))
    };
    Ok(Outcome::new(failed.is_empty(), detail))
}

fn throughput() -> Result<Outcome> {
    let mut cfg = ExperimentConfig::default();
    cfg.scenario.n_mcs = 1;
    cfg.scenario.n_iterations = C8_ITERATIONS;
    // warm-up builds the FFT plans and pages in the code
    run_trial(&cfg, &[Mode::Calibration], 1)?;
    let start = Instant::now();
    run_trial(&cfg, &[Mode::Calibration], 0)?;
    let us = start.elapsed().as_secs_f64() * 1e6 / C8_ITERATIONS as f64;
    Ok(Outcome::new(
        us < C8_BUDGET_US,
        format!("{us:.1} us per iteration including scene synthesis and bookkeeping"),
    ))
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut all_pass = true;
    let mut report = |n: u32, name: &str, r: Result<Outcome>| {
        let o = r.unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        all_pass &= o.pass;
        println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    let criteria: [(u32, &str, fn() -> Result<Outcome>); 8] = [
        (1, "convergence", convergence),
        (2, "sidelobe suppression", sidelobe_suppression),
        (3, "heat map", heat_map),
        (4, "SBB detection", sbb_detection),
        (5, "stability bound", stability),
        (6, "bias agreement", || {
            bias_agreement().map(|(o, note)| {
                println!("  note: {note}");
                o
            })
        }),
        (7, "oracle and identity suite", oracles),
        (8, "throughput", throughput),
    ];
    for (n, name, f) in criteria {
        if wanted(n) {
            let start = Instant::now();
            let r = f();
            report(n, name, r);
            println!("  elapsed {:.1} s", start.elapsed().as_secs_f64());
        }
    }
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

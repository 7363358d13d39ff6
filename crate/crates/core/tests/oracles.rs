//! Worked examples checked against independent evaluations.

use radcal::imbalance::{complex_to_gpi, gpi_to_complex};
use radcal::lsfit::fit_line;
use radcal::reconstruction::Reconstructor;
use radcal::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn measured(v: Vec<Complex64>) -> SignalVector64 {
    SignalVector::new(v, SignalKind::Measured)
}

fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

/// Draws primary targets (1..=5, amplitudes in [-10, 0] dB) and secondary
/// ones 10..20 dB below the strongest, DoAs uniform over +-90 deg.
fn random_scene(rng: &mut ChaCha8Rng) -> TargetSet64 {
    let pmf = [0.40, 0.30, 0.15, 0.10, 0.05];
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut q1 = 5;
    for (i, p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            q1 = i + 1;
            break;
        }
    }
    let q2 = rng.random_range(0..=3);
    let mut t = TargetSet::empty();
    let mut dominant: f64 = 0.0;
    let mut draw = |rng: &mut ChaCha8Rng, db: f64, t: &mut TargetSet64| {
        let a = 10f64.powf(db / 20.0);
        let phase = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let theta = rng.random_range(-90.0f64..90.0);
        let f = 0.5 * theta.to_radians().sin();
        t.push(Complex64::from_polar(a, phase), radcal::array::wrap_frequency(f)).unwrap();
        a
    };
    for _ in 0..q1 {
        let db = rng.random_range(-10.0..=0.0);
        dominant = dominant.max(draw(rng, db, &mut t));
    }
    let dom_db = 20.0 * dominant.log10();
    for _ in 0..q2 {
        let db = dom_db - rng.random_range(10.0..20.0);
        draw(rng, db, &mut t);
    }
    t
}

#[test]
fn kronecker_round_trip_through_factorization() {
    let g = ArrayGeometry::new(2, 2, 0.5).unwrap();
    let xi_t = vec![c(1.0, 0.0), Complex64::from_polar(1.0, std::f64::consts::PI / 6.0)];
    let xi_r = vec![c(1.0, 0.0), c(1.0, 0.1)];
    let xi = factor_to_va(&xi_t, &xi_r).unwrap();
    let f = factorize_txrx(&xi, &g).unwrap();
    for (a, b) in f.xi_t.iter().zip(&xi_t).chain(f.xi_r.iter().zip(&xi_r)) {
        assert!((a - b).norm() < 1e-9);
    }
}

#[test]
fn two_well_separated_targets_are_recovered() {
    // 0 dB and -10 dB, 0.5 cycles apart on the 1024 grid. At K = 12 the
    // second target's leakage has a slope at the first peak unless the two
    // amplitudes are in phase, so the complex-phase case uses K = 32.
    let n = 1024.0;
    for (k, phase) in [(12usize, 0.0), (12, std::f64::consts::PI), (32, 1.0), (64, -2.0)] {
        let truth = TargetSet::new(
            vec![c(1.0, 0.0), Complex64::from_polar(10f64.powf(-0.5), phase)],
            vec![-0.1875, 0.3125],
        )
        .unwrap();
        let x = synthesize(&truth, k);
        let est = Reconstructor::new(CleanConfig::default()).unwrap().clean(&x).unwrap();
        assert_eq!(est.q(), 2, "K={k}: {est:?}");
        for (f_est, f_true) in est.frequencies().iter().zip(truth.frequencies()) {
            assert!((f_est - f_true).abs() < 1.0 / (2.0 * n), "K={k}: {est:?}");
        }
        // brute force: re-synthesize and compare the residual power
        let resynth = synthesize(&est, k);
        let resid: f64 = resynth.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum();
        let power: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        assert!(10.0 * (resid / power).log10() < -40.0, "K={k}");
    }
}

#[test]
fn exact_calibration_reconstructs_single_target() {
    let g = ArrayGeometry::<f64>::automotive_3x4();
    let profile = ImbalanceProfile::from_txrx_gpi(
        &[0.0, 0.12, -0.08],
        &[0.0, 0.2, -0.3],
        &[0.0, -0.15, 0.1, 0.05],
        &[0.0, 0.25, -0.1, 0.3],
    )
    .unwrap();
    let truth = TargetSet::new(vec![c(0.7, -0.4)], vec![200.0 / 1024.0]).unwrap();
    let s = synthesize_ideal(&truth, &g);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = apply_imbalance(&s, &profile, &NoiseModel::disabled(), 1.0, &mut rng).unwrap();
    let out = reconstruct(&x, &profile.psi, &CleanConfig::default(), &g).unwrap();
    assert!(rel_err(&out.reconstructed.samples, &s.samples) < 1e-6);
    // predistorting with the truth gives back s
    let pd = predistort(&x, &profile.psi).unwrap();
    assert!(rel_err(&pd.samples, &s.samples) < 1e-6);
    // reconstructed vector equals synthesis of the estimated targets
    assert_eq!(
        out.reconstructed.samples,
        synthesize(&out.estimated_targets, 12)
    );
}

#[test]
fn clean_beats_single_fft_peak_pick() {
    let g = ArrayGeometry::<f64>::automotive_3x4();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = NoiseModel::new(20.0).unwrap();
    let identity = ImbalanceProfile::identity(3, 4);
    let mut recon = Reconstructor::new(CleanConfig::default()).unwrap();
    let (mut e_clean, mut e_fft) = (Vec::new(), Vec::new());
    for _ in 0..1000 {
        let t = random_scene(&mut rng);
        let s = synthesize_ideal(&t, &g);
        let x = apply_imbalance(&s, &identity, &noise, t.dominant_amplitude(), &mut rng).unwrap();
        let cl = recon.clean(&x.samples).unwrap();
        let ff = recon.fft_peak_pick(&x.samples).unwrap();
        e_clean.push(rel_err(&synthesize(&cl, 12), &s.samples));
        e_fft.push(rel_err(&synthesize(&ff, 12), &s.samples));
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let (mc, mf) = (median(&mut e_clean), median(&mut e_fft));
    assert!(mc < mf, "median CLEAN error {mc} vs FFT {mf}");
}

#[test]
fn nlms_error_follows_scalar_recurrence() {
    // exact reconstruction, no noise, constant psi: each channel's error is
    // multiplied by (1 - mu_0 |s[k]|^2 / ||s||^2) every iteration
    let k = 12;
    let mu_0 = 0.1;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let psi: Vec<Complex64> = (0..k)
        .map(|_| Complex64::from_polar(rng.random_range(0.8..1.2), rng.random_range(-0.5..0.5)))
        .collect();
    let mut est = NlmsEstimator::new(EstimatorConfig::constant(mu_0, k).unwrap()).unwrap();
    let mut oracle: Vec<Complex64> = psi.iter().map(|p| c(1.0, 0.0) - p).collect();
    for _ in 0..300 {
        let t = random_scene(&mut rng);
        let s = synthesize(&t, k);
        let energy: f64 = s.iter().map(|v| v.norm_sqr()).sum();
        let x: Vec<Complex64> = s.iter().zip(&psi).map(|(a, b)| a * b).collect();
        est.step(&measured(x), &measured(s.clone())).unwrap();
        for (e, sk) in oracle.iter_mut().zip(&s) {
            *e *= 1.0 - mu_0 * sk.norm_sqr() / energy;
        }
        for ((w, p), e) in est.state().psi_hat.iter().zip(&psi).zip(&oracle) {
            assert!(((w - p) - e).norm() < 1e-12);
        }
    }
    let final_err: f64 = oracle.iter().map(|e| e.norm_sqr()).sum::<f64>().sqrt();
    assert!(final_err < 0.2, "error {final_err} should have decayed");
}

#[test]
fn shared_scalar_step_across_channels() {
    let k = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut est = NlmsEstimator::new(EstimatorConfig::constant(0.7, k).unwrap()).unwrap();
    for _ in 0..20 {
        let s: Vec<Complex64> = (0..k).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let x: Vec<Complex64> = (0..k).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let before = est.state().psi_hat.clone();
        let mu = match est.step(&measured(x.clone()), &measured(s.clone())).unwrap() {
            StepOutcome::Updated { mu } => mu,
            StepOutcome::Skipped => panic!("non-zero input skipped"),
        };
        let energy: f64 = s.iter().map(|v| v.norm_sqr()).sum();
        assert!((mu - 0.7 / energy).abs() < 1e-15);
        for i in 0..k {
            let grad = s[i].conj() * (before[i] * s[i] - x[i]);
            let applied = (before[i] - est.state().psi_hat[i]) / grad;
            assert!((applied - c(mu, 0.0)).norm() < 1e-9 * mu.max(1.0));
        }
    }
}

#[test]
fn gpi_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let gamma: Vec<f64> = (0..50).map(|_| rng.random_range(-0.5..0.5)).collect();
    let phi: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
    let (g2, p2) = complex_to_gpi(&gpi_to_complex(&gamma, &phi));
    for i in 0..50 {
        assert!((g2[i] - gamma[i]).abs() < 1e-12);
        assert!((p2[i] - phi[i]).abs() < 1e-12);
    }
}

#[test]
fn detrend_annihilates_lines() {
    for slope in [-2.0, -0.3, 0.0, 0.01, 1.7] {
        let psi: Vec<Complex64> = (0..12)
            .map(|k| Complex64::from_polar(1.0, slope * k as f64 + 0.4))
            .collect();
        let n = normalize_and_detrend(&psi).unwrap();
        assert!(n.phi_hat.iter().all(|p| p.abs() < 1e-9), "slope {slope}");
        assert!(fit_line(&n.phi_hat).slope.abs() < 1e-12);
    }
}

#[test]
fn combined_structure_never_predistorts_with_fast_estimates() {
    let g = ArrayGeometry::<f64>::automotive_3x4();
    let profile = ImbalanceProfile::from_txrx_gpi(
        &[0.0, 0.1, -0.1],
        &[0.0, 0.08, -0.05],
        &[0.0, 0.05, -0.1, 0.1],
        &[0.0, -0.06, 0.04, 0.1],
    )
    .unwrap()
    .detrended();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let noise = NoiseModel::new(20.0).unwrap();
    let stream: Vec<SignalVector64> = (0..300)
        .map(|_| {
            let t = random_scene(&mut rng);
            apply_imbalance(&synthesize_ideal(&t, &g), &profile, &noise, t.dominant_amplitude(), &mut rng).unwrap()
        })
        .collect();
    let calib = EstimatorConfig::constant(0.1, 12).unwrap();
    let mut combined =
        CombinedStructure::new(g, calib.clone(), SbbConfig::default(), CleanConfig::default()).unwrap();
    let mut alone = Pipeline::new(calib.clone(), CleanConfig::default()).unwrap();
    for x in &stream {
        let step = combined.process(x).unwrap();
        let reference = alone.process(x).unwrap();
        assert_eq!(step.reconstruction.predistorted, reference.reconstruction.predistorted);
        assert_eq!(
            combined.calibration_estimator().state(),
            alone.estimator().state()
        );
    }
    // the fast estimator did move away from the slow one
    assert_ne!(
        combined.fast_estimator().state().psi_hat,
        combined.calibration_estimator().state().psi_hat
    );
    let (trace, report) = run_combined(stream.iter(), calib, SbbConfig::default(), CleanConfig::default(), g).unwrap();
    assert_eq!(trace.len(), 300);
    assert!(!report.detected);
}

#[test]
fn persistent_break_is_eventually_always_detected() {
    // exact reconstruction: feed the true ideal vector as s_hat
    let g = ArrayGeometry::<f64>::automotive_3x4();
    let broken = ImbalanceProfile::identity(3, 4)
        .with_rx_phase_offset(2, 30f64.to_radians())
        .unwrap();
    let mut est = NlmsEstimator::new(EstimatorConfig::constant(3.0, 12).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut above = Vec::new();
    for _ in 0..600 {
        let t = random_scene(&mut rng);
        let s = synthesize_ideal(&t, &g);
        let x = apply_imbalance(&s, &broken, &NoiseModel::disabled(), 1.0, &mut rng).unwrap();
        est.step(&x, &s).unwrap();
        let gpi = estimate_txrx_gpi(&est.state().xi_hat, &g).unwrap();
        above.push(gpi.phi_r[2].to_degrees() > 15.0);
    }
    let first_permanent = above.iter().rposition(|a| !a).map_or(0, |i| i + 1);
    assert!(first_permanent < 100, "settled only at {first_permanent}");
}

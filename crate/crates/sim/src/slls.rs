//! Sidelobe-level suppression of a calibration vector and the SNR x
//! imbalance-level heat map.

use rustfft::FftPlanner;
use radcal::{Complex64, SignalVector64, TargetSet64};
use serde::Serialize;

use crate::config::{ExperimentConfig, ImbalanceGen, SllsEval};
use crate::error::{Result, SimError};
use crate::parallel::fold_trials;
use crate::trial::{run_trial, Mode};

/// Zero-padded power spectrum, DC-centred: bin `l` sits at `-0.5 + l / n`.
pub fn power_spectrum(x: &[Complex64], fft_len: usize) -> Vec<f64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len.max(x.len())];
    buf[..x.len()].copy_from_slice(x);
    let n = buf.len();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    (0..n).map(|l| buf[(l + half) % n].norm_sqr()).collect()
}

/// Spectrum in dB relative to its maximum, with bin frequencies.
pub fn spectrum_db(x: &[Complex64], fft_len: usize) -> Vec<(f64, f64)> {
    let p = power_spectrum(x, fft_len);
    let peak = p.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(l, v)| (-0.5 + l as f64 / n, 10.0 * (v.max(f64::MIN_POSITIVE) / peak).log10()))
        .collect()
}

fn cyclic_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Highest sidelobe relative to the highest mainlobe bin, dB. Mainlobes are
/// the bins within `guard_bins / K` of a target frequency.
pub fn sidelobe_level_db(x: &[Complex64], freqs: &[f64], fft_len: usize, guard_bins: f64) -> Result<f64> {
    let p = power_spectrum(x, fft_len);
    let n = p.len() as f64;
    let guard = guard_bins / x.len() as f64;
    let (mut main, mut side) = (0.0f64, None::<f64>);
    for (l, &v) in p.iter().enumerate() {
        let f = -0.5 + l as f64 / n;
        if freqs.iter().any(|&t| cyclic_distance(f, t) <= guard) {
            main = main.max(v);
        } else {
            side = Some(side.map_or(v, |s| s.max(v)));
        }
    }
    if !(main > 0.0) {
        return Err(SimError::DegenerateSpectrum("no power inside the mainlobe guards".into()));
    }
    let side = side.ok_or_else(|| SimError::DegenerateSpectrum("guards cover the whole spectrum".into()))?;
    Ok(10.0 * (side.max(f64::MIN_POSITIVE) / main).log10())
}

/// Sidelobe level of the uncalibrated vector minus that of the vector
/// multiplied by `calibration`, with the default two-bin guard.
pub fn compute_slls(
    uncalibrated: &SignalVector64,
    calibration: &[Complex64],
    ideal: &TargetSet64,
    fft_len: usize,
) -> Result<f64> {
    compute_slls_with_guard(uncalibrated, calibration, ideal, fft_len, SllsEval::default().guard_bins)
}

pub fn compute_slls_with_guard(
    uncalibrated: &SignalVector64,
    calibration: &[Complex64],
    ideal: &TargetSet64,
    fft_len: usize,
    guard_bins: f64,
) -> Result<f64> {
    uncalibrated.expect_len(calibration.len())?;
    let calibrated: Vec<Complex64> = uncalibrated.samples.iter().zip(calibration).map(|(x, c)| x * c).collect();
    let before = sidelobe_level_db(&uncalibrated.samples, ideal.frequencies(), fft_len, guard_bins)?;
    let after = sidelobe_level_db(&calibrated, ideal.frequencies(), fft_len, guard_bins)?;
    Ok(before - after)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SllsMethod {
    Proposed,
    Ideal,
    St,
}

impl SllsMethod {
    pub fn name(&self) -> &'static str {
        match self {
            SllsMethod::Proposed => "proposed",
            SllsMethod::Ideal => "ideal",
            SllsMethod::St => "st",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatmapCell {
    pub snr_db: f64,
    pub level: u32,
    pub method: SllsMethod,
    pub mean_slls_db: f64,
    pub max_slls_db: f64,
    pub trials: usize,
}

/// For every (SNR, level) cell, runs `n_mcs` trials of the proposed and ST
/// estimators on shared streams and scores their final estimates, and the
/// exact calibration, on a noise-free single-target vector.
pub fn slls_heatmap(cfg: &ExperimentConfig, workers: usize) -> Result<Vec<HeatmapCell>> {
    let spec = cfg
        .heatmap
        .clone()
        .ok_or_else(|| SimError::Config("slls_heatmap needs a [heatmap] section".into()))?;
    let base_eval = cfg.slls_eval.clone().unwrap_or_default();
    let mut cells = Vec::new();
    for &snr_db in &spec.snr_db {
        for &level in &spec.levels {
            let mut c = cfg.clone();
            c.scenario.snr_db = snr_db;
            c.scenario.imbalance_gen = ImbalanceGen::Uniform {
                phase_deg: spec.phase_step_deg * level as f64,
                gain: spec.gain_step * level as f64,
            };
            c.slls_eval = Some(SllsEval {
                doa_deg: vec![spec.eval_doa_deg],
                ..base_eval.clone()
            });
            c.sbb_injection = None;
            c.validate()?;
            let modes = [Mode::Calibration, Mode::StBaseline];
            let mut scores: [Vec<f64>; 3] = Default::default();
            fold_trials(c.scenario.n_mcs, workers, |t| run_trial(&c, &modes, t), |_, run| {
                scores[0].push(run.traces[0].slls_db.expect("evaluated"));
                scores[1].push(run.ideal_slls_db.expect("evaluated"));
                scores[2].push(run.traces[1].slls_db.expect("evaluated"));
            })?;
            for (method, v) in [SllsMethod::Proposed, SllsMethod::Ideal, SllsMethod::St].into_iter().zip(&scores) {
                cells.push(HeatmapCell {
                    snr_db,
                    level,
                    method,
                    mean_slls_db: v.iter().sum::<f64>() / v.len().max(1) as f64,
                    max_slls_db: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                    trials: v.len(),
                });
            }
        }
    }
    Ok(cells)
}

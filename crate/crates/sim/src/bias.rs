//! Monte Carlo check of the steady-state NLMS bias against its prediction
//! from reconstruction statistics.
//!
//! At the fixed point of the update, the mean relative weight error is
//! `E[psi_hat / psi - 1] = -E[s_hat* r / |s_hat|^2] / E[|s_hat[k]|^2 / |s_hat|^2]`
//! with `r = s_hat - s`, when the measurement noise is uncorrelated with
//! `s_hat`. Since `s_hat` is fitted to the noisy vector that assumption is
//! only approximate, so the noise-inclusive prediction
//! `E[s_hat* (x / psi - s_hat) / |s_hat|^2] / E[|s_hat[k]|^2 / |s_hat|^2]`
//! is reported alongside.

use radcal::{Complex64, Pipeline64, SignalKind, SignalVector64};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Result, SimError};
use crate::parallel::fold_trials;
use crate::scene::{ImbalanceTrack, SceneGenerator};
use crate::trial::trial_rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasOptions {
    /// Iterations after this one enter the steady-state averages.
    pub converged_after: u64,
    /// Feed the true `s` as the reconstruction (so `r = 0`).
    pub exact_reconstruction: bool,
    pub workers: usize,
}

impl Default for BiasOptions {
    fn default() -> Self {
        Self {
            converged_after: 1000,
            exact_reconstruction: false,
            workers: crate::parallel::default_workers(),
        }
    }
}

/// Per-trial steady-state averages for every channel.
#[derive(Debug, Clone)]
struct TrialStats {
    /// mean of `psi_hat / psi - 1`
    e: Vec<Complex64>,
    /// mean of `s_hat* r / |s_hat|^2`
    a: Vec<Complex64>,
    /// mean of `|s_hat[k]|^2 / |s_hat|^2`
    b: Vec<f64>,
    /// mean of `s_hat* (x / psi - s_hat) / |s_hat|^2`
    c: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChannelBias {
    pub channel: usize,
    /// Measured mean relative error of the converged weights.
    pub measured: Complex64,
    pub measured_se: Complex64,
    /// Prediction from reconstruction error only.
    pub b0: Complex64,
    /// Standard error of `Im b0`.
    pub b0_im_se: f64,
    /// Standard errors of `measured - b0` (real, imaginary parts).
    pub diff_se: Complex64,
    /// Prediction including the noise correlation term.
    pub b0_full: Complex64,
    pub diff_full_se: Complex64,
}

impl ChannelBias {
    /// `(measured - b0)` in units of its standard error, per part.
    pub fn z(&self) -> (f64, f64) {
        let d = self.measured - self.b0;
        (d.re / self.diff_se.re, d.im / self.diff_se.im)
    }

    pub fn z_full(&self) -> (f64, f64) {
        let d = self.measured - self.b0_full;
        (d.re / self.diff_full_se.re, d.im / self.diff_full_se.im)
    }

    pub fn z_b0_im(&self) -> f64 {
        self.b0.im / self.b0_im_se
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub trials: usize,
    pub converged_after: u64,
    pub exact_reconstruction: bool,
    pub channels: Vec<ChannelBias>,
}

fn mean_std(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let var = v.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

fn se(v: &[Complex64]) -> Complex64 {
    let n = (v.len() as f64).sqrt();
    Complex64::new(mean_std(v.iter().map(|z| z.re)).1 / n, mean_std(v.iter().map(|z| z.im)).1 / n)
}

fn run_bias_trial(cfg: &ExperimentConfig, opts: &BiasOptions, trial: usize) -> Result<TrialStats> {
    let geom = cfg.scenario.geom;
    let k = geom.k();
    let gen = SceneGenerator::new(&cfg.scenario)?;
    let mut rng = trial_rng(cfg.scenario.seed, trial);
    let track = ImbalanceTrack::draw(&cfg.scenario.imbalance_gen, &geom, &mut rng)?;
    if !track.is_constant() {
        return Err(SimError::Config("the bias oracle needs constant imbalances".into()));
    }
    let psi = track.profile_at(1)?.psi.clone();
    let mut pipeline = Pipeline64::new(cfg.estimator.clone(), cfg.clean)?;
    let zero = Complex64::new(0.0, 0.0);
    let mut stats = TrialStats {
        e: vec![zero; k],
        a: vec![zero; k],
        b: vec![0.0; k],
        c: vec![zero; k],
    };
    let mut used = 0usize;
    for i in 1..=cfg.scenario.n_iterations {
        let profile = track.profile_at(i)?;
        let scene = gen.draw_scene(&profile, &mut rng)?;
        let s_hat = if opts.exact_reconstruction {
            SignalVector64::new(scene.ideal.samples.clone(), SignalKind::Reconstructed)
        } else {
            pipeline.reconstruct(&scene.measured)?.reconstructed
        };
        pipeline.estimator_mut().step(&scene.measured, &s_hat)?;
        if i <= opts.converged_after {
            continue;
        }
        let energy = s_hat.energy();
        if !(energy > 0.0) {
            continue;
        }
        used += 1;
        let w = &pipeline.estimator().state().psi_hat;
        for ch in 0..k {
            let sh = s_hat.samples[ch];
            let r = sh - scene.ideal.samples[ch];
            stats.e[ch] += w[ch] / psi[ch] - 1.0;
            stats.a[ch] += sh.conj() * r / energy;
            stats.b[ch] += sh.norm_sqr() / energy;
            stats.c[ch] += sh.conj() * (scene.measured.samples[ch] / psi[ch] - sh) / energy;
        }
    }
    if used == 0 {
        return Err(SimError::InsufficientData { needed: 1, got: 0 });
    }
    let n = used as f64;
    stats.e.iter_mut().chain(stats.a.iter_mut()).chain(stats.c.iter_mut()).for_each(|v| *v /= n);
    stats.b.iter_mut().for_each(|v| *v /= n);
    Ok(stats)
}

/// Runs `cfg.scenario.n_mcs` trials of the calibration pipeline and compares
/// the measured steady-state error with both bias predictions per channel.
pub fn empirical_bias_oracle(cfg: &ExperimentConfig, opts: &BiasOptions) -> Result<BiasReport> {
    cfg.validate()?;
    if opts.converged_after >= cfg.scenario.n_iterations {
        return Err(SimError::Config("converged_after must be below n_iterations".into()));
    }
    let mut all = Vec::new();
    fold_trials(cfg.scenario.n_mcs, opts.workers, |t| run_bias_trial(cfg, opts, t), |_, s| all.push(s))?;
    if all.len() < 2 {
        return Err(SimError::InsufficientData { needed: 2, got: all.len() });
    }
    let m = all.len() as f64;
    let k = cfg.scenario.geom.k();
    let channels = (0..k)
        .map(|ch| {
            let mean_c = |f: &dyn Fn(&TrialStats) -> Complex64| all.iter().map(f).sum::<Complex64>() / m;
            let e_bar = mean_c(&|s| s.e[ch]);
            let a_bar = mean_c(&|s| s.a[ch]);
            let c_bar = mean_c(&|s| s.c[ch]);
            let b_bar = all.iter().map(|s| s.b[ch]).sum::<f64>() / m;
            let b0 = -a_bar / b_bar;
            let b0_full = c_bar / b_bar;
            // first-order influence of each trial on the ratio estimators
            let infl: Vec<Complex64> = all.iter().map(|s| -(s.a[ch] + b0 * s.b[ch]) / b_bar).collect();
            let infl_full: Vec<Complex64> = all.iter().map(|s| (s.c[ch] - b0_full * s.b[ch]) / b_bar).collect();
            let diff: Vec<Complex64> = all.iter().zip(&infl).map(|(s, i)| s.e[ch] - i).collect();
            let diff_full: Vec<Complex64> = all.iter().zip(&infl_full).map(|(s, i)| s.e[ch] - i).collect();
            let e: Vec<Complex64> = all.iter().map(|s| s.e[ch]).collect();
            ChannelBias {
                channel: ch,
                measured: e_bar,
                measured_se: se(&e),
                b0,
                b0_im_se: se(&infl).im,
                diff_se: se(&diff),
                b0_full,
                diff_full_se: se(&diff_full),
            }
        })
        .collect();
    Ok(BiasReport {
        trials: all.len(),
        converged_after: opts.converged_after,
        exact_reconstruction: opts.exact_reconstruction,
        channels,
    })
}

//! Monte Carlo experiments and their aggregate metrics.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use radcal::{Complex64, SbbReport};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::parallel::{fold_trials, TrialFailure};
use crate::trial::{run_trial, GpiFrame, Mode, TrialRun};

/// Running mean and variance (Welford).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Unbiased sample variance; zero below two samples.
    pub fn var(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSide {
    Va,
    Tx,
    Rx,
}

impl ChannelSide {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelSide::Va => "va",
            ChannelSide::Tx => "tx",
            ChannelSide::Rx => "rx",
        }
    }
}

/// Estimation error statistics of one channel over trials, per iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelSeries {
    pub side: ChannelSide,
    pub channel: usize,
    pub gamma: Vec<Moments>,
    /// Degrees.
    pub phi: Vec<Moments>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub final_mae_phi_deg: f64,
    pub final_mae_gamma: f64,
    pub skips: u64,
    pub sbb: SbbReport,
    /// Broken vectors processed up to and including detection.
    pub detection_delay: Option<u64>,
    pub false_alarm: bool,
    pub slls_db: Option<f64>,
    pub ideal_slls_db: Option<f64>,
    pub final_xi_hat: Vec<Complex64>,
    pub final_psi: Vec<Complex64>,
}

/// Aggregates of one structure over the completed trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub mode: Mode,
    pub n_iterations: usize,
    pub completed: usize,
    pub channels: Vec<ChannelSeries>,
    /// Mean absolute VA phase error per iteration, degrees.
    pub mae_phi_deg: Vec<f64>,
    pub mae_gamma: Vec<f64>,
    pub recon_error: Vec<f64>,
    pub trials: Vec<TrialSummary>,
    #[serde(skip)]
    mae_acc: Vec<(Moments, Moments, Moments)>,
}

/// Phase difference wrapped to (-pi, pi].
pub fn wrap_angle(x: f64) -> f64 {
    let w = (x + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

impl Metrics {
    fn new(mode: Mode, n_iterations: usize, k_t: usize, k_r: usize) -> Self {
        let series = |side, channel| ChannelSeries {
            side,
            channel,
            gamma: vec![Moments::default(); n_iterations],
            phi: vec![Moments::default(); n_iterations],
        };
        let mut channels = Vec::new();
        channels.extend((0..k_t * k_r).map(|k| series(ChannelSide::Va, k)));
        channels.extend((0..k_t).map(|k| series(ChannelSide::Tx, k)));
        channels.extend((0..k_r).map(|k| series(ChannelSide::Rx, k)));
        Self {
            mode,
            n_iterations,
            completed: 0,
            channels,
            mae_phi_deg: Vec::new(),
            mae_gamma: Vec::new(),
            recon_error: Vec::new(),
            trials: Vec::new(),
            mae_acc: vec![Default::default(); n_iterations],
        }
    }

    fn absorb(&mut self, run: &TrialRun, index: usize, cfg: &ExperimentConfig) {
        let trace = &run.traces[index];
        let mut last = (0.0, 0.0);
        for (i, (est, truth)) in trace.estimates.iter().zip(&run.truth).enumerate() {
            let mut c = 0;
            for (e_g, t_g, e_p, t_p) in sides(est, truth) {
                for ((eg, tg), (ep, tp)) in e_g.iter().zip(t_g).zip(e_p.iter().zip(t_p)) {
                    self.channels[c].gamma[i].push(eg - tg);
                    self.channels[c].phi[i].push(wrap_angle(ep - tp).to_degrees());
                    c += 1;
                }
            }
            let k = est.va_phi.len() as f64;
            let mae_phi = est
                .va_phi
                .iter()
                .zip(&truth.va_phi)
                .map(|(e, t)| wrap_angle(e - t).abs().to_degrees())
                .sum::<f64>()
                / k;
            let mae_gamma = est.va_gamma.iter().zip(&truth.va_gamma).map(|(e, t)| (e - t).abs()).sum::<f64>() / k;
            let acc = &mut self.mae_acc[i];
            acc.0.push(mae_phi);
            acc.1.push(mae_gamma);
            acc.2.push(trace.recon_error[i]);
            last = (mae_phi, mae_gamma);
        }
        let (detection_delay, false_alarm) = match (trace.sbb.detection_iteration, cfg.sbb_injection) {
            (None, _) => (None, false),
            (Some(_), None) => (None, true),
            (Some(d), Some(inj)) if d < inj.iteration => (None, true),
            (Some(d), Some(inj)) => (Some(d - inj.iteration + 1), false),
        };
        self.trials.push(TrialSummary {
            trial: run.trial,
            final_mae_phi_deg: last.0,
            final_mae_gamma: last.1,
            skips: trace.skips,
            sbb: trace.sbb.clone(),
            detection_delay,
            false_alarm,
            slls_db: trace.slls_db,
            ideal_slls_db: run.ideal_slls_db,
            final_xi_hat: trace.final_xi_hat.clone(),
            final_psi: run.final_psi.clone(),
        });
        self.completed += 1;
    }

    fn finish(&mut self) {
        self.mae_phi_deg = self.mae_acc.iter().map(|a| a.0.mean).collect();
        self.mae_gamma = self.mae_acc.iter().map(|a| a.1.mean).collect();
        self.recon_error = self.mae_acc.iter().map(|a| a.2.mean).collect();
    }

    pub fn series(&self, side: ChannelSide, channel: usize) -> Option<&ChannelSeries> {
        self.channels.iter().find(|c| c.side == side && c.channel == channel)
    }

    /// Detection delays over trials that detected after the injection.
    pub fn detection_delays(&self) -> Vec<u64> {
        self.trials.iter().filter_map(|t| t.detection_delay).collect()
    }

    pub fn sbb_histogram(&self) -> BTreeMap<u64, usize> {
        let mut h = BTreeMap::new();
        for d in self.detection_delays() {
            *h.entry(d).or_insert(0) += 1;
        }
        h
    }

    pub fn false_alarms(&self) -> usize {
        self.trials.iter().filter(|t| t.false_alarm).count()
    }

    pub fn slls_values(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.slls_db).collect()
    }

    pub fn ideal_slls_values(&self) -> Vec<f64> {
        self.trials.iter().filter_map(|t| t.ideal_slls_db).collect()
    }
}

type SideView<'a> = (&'a [f64], &'a [f64], &'a [f64], &'a [f64]);

fn sides<'a>(e: &'a GpiFrame, t: &'a GpiFrame) -> [SideView<'a>; 3] {
    [
        (&e.va_gamma, &t.va_gamma, &e.va_phi, &t.va_phi),
        (&e.tx_gamma, &t.tx_gamma, &e.tx_phi, &t.tx_phi),
        (&e.rx_gamma, &t.rx_gamma, &e.rx_phi, &t.rx_phi),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub workers: usize,
    /// Keep every trial's per-iteration record (memory heavy).
    pub keep_traces: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: crate::parallel::default_workers(),
            keep_traces: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Experiment {
    pub metrics: Vec<Metrics>,
    pub failures: Vec<TrialFailure>,
    #[serde(skip)]
    pub traces: Option<Vec<TrialRun>>,
}

impl Experiment {
    pub fn metrics_for(&self, mode: Mode) -> Option<&Metrics> {
        self.metrics.iter().find(|m| m.mode == mode)
    }
}

/// Runs `cfg.scenario.n_mcs` trials, every structure in `modes` fed the same
/// stream per trial, and aggregates the results in trial order.
pub fn run_experiment(cfg: &ExperimentConfig, modes: &[Mode], opts: &RunOptions) -> Result<Experiment> {
    cfg.validate()?;
    let n_iter = cfg.scenario.n_iterations as usize;
    let geom = cfg.scenario.geom;
    let mut metrics: Vec<Metrics> = modes.iter().map(|&m| Metrics::new(m, n_iter, geom.k_t(), geom.k_r())).collect();
    let mut traces = opts.keep_traces.then(Vec::new);
    let failures = fold_trials(
        cfg.scenario.n_mcs,
        opts.workers,
        |t| run_trial(cfg, modes, t),
        |_, run| {
            for (i, m) in metrics.iter_mut().enumerate() {
                m.absorb(&run, i, cfg);
            }
            if let Some(t) = traces.as_mut() {
                t.push(run);
            }
        },
    )?;
    metrics.iter_mut().for_each(Metrics::finish);
    Ok(Experiment {
        metrics,
        failures,
        traces,
    })
}

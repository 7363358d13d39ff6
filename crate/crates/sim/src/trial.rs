//! One Monte Carlo trial: a scene stream fed through one or more estimator
//! structures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use radcal::imbalance::complex_to_gpi;
use radcal::reconstruction::ReconstructionResult;
use radcal::sbb::{SbbMonitor, SbbStructure};
use radcal::{
    estimate_txrx_gpi, Complex64, CombinedStructure64, ImbalanceProfile64, NlmsEstimator64, Pipeline64, SbbReport,
    SignalVector64, StepOutcome, TargetSet64,
};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::scene::{ImbalanceTrack, SceneGenerator};
use crate::slls::compute_slls_with_guard;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Scheduled step size, predistortion by its own estimate.
    Calibration,
    /// Standalone fast estimator with the SBB monitor.
    Sbb,
    /// Shared reconstruction, slow calibration plus fast SBB estimator.
    Combined,
    /// Calibration restricted to vectors where CLEAN finds one target.
    StBaseline,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Calibration => "calibration",
            Mode::Sbb => "sbb",
            Mode::Combined => "combined",
            Mode::StBaseline => "st_baseline",
        }
    }
}

/// Gain and phase (radians) per VA, Tx and Rx channel at one iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpiFrame {
    pub va_gamma: Vec<f64>,
    pub va_phi: Vec<f64>,
    pub tx_gamma: Vec<f64>,
    pub tx_phi: Vec<f64>,
    pub rx_gamma: Vec<f64>,
    pub rx_phi: Vec<f64>,
}

impl GpiFrame {
    pub fn from_profile(p: &ImbalanceProfile64) -> Self {
        let (tx_gamma, tx_phi) = complex_to_gpi(&p.xi_t);
        let (rx_gamma, rx_phi) = complex_to_gpi(&p.xi_r);
        Self {
            va_gamma: p.gamma.clone(),
            va_phi: p.phi.clone(),
            tx_gamma,
            tx_phi,
            rx_gamma,
            rx_phi,
        }
    }

    pub fn from_estimator(est: &NlmsEstimator64, geom: &radcal::ArrayGeometry64) -> Result<Self> {
        let st = est.state();
        let txrx = estimate_txrx_gpi(&st.xi_hat, geom)?;
        Ok(Self {
            va_gamma: st.gamma_hat.clone(),
            va_phi: st.phi_hat.clone(),
            tx_gamma: txrx.gamma_t,
            tx_phi: txrx.phi_t,
            rx_gamma: txrx.gamma_r,
            rx_phi: txrx.phi_r,
        })
    }
}

/// Per-iteration record of one structure within a trial.
#[derive(Debug, Clone, Serialize)]
pub struct TrialTrace {
    pub mode: Mode,
    pub estimates: Vec<GpiFrame>,
    /// `||s_hat - s|| / ||s||` per iteration.
    pub recon_error: Vec<f64>,
    pub skips: u64,
    pub sbb: SbbReport,
    pub final_xi_hat: Vec<Complex64>,
    pub slls_db: Option<f64>,
}

/// Everything one trial produced, for every structure fed the same stream.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRun {
    pub trial: usize,
    pub truth: Vec<GpiFrame>,
    pub final_psi: Vec<Complex64>,
    pub ideal_slls_db: Option<f64>,
    pub traces: Vec<TrialTrace>,
}

/// Per-trial generator: `seed` picks the key, the trial index the stream,
/// so trials are independent of scheduling.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Gated update: only vectors where CLEAN reports exactly one target teach
/// the estimator; any other vector is consumed without an update.
pub fn st_baseline_step(
    estimator: &mut NlmsEstimator64,
    x: &SignalVector64,
    reconstruction: &ReconstructionResult<f64>,
) -> Result<StepOutcome<f64>> {
    if reconstruction.estimated_targets.q() == 1 {
        Ok(estimator.step(x, &reconstruction.reconstructed)?)
    } else {
        estimator.skip();
        Ok(StepOutcome::Skipped)
    }
}

enum Driver {
    Pipeline {
        pipeline: Pipeline64,
        gated: bool,
        monitor: Option<SbbMonitor<f64>>,
    },
    Sbb(SbbStructure<f64>),
    Combined(CombinedStructure64),
}

impl Driver {
    fn new(mode: Mode, cfg: &ExperimentConfig) -> Result<Self> {
        let geom = cfg.scenario.geom;
        let monitor = || -> Result<Option<SbbMonitor<f64>>> {
            Ok(match cfg.sbb_injection {
                Some(_) => Some(SbbMonitor::new(cfg.sbb)?),
                None => None,
            })
        };
        Ok(match mode {
            Mode::Calibration | Mode::StBaseline => Driver::Pipeline {
                pipeline: Pipeline64::new(cfg.estimator.clone(), cfg.clean)?,
                gated: mode == Mode::StBaseline,
                monitor: monitor()?,
            },
            Mode::Sbb => Driver::Sbb(SbbStructure::new(geom, cfg.sbb, cfg.clean)?),
            Mode::Combined => Driver::Combined(CombinedStructure64::new(geom, cfg.estimator.clone(), cfg.sbb, cfg.clean)?),
        })
    }

    /// Processes one vector; returns the reconstruction and the recorded
    /// estimator's GPI frame.
    fn process(&mut self, x: &SignalVector64, geom: &radcal::ArrayGeometry64) -> Result<(ReconstructionResult<f64>, GpiFrame)> {
        match self {
            Driver::Pipeline {
                pipeline,
                gated,
                monitor,
            } => {
                let iteration = pipeline.estimator().state().iteration;
                let reconstruction = if *gated {
                    let r = pipeline.reconstruct(x)?;
                    st_baseline_step(pipeline.estimator_mut(), x, &r)?;
                    r
                } else {
                    pipeline.process(x)?.reconstruction
                };
                let frame = GpiFrame::from_estimator(pipeline.estimator(), geom)?;
                if let Some(m) = monitor {
                    let gpi = radcal::TxRxGpi {
                        gamma_t: frame.tx_gamma.clone(),
                        phi_t: frame.tx_phi.clone(),
                        gamma_r: frame.rx_gamma.clone(),
                        phi_r: frame.rx_phi.clone(),
                    };
                    m.observe(&gpi, iteration);
                }
                Ok((reconstruction, frame))
            }
            Driver::Sbb(s) => {
                let step = s.process(x)?;
                Ok((step.reconstruction, GpiFrame::from_estimator(s.estimator(), geom)?))
            }
            Driver::Combined(c) => {
                let step = c.process(x)?;
                Ok((step.reconstruction, GpiFrame::from_estimator(c.calibration_estimator(), geom)?))
            }
        }
    }

    fn estimator(&self) -> &NlmsEstimator64 {
        match self {
            Driver::Pipeline { pipeline, .. } => pipeline.estimator(),
            Driver::Sbb(s) => s.estimator(),
            Driver::Combined(c) => c.calibration_estimator(),
        }
    }

    /// Skips of the estimator that drives detection (the fast one when present).
    fn skips(&self) -> u64 {
        self.estimator().state().skipped
    }

    fn report(&self) -> SbbReport {
        match self {
            Driver::Pipeline { monitor, .. } => monitor.as_ref().map(|m| m.report().clone()).unwrap_or_default(),
            Driver::Sbb(s) => s.report().clone(),
            Driver::Combined(c) => c.report().clone(),
        }
    }
}

fn relative_error(s_hat: &SignalVector64, s: &SignalVector64) -> f64 {
    let num: f64 = s_hat.samples.iter().zip(&s.samples).map(|(a, b)| (a - b).norm_sqr()).sum();
    let den = s.energy();
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Runs trial `trial` of `cfg` through every structure in `modes`, all fed
/// the identical scene stream.
pub fn run_trial(cfg: &ExperimentConfig, modes: &[Mode], trial: usize) -> Result<TrialRun> {
    let geom = cfg.scenario.geom;
    let gen = SceneGenerator::new(&cfg.scenario)?;
    let mut rng = trial_rng(cfg.scenario.seed, trial);
    let track = ImbalanceTrack::draw(&cfg.scenario.imbalance_gen, &geom, &mut rng)?;
    let mut drivers = modes.iter().map(|&m| Driver::new(m, cfg)).collect::<Result<Vec<_>>>()?;

    let n = cfg.scenario.n_iterations as usize;
    let mut truth = Vec::with_capacity(n);
    let mut estimates: Vec<Vec<GpiFrame>> = modes.iter().map(|_| Vec::with_capacity(n)).collect();
    let mut recon_error: Vec<Vec<f64>> = modes.iter().map(|_| Vec::with_capacity(n)).collect();
    let mut final_profile = None;

    for i in 1..=cfg.scenario.n_iterations {
        let base = track.profile_at(i)?;
        let profile = match cfg.sbb_injection {
            Some(inj) if i >= inj.iteration => base.with_rx_phase_offset(inj.rx, inj.phase_deg.to_radians())?,
            _ => base.into_owned(),
        };
        let scene = gen.draw_scene(&profile, &mut rng)?;
        truth.push(GpiFrame::from_profile(&profile));
        for (d, driver) in drivers.iter_mut().enumerate() {
            let (rec, frame) = driver.process(&scene.measured, &geom)?;
            recon_error[d].push(relative_error(&rec.reconstructed, &scene.ideal));
            estimates[d].push(frame);
        }
        if i == cfg.scenario.n_iterations {
            final_profile = Some(profile);
        }
    }
    let final_profile = final_profile.expect("at least one iteration");

    let mut ideal_slls_db = None;
    let mut slls: Vec<Option<f64>> = vec![None; modes.len()];
    if let Some(eval) = &cfg.slls_eval {
        let mut targets = TargetSet64::empty();
        for &doa in &eval.doa_deg {
            let f = radcal::angle_to_frequency(doa, &geom)?;
            let phase = rng.random_range(-std::f64::consts::PI..=std::f64::consts::PI);
            targets.push(Complex64::from_polar(1.0, phase), radcal::array::wrap_frequency(f))?;
        }
        let ideal = radcal::synthesize_ideal(&targets, &geom);
        let uncal = SignalVector64::new(
            ideal.samples.iter().zip(&final_profile.psi).map(|(s, p)| s * p).collect(),
            radcal::SignalKind::Measured,
        );
        let exact: Vec<Complex64> = final_profile.psi.iter().map(|p| p.inv()).collect();
        ideal_slls_db = Some(compute_slls_with_guard(&uncal, &exact, &targets, eval.fft_len, eval.guard_bins)?);
        for (d, driver) in drivers.iter().enumerate() {
            let c = driver.estimator().calibration()?;
            slls[d] = Some(compute_slls_with_guard(&uncal, &c, &targets, eval.fft_len, eval.guard_bins)?);
        }
    }

    let traces = modes
        .iter()
        .zip(drivers)
        .zip(estimates.into_iter().zip(recon_error))
        .zip(slls)
        .map(|(((&mode, driver), (estimates, recon_error)), slls_db)| TrialTrace {
            mode,
            estimates,
            recon_error,
            skips: driver.skips(),
            sbb: driver.report(),
            final_xi_hat: driver.estimator().state().xi_hat.clone(),
            slls_db,
        })
        .collect();
    Ok(TrialRun {
        trial,
        truth,
        final_psi: final_profile.psi,
        ideal_slls_db,
        traces,
    })
}

//! Random scenes and ground-truth imbalance tracks.

use std::borrow::Cow;
use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use radcal::array::wrap_frequency;
use radcal::{
    angle_to_frequency, apply_imbalance, synthesize_ideal, ArrayGeometry64, Complex64, ImbalanceProfile64,
    NoiseModel64, SignalVector64, TargetSet64,
};

use crate::config::{ImbalanceGen, ScenarioConfig};
use crate::error::{Result, SimError};

/// One generated signal vector with its ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub targets: TargetSet64,
    pub ideal: SignalVector64,
    pub measured: SignalVector64,
}

/// Draws target sets and measured vectors for one scenario.
#[derive(Debug, Clone)]
pub struct SceneGenerator {
    geom: ArrayGeometry64,
    primary: WeightedIndex<f64>,
    secondary: WeightedIndex<f64>,
    primary_db: [f64; 2],
    secondary_db: [f64; 2],
    doa_deg: [f64; 2],
    noise: NoiseModel64,
}

impl SceneGenerator {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let weights = |name: &str, pmf: &[f64]| {
            WeightedIndex::new(pmf.iter().copied()).map_err(|e| SimError::Config(format!("{name}: {e}")))
        };
        let noise = if cfg.noise_enabled {
            NoiseModel64::new(cfg.snr_db)?
        } else {
            NoiseModel64::disabled()
        };
        Ok(Self {
            geom: cfg.geom,
            primary: weights("primary_count_pmf", &cfg.primary_count_pmf)?,
            secondary: weights("secondary_count_pmf", &cfg.secondary_count_pmf)?,
            primary_db: cfg.primary_amp_db_range,
            secondary_db: cfg.secondary_amp_db_range,
            doa_deg: cfg.doa_range_deg,
            noise,
        })
    }

    pub fn geometry(&self) -> &ArrayGeometry64 {
        &self.geom
    }

    pub fn noise(&self) -> &NoiseModel64 {
        &self.noise
    }

    /// Primary targets first, then secondary ones below the dominant primary.
    pub fn draw_targets<R: Rng + ?Sized>(&self, rng: &mut R) -> TargetSet64 {
        let q1 = self.primary.sample(rng) + 1;
        let q2 = self.secondary.sample(rng);
        let mut targets = TargetSet64::empty();
        let mut dominant_db = f64::NEG_INFINITY;
        for _ in 0..q1 {
            let db = uniform_closed(rng, self.primary_db);
            dominant_db = dominant_db.max(db);
            self.push_target(rng, &mut targets, db);
        }
        for _ in 0..q2 {
            let db = dominant_db + uniform_half_open(rng, self.secondary_db);
            self.push_target(rng, &mut targets, db);
        }
        targets
    }

    fn push_target<R: Rng + ?Sized>(&self, rng: &mut R, targets: &mut TargetSet64, db: f64) {
        let phase = rng.random_range(-PI..=PI);
        let theta = uniform_closed(rng, self.doa_deg);
        let f = angle_to_frequency(theta, &self.geom).expect("DoA range validated");
        targets
            .push(Complex64::from_polar(db_to_amplitude(db), phase), wrap_frequency(f))
            .expect("wrapped frequency");
    }

    /// Synthesizes `targets` and applies `profile` plus noise.
    pub fn measure<R: Rng + ?Sized>(
        &self,
        targets: TargetSet64,
        profile: &ImbalanceProfile64,
        rng: &mut R,
    ) -> Result<Scene> {
        let ideal = synthesize_ideal(&targets, &self.geom);
        let measured = apply_imbalance(&ideal, profile, &self.noise, targets.dominant_amplitude(), rng)?;
        Ok(Scene {
            targets,
            ideal,
            measured,
        })
    }

    pub fn draw_scene<R: Rng + ?Sized>(&self, profile: &ImbalanceProfile64, rng: &mut R) -> Result<Scene> {
        let targets = self.draw_targets(rng);
        self.measure(targets, profile, rng)
    }
}

pub fn db_to_amplitude(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

fn uniform_closed<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

fn uniform_half_open<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Ground-truth imbalances of one trial over its iterations. Injected phases
/// are detrended, so the truth has a unit reference and no linear phase.
#[derive(Debug, Clone)]
pub struct ImbalanceTrack {
    constant: Option<ImbalanceProfile64>,
    drift: Option<Drift>,
}

#[derive(Debug, Clone)]
struct Drift {
    gamma_t: Vec<f64>,
    gamma_r: Vec<f64>,
    phi_t_end: Vec<f64>,
    phi_r_end: Vec<f64>,
    tau: f64,
    duration: u64,
}

impl ImbalanceTrack {
    pub fn draw<R: Rng + ?Sized>(gen: &ImbalanceGen, geom: &ArrayGeometry64, rng: &mut R) -> Result<Self> {
        let (k_t, k_r) = (geom.k_t(), geom.k_r());
        let constant = |gt: &[f64], pt: &[f64], gr: &[f64], pr: &[f64]| -> Result<Self> {
            Ok(Self {
                constant: Some(ImbalanceProfile64::from_txrx_gpi(gt, pt, gr, pr)?.detrended()),
                drift: None,
            })
        };
        match gen {
            ImbalanceGen::None => Ok(Self {
                constant: Some(ImbalanceProfile64::identity(k_t, k_r)),
                drift: None,
            }),
            ImbalanceGen::Uniform { phase_deg, gain } => {
                let (gt, pt) = draw_side(rng, k_t, *phase_deg, *gain);
                let (gr, pr) = draw_side(rng, k_r, *phase_deg, *gain);
                constant(&gt, &pt, &gr, &pr)
            }
            ImbalanceGen::Explicit {
                gamma_t,
                phi_t_deg,
                gamma_r,
                phi_r_deg,
            } => {
                let rad = |v: &[f64]| v.iter().map(|d| d.to_radians()).collect::<Vec<_>>();
                constant(gamma_t, &rad(phi_t_deg), gamma_r, &rad(phi_r_deg))
            }
            ImbalanceGen::HeatUp {
                phase_deg,
                gain,
                tau,
                duration,
            } => {
                let (gamma_t, phi_t_end) = draw_side(rng, k_t, *phase_deg, *gain);
                let (gamma_r, phi_r_end) = draw_side(rng, k_r, *phase_deg, *gain);
                Ok(Self {
                    constant: None,
                    drift: Some(Drift {
                        gamma_t,
                        gamma_r,
                        phi_t_end,
                        phi_r_end,
                        tau: *tau,
                        duration: *duration,
                    }),
                })
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    /// Profile in effect at 1-based `iteration`.
    pub fn profile_at(&self, iteration: u64) -> Result<Cow<'_, ImbalanceProfile64>> {
        if let Some(p) = &self.constant {
            return Ok(Cow::Borrowed(p));
        }
        let d = self.drift.as_ref().expect("track is constant or drifting");
        let i = iteration.min(d.duration) as f64;
        let w = 1.0 - (-i / d.tau).exp();
        let scale = |v: &[f64]| v.iter().map(|p| p * w).collect::<Vec<_>>();
        let p = ImbalanceProfile64::from_txrx_gpi(&d.gamma_t, &scale(&d.phi_t_end), &d.gamma_r, &scale(&d.phi_r_end))?;
        Ok(Cow::Owned(p.detrended()))
    }
}

/// Reference channel fixed at zero, the others uniform in the given spreads.
fn draw_side<R: Rng + ?Sized>(rng: &mut R, n: usize, phase_deg: f64, gain: f64) -> (Vec<f64>, Vec<f64>) {
    let mut gamma = vec![0.0; n];
    let mut phi = vec![0.0; n];
    for i in 1..n {
        gamma[i] = uniform_closed(rng, [-gain, gain]);
        phi[i] = uniform_closed(rng, [-phase_deg, phase_deg]).to_radians();
    }
    (gamma, phi)
}

/// Draws a constant imbalance profile and one scene from `cfg`.
pub fn generate_scene<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    rng: &mut R,
) -> Result<(TargetSet64, ImbalanceProfile64, SignalVector64)> {
    let gen = SceneGenerator::new(cfg)?;
    let track = ImbalanceTrack::draw(&cfg.imbalance_gen, &cfg.geom, rng)?;
    let profile = track.profile_at(1)?.into_owned();
    let scene = gen.draw_scene(&profile, rng)?;
    Ok((scene.targets, profile, scene.measured))
}

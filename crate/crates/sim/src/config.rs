//! Experiment configuration, loaded from TOML layered over built-in defaults.

use std::path::Path;

use radcal::{ArrayGeometry64, CleanConfig64, EstimatorConfig, EstimatorConfig64, SbbConfig64, StepStage};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Result, SimError};

/// How the per-trial ground-truth imbalances are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImbalanceGen {
    /// Unit factors everywhere.
    None,
    /// Tx/Rx phases uniform in `[-phase_deg, phase_deg]` and gains uniform in
    /// `[-gain, gain]`, constant over the trial.
    Uniform { phase_deg: f64, gain: f64 },
    /// Fixed Tx/Rx GPIs; index 0 of each side must be zero.
    Explicit {
        gamma_t: Vec<f64>,
        phi_t_deg: Vec<f64>,
        gamma_r: Vec<f64>,
        phi_r_deg: Vec<f64>,
    },
    /// Phases drift as `phi_end * (1 - exp(-i / tau))` up to `duration`
    /// iterations and stay constant afterwards; gains are constant.
    HeatUp {
        phase_deg: f64,
        gain: f64,
        tau: f64,
        duration: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub geom: ArrayGeometry64,
    /// Probabilities of 1, 2, ... primary targets.
    pub primary_count_pmf: Vec<f64>,
    /// Probabilities of 0, 1, ... secondary targets.
    pub secondary_count_pmf: Vec<f64>,
    /// Absolute primary amplitudes, dB, closed interval.
    pub primary_amp_db_range: [f64; 2],
    /// Secondary amplitudes in dB relative to the dominant primary, half-open.
    pub secondary_amp_db_range: [f64; 2],
    pub doa_range_deg: [f64; 2],
    pub snr_db: f64,
    pub noise_enabled: bool,
    pub imbalance_gen: ImbalanceGen,
    pub n_iterations: u64,
    pub n_mcs: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            geom: ArrayGeometry64::automotive_3x4(),
            primary_count_pmf: vec![0.40, 0.30, 0.15, 0.10, 0.05],
            secondary_count_pmf: vec![0.25; 4],
            primary_amp_db_range: [-10.0, 0.0],
            secondary_amp_db_range: [-20.0, -10.0],
            doa_range_deg: [-90.0, 90.0],
            snr_db: 20.0,
            noise_enabled: true,
            imbalance_gen: ImbalanceGen::Uniform {
                phase_deg: 20.0,
                gain: 0.2,
            },
            n_iterations: 2000,
            n_mcs: 1000,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let g = &self.geom;
        ArrayGeometry64::new(g.k_t(), g.k_r(), g.spacing_over_lambda())?;
        check_pmf("primary_count_pmf", &self.primary_count_pmf)?;
        check_pmf("secondary_count_pmf", &self.secondary_count_pmf)?;
        check_range("primary_amp_db_range", self.primary_amp_db_range)?;
        check_range("secondary_amp_db_range", self.secondary_amp_db_range)?;
        check_range("doa_range_deg", self.doa_range_deg)?;
        if self.doa_range_deg[0] < -90.0 || self.doa_range_deg[1] > 90.0 {
            return Err(SimError::Config("doa_range_deg must lie within [-90, 90]".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(SimError::Config("snr_db must be finite".into()));
        }
        if self.n_iterations == 0 || self.n_mcs == 0 {
            return Err(SimError::Config("n_iterations and n_mcs must be positive".into()));
        }
        match &self.imbalance_gen {
            ImbalanceGen::None => {}
            ImbalanceGen::Uniform { phase_deg, gain } => check_spread(*phase_deg, *gain)?,
            ImbalanceGen::HeatUp {
                phase_deg,
                gain,
                tau,
                duration,
            } => {
                check_spread(*phase_deg, *gain)?;
                if !(*tau > 0.0) || *duration == 0 {
                    return Err(SimError::Config("heat_up needs tau > 0 and duration > 0".into()));
                }
            }
            ImbalanceGen::Explicit {
                gamma_t,
                phi_t_deg,
                gamma_r,
                phi_r_deg,
            } => {
                if gamma_t.len() != g.k_t() || phi_t_deg.len() != g.k_t() {
                    return Err(SimError::Config(format!("explicit Tx GPIs need {} entries", g.k_t())));
                }
                if gamma_r.len() != g.k_r() || phi_r_deg.len() != g.k_r() {
                    return Err(SimError::Config(format!("explicit Rx GPIs need {} entries", g.k_r())));
                }
            }
        }
        Ok(())
    }
}

fn check_pmf(name: &str, pmf: &[f64]) -> Result<()> {
    if pmf.is_empty() || pmf.iter().any(|p| !(*p >= 0.0)) {
        return Err(SimError::Config(format!("{name} must be non-empty and non-negative")));
    }
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(SimError::Config(format!("{name} sums to {total}, expected 1")));
    }
    Ok(())
}

fn check_range(name: &str, r: [f64; 2]) -> Result<()> {
    if !(r[0] <= r[1]) || !r[0].is_finite() || !r[1].is_finite() {
        return Err(SimError::Config(format!("{name} must be an ordered finite interval, got {r:?}")));
    }
    Ok(())
}

fn check_spread(phase_deg: f64, gain: f64) -> Result<()> {
    if !(phase_deg >= 0.0) || !(0.0..1.0).contains(&gain) {
        return Err(SimError::Config(format!(
            "imbalance spread needs phase_deg >= 0 and 0 <= gain < 1, got {phase_deg}, {gain}"
        )));
    }
    Ok(())
}

/// A persistent phase offset on one Rx channel from `iteration` onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbbInjection {
    pub iteration: u64,
    /// Zero-based Rx channel, at least 1.
    pub rx: usize,
    pub phase_deg: f64,
}

impl Default for SbbInjection {
    fn default() -> Self {
        Self {
            iteration: 1000,
            rx: 2,
            phase_deg: 30.0,
        }
    }
}

/// Noise-free scene used to score the final estimates by sidelobe suppression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SllsEval {
    pub doa_deg: Vec<f64>,
    /// Mainlobe half-width excluded from the sidelobe search, in bins of
    /// the K-point grid.
    pub guard_bins: f64,
    pub fft_len: usize,
}

impl Default for SllsEval {
    fn default() -> Self {
        Self {
            doa_deg: vec![-45.0, 0.0, 50.0],
            guard_bins: 2.0,
            fft_len: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatmapSpec {
    pub snr_db: Vec<f64>,
    pub levels: Vec<u32>,
    pub phase_step_deg: f64,
    pub gain_step: f64,
    pub eval_doa_deg: f64,
}

impl Default for HeatmapSpec {
    fn default() -> Self {
        Self {
            snr_db: vec![0.0, 6.0, 12.0, 18.0, 24.0, 30.0],
            levels: vec![1, 2, 3, 4, 5],
            phase_step_deg: 10.0,
            gain_step: 0.1,
            eval_doa_deg: -20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelativeSpec {
    pub phase_deg: f64,
    pub gain: f64,
    pub min_vectors: usize,
}

impl Default for RelativeSpec {
    fn default() -> Self {
        Self {
            phase_deg: 20.0,
            gain: 0.2,
            min_vectors: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorConfig64,
    #[serde(default)]
    pub sbb: SbbConfig64,
    #[serde(default)]
    pub clean: CleanConfig64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sbb_injection: Option<SbbInjection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slls_eval: Option<SllsEval>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<HeatmapSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative: Option<RelativeSpec>,
}

fn default_estimator() -> EstimatorConfig64 {
    EstimatorConfig::constant(0.1, 12).expect("valid default")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            estimator: default_estimator(),
            sbb: SbbConfig64::default(),
            clean: CleanConfig64::default(),
            sbb_injection: None,
            slls_eval: None,
            heatmap: None,
            relative: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.estimator.validate()?;
        self.sbb.validate()?;
        self.clean.validate()?;
        let k = self.scenario.geom.k();
        if self.estimator.k != k {
            return Err(SimError::Config(format!(
                "estimator.k = {} but the geometry has {k} channels",
                self.estimator.k
            )));
        }
        if let Some(inj) = &self.sbb_injection {
            if inj.rx == 0 || inj.rx >= self.scenario.geom.k_r() || inj.iteration == 0 {
                return Err(SimError::Config(format!("invalid sbb_injection {inj:?}")));
            }
        }
        if let Some(e) = &self.slls_eval {
            if e.doa_deg.is_empty() || !e.fft_len.is_power_of_two() || !(e.guard_bins > 0.0) {
                return Err(SimError::Config("slls_eval needs targets, a power-of-two fft_len and guard_bins > 0".into()));
            }
        }
        if let Some(h) = &self.heatmap {
            if h.snr_db.is_empty() || h.levels.is_empty() {
                return Err(SimError::Config("heatmap grids must be non-empty".into()));
            }
        }
        Ok(())
    }

    /// Replaces the estimator with a constant step size for the current geometry.
    pub fn with_constant_step(mut self, mu_0: f64) -> Result<Self> {
        self.estimator = EstimatorConfig::new(
            vec![StepStage {
                start_iteration: 1,
                mu_0,
            }],
            self.scenario.geom.k(),
        )?;
        Ok(self)
    }

    /// Reads a TOML file and layers it over `base`: tables merge key by key,
    /// everything else is replaced.
    pub fn load_over(base: &Self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse_over(base, &text)
    }

    pub fn parse_over(base: &Self, text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text)?;
        let mut merged = toml::Table::try_from(base)
            .map_err(|e| SimError::Config(format!("cannot serialize base config: {e}")))?;
        merge(&mut merged, user);
        let cfg: Self = toml::Value::Table(merged).try_into()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if !o.contains_key("kind") => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

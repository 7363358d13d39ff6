//! Bank of single-tap NLMS filters, one per VA channel.
//!
//! Every channel shares the scalar step `mu = mu_0 / (s_hat^H s_hat)`. After
//! each update the weights are normalized to channel 0 and the unwrapped
//! phase is detrended, removing the scale and linear-phase ambiguity the
//! reconstruction feedback loop cannot observe.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::array::SignalVector;
use crate::error::{Error, Result};
use crate::lsfit;
use crate::reconstruction::check_invertible;
use crate::scalar::Real;

const REFERENCE_FLOOR: f64 = 1e-9;

/// Normalized step `mu_0` applied from `start_iteration` (1-based) onward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStage<T> {
    pub start_iteration: u64,
    pub mu_0: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig<T> {
    pub step_schedule: Vec<StepStage<T>>,
    /// Channel count `K`.
    pub k: usize,
}

impl<T: Real> EstimatorConfig<T> {
    pub fn constant(mu_0: T, k: usize) -> Result<Self> {
        Self::new(
            vec![StepStage {
                start_iteration: 1,
                mu_0,
            }],
            k,
        )
    }

    /// Staged schedule for fast initial tracking: 1.0, 0.8, 0.4, 0.2 and
    /// finally 0.1 from iteration 1001 on.
    pub fn heat_up(k: usize) -> Result<Self> {
        let stages = [(1, 1.0), (51, 0.8), (201, 0.4), (501, 0.2), (1001, 0.1)];
        Self::new(
            stages
                .iter()
                .map(|&(start_iteration, mu)| StepStage {
                    start_iteration,
                    mu_0: T::lit(mu),
                })
                .collect(),
            k,
        )
    }

    pub fn new(step_schedule: Vec<StepStage<T>>, k: usize) -> Result<Self> {
        let cfg = Self { step_schedule, k };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every `mu_0` must lie in the mean-stability range `(0, 2K)`.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be positive".into()));
        }
        let first = self
            .step_schedule
            .first()
            .ok_or_else(|| Error::InvalidConfig("empty step schedule".into()))?;
        if first.start_iteration != 1 {
            return Err(Error::InvalidConfig(format!(
                "step schedule must start at iteration 1, got {}",
                first.start_iteration
            )));
        }
        let upper = T::from_usize_lossy(2 * self.k);
        for w in self.step_schedule.windows(2) {
            if w[1].start_iteration <= w[0].start_iteration {
                return Err(Error::InvalidConfig(
                    "step schedule start iterations must strictly increase".into(),
                ));
            }
        }
        for s in &self.step_schedule {
            if !(s.mu_0 > T::zero() && s.mu_0 < upper) {
                return Err(Error::InvalidConfig(format!(
                    "mu_0 = {} outside the stable range (0, {upper})",
                    s.mu_0
                )));
            }
        }
        Ok(())
    }
}

/// Piecewise-constant schedule lookup; iterations past the last breakpoint
/// use the final stage.
pub fn step_size_at<T: Real>(cfg: &EstimatorConfig<T>, iteration: u64) -> T {
    cfg.step_schedule
        .iter()
        .take_while(|s| s.start_iteration <= iteration.max(1))
        .last()
        .or_else(|| cfg.step_schedule.first())
        .map(|s| s.mu_0)
        .expect("non-empty schedule")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorState<T> {
    /// Raw NLMS weights.
    pub psi_hat: Vec<Complex<T>>,
    /// Index of the next signal vector, starting at 1.
    pub iteration: u64,
    pub xi_hat: Vec<Complex<T>>,
    pub gamma_hat: Vec<T>,
    pub phi_hat: Vec<T>,
    /// Vectors that produced no update.
    pub skipped: u64,
}

impl<T: Real> EstimatorState<T> {
    /// All-ones weights: no imbalance assumed.
    pub fn initial(k: usize) -> Self {
        let one = Complex::new(T::one(), T::zero());
        Self {
            psi_hat: vec![one; k],
            iteration: 1,
            xi_hat: vec![one; k],
            gamma_hat: vec![T::zero(); k],
            phi_hat: vec![T::zero(); k],
            skipped: 0,
        }
    }

    /// `c = 1 / xi_hat` element-wise.
    pub fn calibration(&self) -> Result<Vec<Complex<T>>> {
        check_invertible(&self.xi_hat)?;
        let one = Complex::new(T::one(), T::zero());
        Ok(self.xi_hat.iter().map(|x| one / x).collect())
    }

    pub fn snapshot(&self) -> StateSnapshot<T> {
        StateSnapshot {
            iteration: self.iteration,
            psi_hat: self.psi_hat.iter().map(|c| [c.re, c.im]).collect(),
            gamma_hat: self.gamma_hat.clone(),
            phi_hat: self.phi_hat.clone(),
        }
    }
}

/// Flat record of an estimator state for logging.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot<T> {
    pub iteration: u64,
    pub psi_hat: Vec<[T; 2]>,
    pub gamma_hat: Vec<T>,
    pub phi_hat: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized<T> {
    pub xi_hat: Vec<Complex<T>>,
    pub gamma_hat: Vec<T>,
    pub phi_hat: Vec<T>,
}

/// Normalizes to channel 0, unwraps and removes the least-squares phase
/// line, then re-references the residual so channel 0 keeps zero phase.
///
/// Gains come from the normalized magnitudes before detrending.
pub fn normalize_and_detrend<T: Real>(psi_hat: &[Complex<T>]) -> Result<Normalized<T>> {
    let reference = *psi_hat
        .first()
        .ok_or(Error::LengthMismatch { expected: 1, actual: 0 })?;
    let ref_mag = reference.norm();
    if !(ref_mag >= T::lit(REFERENCE_FLOOR)) || !ref_mag.is_finite() {
        return Err(Error::DegenerateReference(ref_mag.to_f64_lossy()));
    }
    let normalized: Vec<Complex<T>> = psi_hat.iter().map(|p| p / reference).collect();
    let gamma_hat: Vec<T> = normalized.iter().map(|n| n.norm() - T::one()).collect();
    let mut phase: Vec<T> = normalized.iter().map(|n| n.arg()).collect();
    lsfit::unwrap_phase(&mut phase);
    let (_, mut phi_hat) = lsfit::detrend(&phase);
    let anchor = phi_hat[0];
    for p in phi_hat.iter_mut() {
        *p = *p - anchor;
    }
    let xi_hat = gamma_hat
        .iter()
        .zip(&phi_hat)
        .map(|(&g, &p)| Complex::from_polar(T::one() + g, p))
        .collect();
    Ok(Normalized {
        xi_hat,
        gamma_hat,
        phi_hat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome<T> {
    /// Weights moved with scalar step `mu`.
    Updated { mu: T },
    /// Zero-energy reconstruction (or gated out): nothing learned.
    Skipped,
}

impl<T> StepOutcome<T> {
    pub fn is_update(&self) -> bool {
        matches!(self, StepOutcome::Updated { .. })
    }
}

/// Single-owner NLMS estimator: configuration plus evolving state.
#[derive(Debug, Clone, PartialEq)]
pub struct NlmsEstimator<T> {
    config: EstimatorConfig<T>,
    state: EstimatorState<T>,
}

impl<T: Real> NlmsEstimator<T> {
    pub fn new(config: EstimatorConfig<T>) -> Result<Self> {
        config.validate()?;
        let state = EstimatorState::initial(config.k);
        Ok(Self { config, state })
    }

    pub fn config(&self) -> &EstimatorConfig<T> {
        &self.config
    }

    pub fn state(&self) -> &EstimatorState<T> {
        &self.state
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn calibration(&self) -> Result<Vec<Complex<T>>> {
        self.state.calibration()
    }

    /// One NLMS update with the scheduled step size.
    pub fn step(&mut self, x: &SignalVector<T>, s_hat: &SignalVector<T>) -> Result<StepOutcome<T>> {
        let mu_0 = step_size_at(&self.config, self.state.iteration);
        self.step_with_mu0(mu_0, x, s_hat)
    }

    /// One NLMS update with an explicit `mu_0`, bypassing the schedule and
    /// its stability bound.
    pub fn step_with_mu0(&mut self, mu_0: T, x: &SignalVector<T>, s_hat: &SignalVector<T>) -> Result<StepOutcome<T>> {
        x.expect_len(self.config.k)?;
        s_hat.expect_len(self.config.k)?;
        let energy = s_hat.energy();
        if !(energy > T::zero()) || !energy.is_finite() {
            self.skip();
            return Ok(StepOutcome::Skipped);
        }
        let mu = mu_0 / energy;
        for ((w, s), x) in self.state.psi_hat.iter_mut().zip(&s_hat.samples).zip(&x.samples) {
            let grad = s.conj() * (*w * s - x);
            *w = *w - grad * mu;
        }
        self.state.iteration += 1;
        let n = normalize_and_detrend(&self.state.psi_hat)?;
        self.state.xi_hat = n.xi_hat;
        self.state.gamma_hat = n.gamma_hat;
        self.state.phi_hat = n.phi_hat;
        Ok(StepOutcome::Updated { mu })
    }

    /// Consumes a signal vector without updating.
    pub fn skip(&mut self) {
        self.state.iteration += 1;
        self.state.skipped += 1;
    }
}

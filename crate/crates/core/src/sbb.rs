//! Solder-ball-break (SBB) detection on Tx/Rx phase estimates.
//!
//! A break shows up as a large persistent phase step on one channel. The
//! detector compares every Tx and Rx phase estimate with a threshold and
//! latches on the first crossing. Gain estimates are ignored.

use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, SignalVector};
use crate::error::{Error, Result};
use crate::nlms::{EstimatorConfig, NlmsEstimator, StepOutcome};
use crate::pipeline::Pipeline;
use crate::reconstruction::{CleanConfig, ReconstructionResult, Reconstructor};
use crate::scalar::Real;
use crate::txrx::{estimate_txrx_gpi, TxRxGpi};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Tx,
    Rx,
}

/// Zero-based channel on one side of the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Channel {
    pub side: Side,
    pub index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbbConfig<T> {
    /// Detection threshold on |phase|, degrees.
    pub delta: T,
    /// Constant `mu_0` of the fast estimator.
    pub mu_0_fast: T,
}

impl<T: Real> Default for SbbConfig<T> {
    fn default() -> Self {
        Self {
            delta: T::lit(15.0),
            mu_0_fast: T::lit(3.0),
        }
    }
}

impl<T: Real> SbbConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > T::zero()) {
            return Err(Error::InvalidConfig(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SbbReport {
    pub detected: bool,
    /// Every channel above threshold at detection; Rx before Tx, ascending.
    pub channels: Vec<Channel>,
    pub detection_iteration: Option<u64>,
}

impl SbbReport {
    /// First-reported crossing channel.
    pub fn channel(&self) -> Option<Channel> {
        self.channels.first().copied()
    }
}

/// Strict `|phi| > delta` test on all Tx and Rx phases.
pub fn sbb_check<T: Real>(gpi: &TxRxGpi<T>, cfg: &SbbConfig<T>, iteration: u64) -> SbbReport {
    let crossed = |side: Side, phases: &[T]| -> Vec<Channel> {
        phases
            .iter()
            .enumerate()
            .filter(|(_, p)| p.to_degrees().abs() > cfg.delta)
            .map(|(index, _)| Channel { side, index })
            .collect()
    };
    let mut channels = crossed(Side::Rx, &gpi.phi_r);
    channels.extend(crossed(Side::Tx, &gpi.phi_t));
    let detected = !channels.is_empty();
    SbbReport {
        detected,
        channels,
        detection_iteration: detected.then_some(iteration),
    }
}

/// Latches the first positive [`sbb_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct SbbMonitor<T> {
    cfg: SbbConfig<T>,
    report: SbbReport,
}

impl<T: Real> SbbMonitor<T> {
    pub fn new(cfg: SbbConfig<T>) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            report: SbbReport::default(),
        })
    }

    pub fn observe(&mut self, gpi: &TxRxGpi<T>, iteration: u64) -> &SbbReport {
        if !self.report.detected {
            let r = sbb_check(gpi, &self.cfg, iteration);
            if r.detected {
                self.report = r;
            }
        }
        &self.report
    }

    pub fn report(&self) -> &SbbReport {
        &self.report
    }
}

#[derive(Debug, Clone)]
pub struct SbbStep<T> {
    pub iteration: u64,
    pub outcome: StepOutcome<T>,
    pub txrx: TxRxGpi<T>,
    pub reconstruction: ReconstructionResult<T>,
}

/// Fast estimator that predistorts with its own estimate, checked every
/// iteration.
#[derive(Debug, Clone)]
pub struct SbbStructure<T: Real> {
    geom: ArrayGeometry<T>,
    pipeline: Pipeline<T>,
    monitor: SbbMonitor<T>,
}

impl<T: Real> SbbStructure<T> {
    pub fn new(geom: ArrayGeometry<T>, sbb: SbbConfig<T>, clean: CleanConfig<T>) -> Result<Self> {
        Ok(Self {
            pipeline: Pipeline::new(EstimatorConfig::constant(sbb.mu_0_fast, geom.k())?, clean)?,
            monitor: SbbMonitor::new(sbb)?,
            geom,
        })
    }

    pub fn estimator(&self) -> &NlmsEstimator<T> {
        self.pipeline.estimator()
    }

    pub fn report(&self) -> &SbbReport {
        self.monitor.report()
    }

    pub fn process(&mut self, x: &SignalVector<T>) -> Result<SbbStep<T>> {
        let iteration = self.pipeline.estimator().state().iteration;
        let step = self.pipeline.process(x)?;
        let txrx = estimate_txrx_gpi(&self.pipeline.estimator().state().xi_hat, &self.geom)?;
        self.monitor.observe(&txrx, iteration);
        Ok(SbbStep {
            iteration,
            outcome: step.outcome,
            txrx,
            reconstruction: step.reconstruction,
        })
    }
}

#[derive(Debug, Clone)]
pub struct CombinedStep<T> {
    pub iteration: u64,
    pub calibration_outcome: StepOutcome<T>,
    pub fast_outcome: StepOutcome<T>,
    /// Tx/Rx GPIs of the slow calibration estimator.
    pub calibration_txrx: TxRxGpi<T>,
    /// Tx/Rx GPIs of the fast estimator, the ones the detector sees.
    pub fast_txrx: TxRxGpi<T>,
    pub reconstruction: ReconstructionResult<T>,
}

/// Calibration and SBB detection sharing one reconstruction block.
///
/// Only the slow calibration estimator feeds the predistortion; the fast
/// estimator consumes the shared reconstruction and never writes back.
#[derive(Debug, Clone)]
pub struct CombinedStructure<T: Real> {
    geom: ArrayGeometry<T>,
    reconstructor: Reconstructor<T>,
    calibration: NlmsEstimator<T>,
    fast: NlmsEstimator<T>,
    monitor: SbbMonitor<T>,
}

impl<T: Real> CombinedStructure<T> {
    pub fn new(
        geom: ArrayGeometry<T>,
        calibration: EstimatorConfig<T>,
        sbb: SbbConfig<T>,
        clean: CleanConfig<T>,
    ) -> Result<Self> {
        if calibration.k != geom.k() {
            return Err(Error::LengthMismatch {
                expected: geom.k(),
                actual: calibration.k,
            });
        }
        Ok(Self {
            reconstructor: Reconstructor::new(clean)?,
            calibration: NlmsEstimator::new(calibration)?,
            fast: NlmsEstimator::new(EstimatorConfig::constant(sbb.mu_0_fast, geom.k())?)?,
            monitor: SbbMonitor::new(sbb)?,
            geom,
        })
    }

    pub fn calibration_estimator(&self) -> &NlmsEstimator<T> {
        &self.calibration
    }

    pub fn fast_estimator(&self) -> &NlmsEstimator<T> {
        &self.fast
    }

    pub fn report(&self) -> &SbbReport {
        self.monitor.report()
    }

    pub fn process(&mut self, x: &SignalVector<T>) -> Result<CombinedStep<T>> {
        let iteration = self.calibration.state().iteration;
        let c = self.calibration.calibration()?;
        let reconstruction = self.reconstructor.reconstruct_calibrated(x, &c)?;
        let calibration_outcome = self.calibration.step(x, &reconstruction.reconstructed)?;
        let fast_outcome = self.fast.step(x, &reconstruction.reconstructed)?;
        let calibration_txrx = estimate_txrx_gpi(&self.calibration.state().xi_hat, &self.geom)?;
        let fast_txrx = estimate_txrx_gpi(&self.fast.state().xi_hat, &self.geom)?;
        self.monitor.observe(&fast_txrx, iteration);
        Ok(CombinedStep {
            iteration,
            calibration_outcome,
            fast_outcome,
            calibration_txrx,
            fast_txrx,
            reconstruction,
        })
    }
}

/// Runs the combined structure over a stream of measured vectors and returns
/// the calibration estimator's Tx/Rx GPI trace with the SBB report.
pub fn run_combined<T: Real, I>(
    stream: I,
    calib_cfg: EstimatorConfig<T>,
    sbb_cfg: SbbConfig<T>,
    clean_cfg: CleanConfig<T>,
    geom: ArrayGeometry<T>,
) -> Result<(Vec<TxRxGpi<T>>, SbbReport)>
where
    I: IntoIterator,
    I::Item: AsRef<SignalVector<T>>,
{
    let mut combined = CombinedStructure::new(geom, calib_cfg, sbb_cfg, clean_cfg)?;
    let mut trace = Vec::new();
    for x in stream {
        trace.push(combined.process(x.as_ref())?.calibration_txrx);
    }
    Ok((trace, combined.report().clone()))
}

impl<T> AsRef<SignalVector<T>> for SignalVector<T> {
    fn as_ref(&self) -> &SignalVector<T> {
        self
    }
}

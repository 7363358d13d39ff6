//! Reconstruction plus NLMS update: the per-vector loop of the estimator.

use crate::array::SignalVector;
use crate::error::Result;
use crate::nlms::{EstimatorConfig, NlmsEstimator, StepOutcome};
use crate::reconstruction::{CleanConfig, ReconstructionResult, Reconstructor};
use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct PipelineStep<T> {
    pub outcome: StepOutcome<T>,
    pub reconstruction: ReconstructionResult<T>,
}

/// Predistorts each measured vector with the estimator's own calibration,
/// reconstructs it and feeds the pair to the NLMS bank.
#[derive(Debug, Clone)]
pub struct Pipeline<T: Real> {
    reconstructor: Reconstructor<T>,
    estimator: NlmsEstimator<T>,
}

impl<T: Real> Pipeline<T> {
    pub fn new(estimator: EstimatorConfig<T>, clean: CleanConfig<T>) -> Result<Self> {
        Ok(Self {
            reconstructor: Reconstructor::new(clean)?,
            estimator: NlmsEstimator::new(estimator)?,
        })
    }

    pub fn estimator(&self) -> &NlmsEstimator<T> {
        &self.estimator
    }

    pub fn estimator_mut(&mut self) -> &mut NlmsEstimator<T> {
        &mut self.estimator
    }

    pub fn reconstructor_mut(&mut self) -> &mut Reconstructor<T> {
        &mut self.reconstructor
    }

    /// Reconstruction only, using the current calibration.
    pub fn reconstruct(&mut self, x: &SignalVector<T>) -> Result<ReconstructionResult<T>> {
        let calibration = self.estimator.calibration()?;
        self.reconstructor.reconstruct_calibrated(x, &calibration)
    }

    pub fn process(&mut self, x: &SignalVector<T>) -> Result<PipelineStep<T>> {
        let reconstruction = self.reconstruct(x)?;
        let outcome = self.estimator.step(x, &reconstruction.reconstructed)?;
        Ok(PipelineStep {
            outcome,
            reconstruction,
        })
    }
}

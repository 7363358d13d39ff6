//! Online estimation of automotive MIMO radar channel imbalances.
//!
//! Every measured signal vector along the virtual array (VA) is modelled as
//! `x = diag(psi) s + n`. The estimator runs a two-step loop per vector:
//!
//! 1. [`reconstruction`]: predistort `x` with the current calibration vector,
//!    extract sinusoids with CLEAN and re-synthesize the ideal vector `s_hat`.
//! 2. [`nlms`]: update a bank of single-tap NLMS filters (one per VA channel)
//!    from the pair `(s_hat, x)` using a shared normalized step, then
//!    normalize to the reference channel and detrend the phase.
//!
//! [`txrx`] splits the VA estimate into Tx and Rx factors and [`sbb`] uses
//! those phases to detect solder-ball breaks, optionally sharing one
//! reconstruction block with a slow calibration estimator.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below are what the simulator uses.

pub mod array;
pub mod error;
pub mod imbalance;
pub mod lsfit;
pub mod nlms;
pub mod pipeline;
pub mod reconstruction;
pub mod sbb;
pub mod scalar;
pub mod txrx;

pub use array::{angle_to_frequency, frequency_to_angle, synthesize, synthesize_ideal};
pub use array::{ArrayGeometry, SignalKind, SignalVector, TargetSet};
pub use error::{Error, Result};
pub use imbalance::{apply_imbalance, factor_to_va, split_linear_phase};
pub use imbalance::{ImbalanceProfile, NoiseModel};
pub use lsfit::DetrendFit;
pub use nlms::{normalize_and_detrend, step_size_at};
pub use nlms::{EstimatorConfig, EstimatorState, NlmsEstimator, StepOutcome, StepStage};
pub use pipeline::{Pipeline, PipelineStep};
pub use reconstruction::{clean_estimate, predistort, reconstruct};
pub use reconstruction::{CleanConfig, ReconstructionResult, Reconstructor};
pub use sbb::{sbb_check, run_combined, Channel, CombinedStructure, SbbConfig, SbbReport, Side};
pub use scalar::Real;
pub use txrx::{estimate_txrx_gpi, factorize_txrx, TxRxFactors, TxRxGpi};

pub use num_complex::Complex;

pub type Complex64 = Complex<f64>;
pub type Complex32 = Complex<f32>;

pub type ArrayGeometry64 = ArrayGeometry<f64>;
pub type TargetSet64 = TargetSet<f64>;
pub type SignalVector64 = SignalVector<f64>;
pub type ImbalanceProfile64 = ImbalanceProfile<f64>;
pub type NoiseModel64 = NoiseModel<f64>;
pub type CleanConfig64 = CleanConfig<f64>;
pub type Reconstructor64 = Reconstructor<f64>;
pub type EstimatorConfig64 = EstimatorConfig<f64>;
pub type NlmsEstimator64 = NlmsEstimator<f64>;
pub type Pipeline64 = Pipeline<f64>;
pub type TxRxGpi64 = TxRxGpi<f64>;
pub type SbbConfig64 = SbbConfig<f64>;
pub type CombinedStructure64 = CombinedStructure<f64>;

pub type TargetSet32 = TargetSet<f32>;
pub type SignalVector32 = SignalVector<f32>;
pub type Reconstructor32 = Reconstructor<f32>;
pub type NlmsEstimator32 = NlmsEstimator<f32>;
pub type Pipeline32 = Pipeline<f32>;

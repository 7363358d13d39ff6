//! Monte Carlo harness for the online imbalance estimators in `radcal`.

pub mod bias;
pub mod config;
pub mod doa;
pub mod error;
pub mod experiment;
pub mod output;
pub mod parallel;
pub mod plots;
pub mod replay;
pub mod scene;
pub mod slls;
pub mod trial;

pub use config::{ExperimentConfig, ImbalanceGen, ScenarioConfig};
pub use error::{Result, SimError};
pub use experiment::{run_experiment, Experiment, Metrics, RunOptions};
pub use trial::{run_trial, Mode};

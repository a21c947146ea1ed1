//! Experiment laboratory around `rtfcomb-core`: STFT filterbank, WAV IO,
//! free-field scene simulation, the end-to-end pipeline, the identity
//! battery and output writers.

pub mod beamform;
pub mod config;
pub mod error;
pub mod identities;
pub mod pipeline;
pub mod report;
pub mod scene;
pub mod stft;
pub mod wav;

pub use config::{Estimator, ExperimentConfig};
pub use error::{LabError, Result};
pub use pipeline::{process, run_experiment, ExperimentReport};

//! Experiment configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rtfcomb_core::covariance::{SmoothingFactors, SmoothingMap};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::scene::SceneConfig;
use crate::stft::StftConfig;
use crate::wav::WavFormat;

/// An RTF estimator steering the MVDR beamformer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Estimator {
    /// SC estimate from external mic `i` (zero-based; named `sc{i+1}`).
    Sc(usize),
    Gevd,
    Model,
    /// The true free-field RTF.
    Oracle,
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Estimator::Sc(i) => write!(f, "sc{}", i + 1),
            Estimator::Gevd => f.write_str("gevd"),
            Estimator::Model => f.write_str("model"),
            Estimator::Oracle => f.write_str("oracle"),
        }
    }
}

impl FromStr for Estimator {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "gevd" => Ok(Estimator::Gevd),
            "model" => Ok(Estimator::Model),
            "oracle" => Ok(Estimator::Oracle),
            _ => s
                .strip_prefix("sc")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1)
                .map(|n| Estimator::Sc(n - 1))
                .ok_or_else(|| {
                    LabError::Config(format!("unknown estimator '{s}'; expected sc1, sc2, ..., gevd, model or oracle"))
                }),
        }
    }
}

impl TryFrom<String> for Estimator {
    type Error = LabError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Estimator> for String {
    fn from(e: Estimator) -> String {
        e.to_string()
    }
}

pub fn parse_estimators(list: &str) -> Result<Vec<Estimator>> {
    list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// Track `R_x` and `R_n` from the separated components.
    #[default]
    Oracle,
    /// Track `R_n` from the mixture during speech pauses.
    Blind,
}

/// How per-bin weights are averaged over frequency for reporting.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyAveraging {
    /// Weighted by the tracked speech PSD at the reference mic.
    #[default]
    Energy,
    Linear,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mapping {
    #[default]
    Exponential,
    Linear,
}

impl From<Mapping> for SmoothingMap {
    fn from(m: Mapping) -> Self {
        match m {
            Mapping::Exponential => SmoothingMap::Exponential,
            Mapping::Linear => SmoothingMap::Linear,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    /// Time constants in seconds.
    pub tau_y: f64,
    pub tau_x: f64,
    pub tau_n: f64,
    pub mapping: Mapping,
    /// Normalize each recursion by its accumulated weight `1 - lambda^t`.
    pub startup_correction: bool,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            tau_y: 0.25,
            tau_x: 0.25,
            tau_n: 1.0,
            mapping: Mapping::Exponential,
            startup_correction: true,
        }
    }
}

impl SmoothingConfig {
    pub fn factors(&self, stft: &StftConfig) -> Result<SmoothingFactors> {
        SmoothingFactors::from_time_constants(
            self.mapping.into(),
            self.tau_y,
            self.tau_x,
            self.tau_n,
            stft.hop_duration(),
        )
        .map_err(|_| {
            LabError::Config(format!(
                "smoothing time constants ({}, {}, {}) must be positive and longer than one hop",
                self.tau_y, self.tau_x, self.tau_n
            ))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftSection {
    pub frame_length: usize,
}

impl Default for StftSection {
    fn default() -> Self {
        StftSection { frame_length: 512 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds the scene; overrides `scene.seed`.
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    pub covariance_mode: CovarianceMode,
    pub output_dir: PathBuf,
    /// Process a scene written by `simulate` instead of synthesizing one.
    pub input_dir: Option<PathBuf>,
    pub frequency_averaging: FrequencyAveraging,
    /// Every this many frames a block of bias rows is written.
    pub bias_frame_stride: usize,
    pub wav_format: WavFormat,
    pub stft: StftSection,
    pub smoothing: SmoothingConfig,
    pub scene: SceneConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            estimators: vec![Estimator::Sc(0), Estimator::Sc(1), Estimator::Gevd, Estimator::Model],
            covariance_mode: CovarianceMode::Oracle,
            output_dir: PathBuf::from("out"),
            input_dir: None,
            frequency_averaging: FrequencyAveraging::Energy,
            bias_frame_stride: 50,
            wav_format: WavFormat::Float32,
            stft: StftSection::default(),
            smoothing: SmoothingConfig::default(),
            scene: SceneConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Scene settings with the experiment seed applied.
    pub fn scene(&self) -> SceneConfig {
        SceneConfig {
            seed: self.seed,
            ..self.scene.clone()
        }
    }

    pub fn stft_config(&self) -> Result<StftConfig> {
        StftConfig::new(self.scene.sample_rate, self.stft.frame_length)
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(LabError::Config("at least one estimator is required".into()));
        }
        let me = self.scene.geometry.external.len();
        if let Some(Estimator::Sc(i)) = self.estimators.iter().find(|e| matches!(e, Estimator::Sc(i) if *i >= me)) {
            return Err(LabError::Config(format!(
                "estimator sc{} needs {} external microphones, geometry has {me}",
                i + 1,
                i + 1
            )));
        }
        if self.bias_frame_stride == 0 {
            return Err(LabError::Config("bias_frame_stride must be at least 1".into()));
        }
        let stft = self.stft_config()?;
        self.smoothing.factors(&stft)?;
        if self.input_dir.is_none() {
            self.scene().validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_names_round_trip() {
        for e in [Estimator::Sc(0), Estimator::Sc(3), Estimator::Gevd, Estimator::Model, Estimator::Oracle] {
            assert_eq!(e.to_string().parse::<Estimator>().unwrap(), e);
        }
        assert!("sc0".parse::<Estimator>().is_err());
        assert!("mvdr".parse::<Estimator>().is_err());
        assert_eq!(
            parse_estimators("sc1, SC2,gevd,model").unwrap(),
            vec![Estimator::Sc(0), Estimator::Sc(1), Estimator::Gevd, Estimator::Model]
        );
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = ExperimentConfig::from_toml(
            "seed = 7\nestimators = [\"gevd\"]\n[smoothing]\ntau_n = 2.0\n[scene]\nduration = 5.0\n[scene.trajectory]\nwaypoints = [{ time = 0.0, position = [0.0, 2.0, 0.0] }, { time = 5.0, position = [0.0, 2.0, 0.0] }]\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.smoothing.tau_n, 2.0);
        assert_eq!(cfg.smoothing.tau_y, 0.25);
        assert_eq!(cfg.scene.duration, 5.0);
        assert_eq!(cfg.scene().seed, 7);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn invalid_settings_are_reported() {
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("estimators = [\"nope\"]").is_err());
        let cfg = ExperimentConfig {
            estimators: vec![Estimator::Sc(2)],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.smoothing.tau_y = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.scene.duration = 40.0;
        assert!(cfg.validate().is_err(), "trajectory no longer spans the scene");
    }
}

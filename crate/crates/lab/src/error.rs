use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("signal has {len} samples, fewer than one frame of {frame_length}")]
    SignalTooShort { len: usize, frame_length: usize },
    #[error("spectrogram was produced with a different STFT configuration: {0}")]
    ConfigMismatch(String),
    #[error("invalid STFT configuration: {0}")]
    InvalidStft(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("source at {source_pos:?} coincides with microphone {mic}")]
    CoincidentSourceMic { mic: usize, source_pos: [f64; 3] },
    #[error("noise is silent in the reference channel")]
    SilentNoise,
    #[error("speech is silent in the reference channel")]
    SilentSpeech,
    #[error("signal length mismatch: {0}")]
    LengthMismatch(String),
    #[error("no speech-active frames")]
    NoActiveFrames,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error(transparent)]
    Numerics(#[from] rtfcomb_core::Error),
}

impl LabError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user input rather than processing.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            LabError::Config(_)
                | LabError::InvalidScene(_)
                | LabError::InvalidStft(_)
                | LabError::CoincidentSourceMic { .. }
                | LabError::Io { .. }
                | LabError::Wav { .. }
        )
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

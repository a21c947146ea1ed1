//! Multichannel WAV IO (PCM 16-bit and IEEE float 32-bit).

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WavFormat {
    Pcm16,
    #[default]
    Float32,
}

/// Channel-major samples plus sample rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Audio {
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> LabError + '_ {
    move |source| LabError::Wav {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_wav(path: &Path) -> Result<Audio> {
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let nch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        (fmt, bits) => {
            return Err(LabError::Config(format!(
                "{}: unsupported WAV format {fmt:?} {bits}-bit",
                path.display()
            )))
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / nch.max(1)); nch];
    for frame in interleaved.chunks_exact(nch) {
        for (c, &s) in channels.iter_mut().zip(frame) {
            c.push(s);
        }
    }
    Ok(Audio {
        channels,
        sample_rate: spec.sample_rate,
    })
}

/// Write channel-major samples. PCM output is clipped to [-1, 1).
pub fn write_wav(path: &Path, channels: &[Vec<f64>], sample_rate: u32, format: WavFormat) -> Result<()> {
    let len = channels.first().map_or(0, Vec::len);
    if channels.is_empty() || channels.iter().any(|c| c.len() != len) {
        return Err(LabError::LengthMismatch(format!(
            "{}: need at least one channel, all of equal length",
            path.display()
        )));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: match format {
            WavFormat::Pcm16 => 16,
            WavFormat::Float32 => 32,
        },
        sample_format: match format {
            WavFormat::Pcm16 => SampleFormat::Int,
            WavFormat::Float32 => SampleFormat::Float,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for n in 0..len {
        for c in channels {
            match format {
                WavFormat::Pcm16 => {
                    let v = (c[n] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    writer.write_sample(v)
                }
                WavFormat::Float32 => writer.write_sample(c[n] as f32),
            }
            .map_err(wav_err(path))?;
        }
    }
    writer.finalize().map_err(wav_err(path))
}

//! Applying beamformers to spectrograms and the shadow-filter SNR.

use rtfcomb_core::beamform::BeamformerWeights;

use crate::error::{LabError, Result};
use crate::stft::{Spectrogram, Stft};

/// Single-channel output `Z = w_k^H y` of fixed per-bin weights.
pub fn apply(weights: &[BeamformerWeights], spec: &Spectrogram) -> Result<Spectrogram> {
    if weights.len() != spec.bins() || weights.iter().any(|w| w.0.len() != spec.channels()) {
        return Err(LabError::Numerics(rtfcomb_core::Error::DimensionMismatch {
            expected: spec.bins() * spec.channels(),
            found: weights.iter().map(|w| w.0.len()).sum(),
        }));
    }
    let mut out = Spectrogram::zeros_like(spec, 1);
    for l in 0..spec.frames() {
        for (k, w) in weights.iter().enumerate() {
            out.bin_mut(l, k)[0] = w.output(spec.bin(l, k));
        }
    }
    Ok(out)
}

/// Samples whose nearest frame centre belongs to an active frame.
pub fn sample_activity(vad: &[bool], len: usize, frame_length: usize, hop: usize) -> Vec<bool> {
    (0..len)
        .map(|n| {
            let shifted = (n + hop / 2).saturating_sub(frame_length / 2);
            let l = (shifted / hop).min(vad.len().saturating_sub(1));
            vad.get(l).copied().unwrap_or(false)
        })
        .collect()
}

/// `10 log10(sum s^2 / sum n^2)` over active samples; `+inf` for silent noise.
pub fn active_snr_db(speech: &[f64], noise: &[f64], active: &[bool]) -> Result<f64> {
    let mut es = 0.0;
    let mut en = 0.0;
    let mut any = false;
    for ((s, n), &a) in speech.iter().zip(noise).zip(active) {
        if a {
            es += s * s;
            en += n * n;
            any = true;
        }
    }
    if !any {
        return Err(LabError::NoActiveFrames);
    }
    Ok(if en > 0.0 { 10.0 * (es / en).log10() } else { f64::INFINITY })
}

/// Broadband SNR of already-beamformed single-channel components.
pub fn output_snr_db(zx: &Spectrogram, zn: &Spectrogram, vad: &[bool], stft: &Stft) -> Result<f64> {
    let s = stft.synthesize(zx)?;
    let n = stft.synthesize(zn)?;
    let cfg = stft.config();
    let active = sample_activity(vad, s[0].len(), cfg.frame_length, cfg.hop);
    active_snr_db(&s[0], &n[0], &active)
}

/// Shadow filtering: the same weights applied to speech and noise separately,
/// both resynthesized, SNR measured over speech-active samples.
pub fn shadow_filter_broadband_snr(
    weights: &[BeamformerWeights],
    speech: &Spectrogram,
    noise: &Spectrogram,
    vad: &[bool],
    stft: &Stft,
) -> Result<f64> {
    output_snr_db(&apply(weights, speech)?, &apply(weights, noise)?, vad, stft)
}

//! Free-field scene synthesis: a moving source seen by a local array plus
//! distant external microphones, in pseudo-diffuse noise.
//!
//! Random streams: every draw comes from `ChaCha8Rng::seed_from_u64(seed)`.
//! Noise bin `k` uses stream `k`, drawing the LMA channels first and then the
//! external ones. The source signal uses stream `SOURCE_STREAM`.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rtfcomb_core::linalg::hermitian_cholesky;
use rtfcomb_core::rtf::ArrayLayout;
use rtfcomb_core::{CMatrix, CVector, C64};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::stft::{frame_energy, Stft, StftConfig};
use crate::wav::{read_wav, write_wav, WavFormat};

pub type Point = [f64; 3];

/// Half-length of the fractional-delay filter; taps run over `-(H-1)..=H`.
const FD_HALF: usize = 32;
pub const FD_TAPS: usize = 2 * FD_HALF;
/// Added to the diffuse coherence matrix before factoring.
pub const COHERENCE_LOADING: f64 = 1e-6;
const SOURCE_STREAM: u64 = u64::MAX;
/// Pole of the DC blocker shared by source and noise shaping.
const HIGHPASS_POLE: f64 = 0.98;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicGeometry {
    pub lma: Vec<Point>,
    pub external: Vec<Point>,
    /// LMA indices used as references, one per side; the first is the global one.
    #[serde(default = "default_side_references")]
    pub side_references: Vec<usize>,
}

fn default_side_references() -> Vec<usize> {
    vec![0]
}

impl MicGeometry {
    /// Two hearing aids with two mics each, ear-to-ear along x, facing +y,
    /// and two external mics to the front left and front right.
    pub fn binaural() -> Self {
        MicGeometry {
            lma: vec![
                [-0.08, 0.0035, 0.0],
                [-0.08, -0.0035, 0.0],
                [0.08, 0.0035, 0.0],
                [0.08, -0.0035, 0.0],
            ],
            external: vec![[-1.6, 1.6, 0.0], [1.6, 1.6, 0.0]],
            side_references: vec![0, 2],
        }
    }

    pub fn layout(&self) -> ArrayLayout {
        ArrayLayout::new(self.lma.len(), self.external.len())
    }

    pub fn positions(&self) -> Vec<Point> {
        self.lma.iter().chain(&self.external).copied().collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lma.is_empty() || self.external.is_empty() {
            return Err(LabError::InvalidScene(
                "need at least one LMA and one external microphone".into(),
            ));
        }
        let pos = self.positions();
        if pos.iter().flatten().any(|v| !v.is_finite()) {
            return Err(LabError::InvalidScene("microphone positions must be finite".into()));
        }
        for i in 0..pos.len() {
            for j in 0..i {
                if distance(&pos[i], &pos[j]) < 1e-9 {
                    return Err(LabError::InvalidScene(format!("microphones {j} and {i} coincide")));
                }
            }
        }
        if self.side_references.is_empty() || self.side_references.iter().any(|&r| r >= self.lma.len()) {
            return Err(LabError::InvalidScene(format!(
                "side references {:?} must be nonempty LMA indices below {}",
                self.side_references,
                self.lma.len()
            )));
        }
        Ok(())
    }

    /// Channel order that swaps LMA mic `r` into the reference slot.
    pub fn reference_order(&self, r: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.lma.len() + self.external.len()).collect();
        order.swap(0, r);
        order
    }

    pub fn reordered(&self, order: &[usize]) -> MicGeometry {
        let pos = self.positions();
        let ma = self.lma.len();
        let all: Vec<Point> = order.iter().map(|&i| pos[i]).collect();
        MicGeometry {
            lma: all[..ma].to_vec(),
            external: all[ma..].to_vec(),
            side_references: vec![0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub time: f64,
    pub position: Point,
}

/// Piecewise-linear source path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceTrajectory {
    pub waypoints: Vec<Waypoint>,
}

impl SourceTrajectory {
    pub fn fixed(position: Point, duration: f64) -> Self {
        Self::linear(position, position, duration)
    }

    pub fn linear(from: Point, to: Point, duration: f64) -> Self {
        SourceTrajectory {
            waypoints: vec![
                Waypoint { time: 0.0, position: from },
                Waypoint {
                    time: duration,
                    position: to,
                },
            ],
        }
    }

    pub fn validate(&self, duration: f64) -> Result<()> {
        let w = &self.waypoints;
        if w.is_empty() {
            return Err(LabError::InvalidScene("trajectory needs waypoints".into()));
        }
        if w.windows(2).any(|p| !(p[1].time > p[0].time)) {
            return Err(LabError::InvalidScene("waypoint times must increase strictly".into()));
        }
        if w[0].time > 0.0 || w[w.len() - 1].time < duration {
            return Err(LabError::InvalidScene(format!(
                "waypoints span [{}, {}] but must cover [0, {duration}]",
                w[0].time,
                w[w.len() - 1].time
            )));
        }
        Ok(())
    }

    pub fn position_at(&self, t: f64) -> Point {
        let w = &self.waypoints;
        let i = w.partition_point(|p| p.time <= t);
        if i == 0 {
            return w[0].position;
        }
        if i == w.len() {
            return w[w.len() - 1].position;
        }
        let (a, b) = (&w[i - 1], &w[i]);
        let u = (t - a.time) / (b.time - a.time);
        std::array::from_fn(|d| a.position[d] + u * (b.position[d] - a.position[d]))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseField {
    #[default]
    SphericallyDiffuse,
    Uncorrelated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub geometry: MicGeometry,
    pub trajectory: SourceTrajectory,
    pub duration: f64,
    pub sample_rate: f64,
    pub target_input_snr_lma_db: f64,
    pub speed_of_sound: f64,
    pub noise_field: NoiseField,
    pub seed: u64,
    /// Length of the piecewise-static trajectory segments.
    pub segment_duration: f64,
    /// Oracle VAD: a frame is active above this fraction of the peak frame energy.
    pub vad_threshold: f64,
    /// Pole of the one-pole low-pass shaping both speech and noise spectra.
    pub spectral_tilt: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        let duration = 30.0;
        SceneConfig {
            geometry: MicGeometry::binaural(),
            trajectory: SourceTrajectory::linear([-1.3, 1.9, 0.0], [1.3, 1.9, 0.0], duration),
            duration,
            sample_rate: 16_000.0,
            target_input_snr_lma_db: 0.0,
            speed_of_sound: 343.0,
            noise_field: NoiseField::SphericallyDiffuse,
            seed: 1,
            segment_duration: 0.25,
            vad_threshold: 1e-4,
            spectral_tilt: 0.9,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(LabError::InvalidScene(format!("duration {} must be positive", self.duration)));
        }
        if !(self.sample_rate > 0.0) || !(self.speed_of_sound > 0.0) {
            return Err(LabError::InvalidScene("sample rate and speed of sound must be positive".into()));
        }
        if !(self.segment_duration > 0.0) {
            return Err(LabError::InvalidScene("segment duration must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.vad_threshold) {
            return Err(LabError::InvalidScene("vad threshold must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.spectral_tilt) {
            return Err(LabError::InvalidScene("spectral tilt must lie in [0, 1)".into()));
        }
        if !self.target_input_snr_lma_db.is_finite() {
            return Err(LabError::InvalidScene("target SNR must be finite".into()));
        }
        self.geometry.validate()?;
        self.trajectory.validate(self.duration)
    }

    pub fn samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    pub fn segment_len(&self) -> usize {
        ((self.segment_duration * self.sample_rate).round() as usize).max(1)
    }
}

pub fn distance(a: &Point, b: &Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn mic_distances(geometry: &MicGeometry, source: Point) -> Result<Vec<f64>> {
    geometry
        .positions()
        .iter()
        .enumerate()
        .map(|(m, p)| {
            let d = distance(p, &source);
            if d < 1e-9 {
                Err(LabError::CoincidentSourceMic { mic: m, source_pos: source })
            } else {
                Ok(d)
            }
        })
        .collect()
}

/// Free-field RTF per bin relative to the first LMA microphone.
pub fn steering_rtf(geometry: &MicGeometry, source: Point, cfg: &StftConfig, c: f64) -> Result<Vec<CVector>> {
    let d = mic_distances(geometry, source)?;
    let d0 = d[0];
    Ok((0..cfg.bins())
        .map(|k| {
            let f = cfg.bin_frequency(k);
            let mut h: Vec<C64> = d
                .iter()
                .map(|&dm| C64::from_polar(d0 / dm, -2.0 * PI * f * (dm - d0) / c))
                .collect();
            h[0] = C64::new(1.0, 0.0);
            CVector(h)
        })
        .collect())
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Blackman-windowed sinc taps for a delay of `frac` in [0, 1) samples;
/// tap `i` multiplies the input `i - (FD_HALF - 1)` samples further back.
pub fn fractional_delay_taps(frac: f64) -> [f64; FD_TAPS] {
    let half = FD_HALF as f64;
    let mut taps = [0.0; FD_TAPS];
    for (i, t) in taps.iter_mut().enumerate() {
        let x = i as f64 - (half - 1.0) - frac;
        let win = 0.42 + 0.5 * (PI * x / half).cos() + 0.08 * (2.0 * PI * x / half).cos();
        *t = sinc(PI * x) * win;
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Weight of the later segment around a boundary, raised-cosine over `fade` samples.
fn ramp(n: usize, boundary: usize, fade: usize) -> f64 {
    let start = boundary as f64 - fade as f64 / 2.0;
    let u = (n as f64 - start + 0.5) / fade as f64;
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        0.5 - 0.5 * (PI * u).cos()
    }
}

/// Per-mic speech images and the oracle RTFs of each segment.
#[derive(Clone, Debug)]
pub struct SpeechImage {
    pub channels: Vec<Vec<f64>>,
    /// `[segment][bin]`
    pub oracle_rtf: Vec<Vec<CVector>>,
    pub segment_len: usize,
}

/// Propagates `source` along the trajectory with one-frame crossfades
/// between consecutive static segments.
pub fn synthesize_speech(cfg: &SceneConfig, source: &[f64], stft: &StftConfig) -> Result<SpeechImage> {
    cfg.geometry.validate()?;
    let len = source.len();
    let seg = cfg.segment_len();
    let fade = stft.frame_length;
    if seg < fade {
        return Err(LabError::InvalidScene(format!(
            "segments of {seg} samples are shorter than the {fade}-sample crossfade"
        )));
    }
    let segments = len.div_ceil(seg).max(1);
    let m_total = cfg.geometry.lma.len() + cfg.geometry.external.len();
    let mut channels = vec![vec![0.0; len]; m_total];
    let mut oracle_rtf = Vec::with_capacity(segments);
    for s in 0..segments {
        let lo = s * seg;
        let hi = ((s + 1) * seg).min(len);
        let t = (lo + hi) as f64 / 2.0 / cfg.sample_rate;
        let pos = cfg.trajectory.position_at(t);
        oracle_rtf.push(steering_rtf(&cfg.geometry, pos, stft, cfg.speed_of_sound)?);
        let dist = mic_distances(&cfg.geometry, pos)?;
        let support_lo = if s == 0 { 0 } else { lo.saturating_sub(fade / 2) };
        let support_hi = if s + 1 == segments { len } else { (hi + fade / 2).min(len) };
        let gains: Vec<f64> = (support_lo..support_hi)
            .map(|n| {
                let up = if s == 0 { 1.0 } else { ramp(n, lo, fade) };
                let down = if s + 1 == segments { 1.0 } else { 1.0 - ramp(n, hi, fade) };
                up * down
            })
            .collect();
        for (m, &d) in dist.iter().enumerate() {
            let delay = d / cfg.speed_of_sound * cfg.sample_rate;
            let whole = delay.floor() as isize;
            let taps = fractional_delay_taps(delay - delay.floor());
            let g = 1.0 / d;
            let out = &mut channels[m];
            for (n, &gamma) in (support_lo..support_hi).zip(&gains) {
                if gamma == 0.0 {
                    continue;
                }
                let base = n as isize - whole + (FD_HALF as isize - 1);
                let mut acc = 0.0;
                for (i, &tap) in taps.iter().enumerate() {
                    let j = base - i as isize;
                    if j >= 0 && (j as usize) < len {
                        acc += tap * source[j as usize];
                    }
                }
                out[n] += gamma * g * acc;
            }
        }
    }
    Ok(SpeechImage {
        channels,
        oracle_rtf,
        segment_len: seg,
    })
}

/// Magnitude response shared by source and noise: a one-pole low-pass tilt
/// cascaded with a DC blocker.
pub fn spectral_shape(f: f64, sample_rate: f64, tilt: f64) -> f64 {
    let z = C64::from_polar(1.0, -2.0 * PI * f / sample_rate);
    let one = C64::new(1.0, 0.0);
    ((one - z) / ((one - z * tilt) * (one - z * HIGHPASS_POLE))).norm()
}

/// Speech-shaped noise bursts separated by pauses, deterministic in `seed`.
pub fn speech_shaped_source(len: usize, sample_rate: f64, tilt: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SOURCE_STREAM);
    let mut envelope = vec![0.0; len];
    let ramp_len = (0.02 * sample_rate) as usize;
    let mut n = (0.1 * sample_rate) as usize;
    while n < len {
        let burst = (rng.random_range(0.4..1.5) * sample_rate) as usize;
        let rate = rng.random_range(3.0..6.0);
        let phase = rng.random_range(0.0..2.0 * PI);
        let level = rng.random_range(0.5..1.0);
        for i in 0..burst.min(len - n) {
            let edge = (i.min(burst - 1 - i) as f64 / ramp_len as f64).min(1.0);
            let syllable = 0.7 + 0.3 * (2.0 * PI * rate * i as f64 / sample_rate + phase).sin();
            envelope[n + i] = level * edge * syllable;
        }
        n += burst + (rng.random_range(0.15..0.5) * sample_rate) as usize;
    }
    let (mut lp, mut hp, mut prev) = (0.0, 0.0, 0.0);
    envelope
        .iter()
        .map(|&e| {
            let w: f64 = rng.sample(StandardNormal);
            hp = w - prev + HIGHPASS_POLE * hp;
            prev = w;
            lp = hp + tilt * lp;
            e * lp
        })
        .collect()
}

fn normal_pair(rng: &mut ChaCha8Rng, real: bool) -> C64 {
    let a: f64 = rng.sample(StandardNormal);
    if real {
        C64::new(a, 0.0)
    } else {
        let b: f64 = rng.sample(StandardNormal);
        C64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
    }
}

/// Target LMA coherence at frequency `f`, loaded by [`COHERENCE_LOADING`].
pub fn lma_coherence(geometry: &MicGeometry, f: f64, c: f64, field: NoiseField) -> CMatrix {
    let ma = geometry.lma.len();
    CMatrix::from_fn(ma, ma, |i, j| {
        let g = match field {
            NoiseField::SphericallyDiffuse => sinc(2.0 * PI * f * distance(&geometry.lma[i], &geometry.lma[j]) / c),
            NoiseField::Uncorrelated => f64::from(u8::from(i == j)),
        };
        C64::new(g + if i == j { COHERENCE_LOADING } else { 0.0 }, 0.0)
    })
}

/// Pseudo-diffuse noise: LMA channels mixed per bin through the Cholesky
/// factor of the target coherence, external channels independent.
pub fn synthesize_diffuse_noise(
    geometry: &MicGeometry,
    len: usize,
    sample_rate: f64,
    c: f64,
    field: NoiseField,
    tilt: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    geometry.validate()?;
    if len == 0 {
        return Err(LabError::InvalidScene("noise length must be positive".into()));
    }
    let ma = geometry.lma.len();
    let m_total = ma + geometry.external.len();
    let half = len / 2;
    let mut spectra = vec![vec![C64::new(0.0, 0.0); len]; m_total];
    let mut z = vec![C64::new(0.0, 0.0); m_total];
    for k in 0..=half {
        let f = k as f64 * sample_rate / len as f64;
        let real = k == 0 || (len % 2 == 0 && k == half);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        z.iter_mut().for_each(|v| *v = normal_pair(&mut rng, real));
        let l = hermitian_cholesky(&lma_coherence(geometry, f, c, field))?;
        let mixed = l.mul_vec(&z[..ma]);
        let g = spectral_shape(f, sample_rate, tilt);
        for m in 0..m_total {
            let v = if m < ma { mixed[m] } else { z[m] } * g;
            spectra[m][k] = v;
            if k != 0 && !(len % 2 == 0 && k == half) {
                spectra[m][len - k] = v.conj();
            }
        }
    }
    let ifft = FftPlanner::new().plan_fft_inverse(len);
    let scale = 1.0 / (len as f64).sqrt();
    Ok(spectra
        .into_iter()
        .map(|mut s| {
            ifft.process(&mut s);
            s.iter().map(|v| v.re * scale).collect()
        })
        .collect())
}

/// Noise rescaled so the reference channel reaches the target SNR.
#[derive(Clone, Debug)]
pub struct Mixture {
    pub noise: Vec<Vec<f64>>,
    pub mixture: Vec<Vec<f64>>,
    pub noise_scale: f64,
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn mix_at_snr(speech: &[Vec<f64>], noise: &[Vec<f64>], target_db: f64, reference: usize) -> Result<Mixture> {
    let len = speech.first().map_or(0, Vec::len);
    if speech.len() != noise.len() || speech.iter().chain(noise).any(|c| c.len() != len) {
        return Err(LabError::LengthMismatch("speech and noise must share channels and length".into()));
    }
    if reference >= speech.len() {
        return Err(LabError::InvalidScene(format!("reference channel {reference} out of range")));
    }
    let es = energy(&speech[reference]);
    let en = energy(&noise[reference]);
    if !(es > 0.0) {
        return Err(LabError::SilentSpeech);
    }
    if !(en > 0.0) {
        return Err(LabError::SilentNoise);
    }
    let noise_scale = (es / (en * 10f64.powf(target_db / 10.0))).sqrt();
    let noise: Vec<Vec<f64>> = noise.iter().map(|c| c.iter().map(|v| v * noise_scale).collect()).collect();
    let mixture = speech
        .iter()
        .zip(&noise)
        .map(|(s, n)| s.iter().zip(n).map(|(a, b)| a + b).collect())
        .collect();
    Ok(Mixture {
        noise,
        mixture,
        noise_scale,
    })
}

/// Per-frame activity from the windowed reference-channel speech energy.
pub fn oracle_vad(speech_reference: &[f64], stft: &Stft, threshold: f64) -> Result<Vec<bool>> {
    let spec = stft.analyze(&[speech_reference.to_vec()])?;
    let e: Vec<f64> = (0..spec.frames()).map(|l| frame_energy(&spec, l, 0)).collect();
    let peak = e.iter().copied().fold(0.0, f64::max);
    Ok(e.iter().map(|&v| peak > 0.0 && v > threshold * peak).collect())
}

#[derive(Clone, Debug)]
pub struct LabeledRecording {
    pub speech: Vec<Vec<f64>>,
    pub noise: Vec<Vec<f64>>,
    pub mixture: Vec<Vec<f64>>,
    /// `[segment][bin]`, reference entry 1.
    pub oracle_rtf: Vec<Vec<CVector>>,
    pub segment_len: usize,
    pub vad: Vec<bool>,
    pub noise_scale: f64,
}

impl LabeledRecording {
    /// Segment whose RTF governs frame `l`, judged at the frame centre.
    pub fn segment_of_frame(&self, l: usize, stft: &StftConfig) -> usize {
        let centre = l * stft.hop + stft.frame_length / 2;
        (centre / self.segment_len).min(self.oracle_rtf.len() - 1)
    }
}

/// Generates the full labelled scene for `cfg`.
pub fn simulate(cfg: &SceneConfig, stft: &StftConfig) -> Result<LabeledRecording> {
    cfg.validate()?;
    if (cfg.sample_rate - stft.sample_rate).abs() > 1e-9 {
        return Err(LabError::Config(format!(
            "scene sample rate {} differs from STFT sample rate {}",
            cfg.sample_rate, stft.sample_rate
        )));
    }
    let len = cfg.samples();
    let source = speech_shaped_source(len, cfg.sample_rate, cfg.spectral_tilt, cfg.seed);
    let image = synthesize_speech(cfg, &source, stft)?;
    let noise = synthesize_diffuse_noise(
        &cfg.geometry,
        len,
        cfg.sample_rate,
        cfg.speed_of_sound,
        cfg.noise_field,
        cfg.spectral_tilt,
        cfg.seed,
    )?;
    label(cfg, stft, image, &noise)
}

fn label(cfg: &SceneConfig, stft: &StftConfig, image: SpeechImage, noise: &[Vec<f64>]) -> Result<LabeledRecording> {
    let mix = mix_at_snr(&image.channels, noise, cfg.target_input_snr_lma_db, 0)?;
    let vad = oracle_vad(&image.channels[0], &Stft::new(*stft)?, cfg.vad_threshold)?;
    Ok(LabeledRecording {
        speech: image.channels,
        noise: mix.noise,
        mixture: mix.mixture,
        oracle_rtf: image.oracle_rtf,
        segment_len: image.segment_len,
        vad,
        noise_scale: mix.noise_scale,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SceneMetadata {
    noise_scale: f64,
    segment_len: usize,
    frame_length: usize,
    scene: SceneConfig,
}

/// Writes `speech.wav`, `noise.wav`, `mixture.wav`, `scene.toml` and
/// `oracle_rtf.csv` (segment, bin, mic, re, im) into `dir`.
pub fn write_recording(dir: &Path, cfg: &SceneConfig, stft: &StftConfig, rec: &LabeledRecording) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let fs_hz = cfg.sample_rate.round() as u32;
    write_wav(&dir.join("speech.wav"), &rec.speech, fs_hz, WavFormat::Float32)?;
    write_wav(&dir.join("noise.wav"), &rec.noise, fs_hz, WavFormat::Float32)?;
    write_wav(&dir.join("mixture.wav"), &rec.mixture, fs_hz, WavFormat::Float32)?;
    let meta = SceneMetadata {
        noise_scale: rec.noise_scale,
        segment_len: rec.segment_len,
        frame_length: stft.frame_length,
        scene: cfg.clone(),
    };
    let text = toml::to_string(&meta).map_err(|e| LabError::Config(e.to_string()))?;
    let path = dir.join("scene.toml");
    fs::write(&path, text).map_err(|e| LabError::io(&path, e))?;
    let mut csv = String::from("segment,bin,mic,re,im\n");
    for (s, bins) in rec.oracle_rtf.iter().enumerate() {
        for (k, h) in bins.iter().enumerate() {
            for (m, v) in h.iter().enumerate() {
                csv.push_str(&format!("{s},{k},{m},{},{}\n", v.re, v.im));
            }
        }
    }
    let path = dir.join("oracle_rtf.csv");
    fs::write(&path, csv).map_err(|e| LabError::io(&path, e))
}

/// Reloads a scene written by [`write_recording`]; RTFs and VAD are rebuilt
/// from the stored configuration.
pub fn read_recording(dir: &Path) -> Result<(SceneConfig, StftConfig, LabeledRecording)> {
    let path = dir.join("scene.toml");
    let text = fs::read_to_string(&path).map_err(|e| LabError::io(&path, e))?;
    let meta: SceneMetadata =
        toml::from_str(&text).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
    let stft = StftConfig::new(meta.scene.sample_rate, meta.frame_length)?;
    let speech = read_wav(&dir.join("speech.wav"))?.channels;
    let noise = read_wav(&dir.join("noise.wav"))?.channels;
    let cfg = meta.scene;
    let len = speech.first().map_or(0, Vec::len);
    let segments = len.div_ceil(meta.segment_len).max(1);
    let oracle_rtf = (0..segments)
        .map(|s| {
            let lo = s * meta.segment_len;
            let hi = ((s + 1) * meta.segment_len).min(len);
            let pos = cfg.trajectory.position_at((lo + hi) as f64 / 2.0 / cfg.sample_rate);
            steering_rtf(&cfg.geometry, pos, &stft, cfg.speed_of_sound)
        })
        .collect::<Result<_>>()?;
    let vad = oracle_vad(&speech[0], &Stft::new(stft)?, cfg.vad_threshold)?;
    let mixture = speech
        .iter()
        .zip(&noise)
        .map(|(s, n)| s.iter().zip(n).map(|(a, b)| a + b).collect())
        .collect();
    let rec = LabeledRecording {
        speech,
        noise,
        mixture,
        oracle_rtf,
        segment_len: meta.segment_len,
        vad,
        noise_scale: meta.noise_scale,
    };
    Ok((cfg, stft, rec))
}

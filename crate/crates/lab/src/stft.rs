//! Square-root-Hann STFT with 50% overlap.
//!
//! Spectra are one-sided: bins `0..=N/2` of an unnormalized forward DFT.
//! Energies computed from them double every bin except DC and Nyquist so that
//! they match the two-sided sum; see [`frame_energy`].

use std::f64::consts::PI;
use std::sync::Arc;

use rtfcomb_core::C64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    SqrtHann,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub sample_rate: f64,
    pub frame_length: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig::new(16_000.0, 512).expect("default STFT configuration")
    }
}

impl StftConfig {
    /// Half-overlapping configuration for an even frame length.
    pub fn new(sample_rate: f64, frame_length: usize) -> Result<Self> {
        let cfg = StftConfig {
            sample_rate,
            frame_length,
            hop: frame_length / 2,
            window: Window::SqrtHann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(LabError::InvalidStft(format!("sample rate {} must be positive", self.sample_rate)));
        }
        if self.frame_length < 2 || self.frame_length % 2 != 0 {
            return Err(LabError::InvalidStft(format!(
                "frame length {} must be even and at least 2",
                self.frame_length
            )));
        }
        if self.hop * 2 != self.frame_length {
            return Err(LabError::InvalidStft(format!(
                "hop {} must be half the frame length {}",
                self.hop, self.frame_length
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    pub fn hop_duration(&self) -> f64 {
        self.hop as f64 / self.sample_rate
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / self.frame_length as f64
    }

    /// Frames needed to cover `len` samples, the last one zero-padded.
    pub fn frame_count(&self, len: usize) -> usize {
        if len <= self.frame_length {
            1
        } else {
            (len - self.frame_length).div_ceil(self.hop) + 1
        }
    }

    /// Periodic square-root Hann, `sin(pi n / N)`.
    pub fn window(&self) -> Vec<f64> {
        let n = self.frame_length as f64;
        (0..self.frame_length).map(|i| (PI * i as f64 / n).sin()).collect()
    }
}

/// Multichannel STFT coefficients laid out frame-major, then bin, then channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    bins: usize,
    channels: usize,
    frame_length: usize,
    hop: usize,
    signal_len: usize,
    data: Vec<C64>,
}

impl Spectrogram {
    pub fn zeros(cfg: &StftConfig, frames: usize, channels: usize, signal_len: usize) -> Self {
        let bins = cfg.bins();
        Spectrogram {
            frames,
            bins,
            channels,
            frame_length: cfg.frame_length,
            hop: cfg.hop,
            signal_len,
            data: vec![C64::new(0.0, 0.0); frames * bins * channels],
        }
    }

    /// Zero spectrogram with the shape of `other` but `channels` channels.
    pub fn zeros_like(other: &Spectrogram, channels: usize) -> Self {
        Spectrogram {
            channels,
            data: vec![C64::new(0.0, 0.0); other.frames * other.bins * channels],
            ..*other
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Length of the time signal this spectrogram was computed from.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// All bins and channels of frame `l`, bin-major.
    pub fn frame(&self, l: usize) -> &[C64] {
        let n = self.bins * self.channels;
        &self.data[l * n..(l + 1) * n]
    }

    pub fn frame_mut(&mut self, l: usize) -> &mut [C64] {
        let n = self.bins * self.channels;
        &mut self.data[l * n..(l + 1) * n]
    }

    /// The `channels` coefficients of bin `k` in frame `l`.
    pub fn bin(&self, l: usize, k: usize) -> &[C64] {
        let start = (l * self.bins + k) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn bin_mut(&mut self, l: usize, k: usize) -> &mut [C64] {
        let start = (l * self.bins + k) * self.channels;
        &mut self.data[start..start + self.channels]
    }

    pub fn get(&self, l: usize, k: usize, ch: usize) -> C64 {
        self.data[(l * self.bins + k) * self.channels + ch]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    /// Keep the listed channels in the given order.
    pub fn select_channels(&self, order: &[usize]) -> Spectrogram {
        let mut data = Vec::with_capacity(self.frames * self.bins * order.len());
        for chunk in self.data.chunks_exact(self.channels) {
            data.extend(order.iter().map(|&c| chunk[c]));
        }
        Spectrogram {
            channels: order.len(),
            data,
            ..*self
        }
    }

    fn check(&self, cfg: &StftConfig) -> Result<()> {
        if self.frame_length != cfg.frame_length || self.hop != cfg.hop || self.bins != cfg.bins() {
            return Err(LabError::ConfigMismatch(format!(
                "spectrogram frame {} hop {}, config frame {} hop {}",
                self.frame_length, self.hop, cfg.frame_length, cfg.hop
            )));
        }
        Ok(())
    }
}

impl std::ops::Add for &Spectrogram {
    type Output = Spectrogram;

    fn add(self, rhs: &Spectrogram) -> Spectrogram {
        assert_eq!(
            (self.frames, self.bins, self.channels),
            (rhs.frames, rhs.bins, rhs.channels),
            "spectrogram shapes differ"
        );
        Spectrogram {
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
            ..*self
        }
    }
}

/// Reusable analysis/synthesis engine holding the FFT plans and window.
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Stft {
            window: cfg.window(),
            forward: planner.plan_fft_forward(cfg.frame_length),
            inverse: planner.plan_fft_inverse(cfg.frame_length),
            cfg,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    /// Channel-major signals to a spectrogram; frame `l` starts at `l * hop`.
    pub fn analyze(&self, signal: &[Vec<f64>]) -> Result<Spectrogram> {
        let n = self.cfg.frame_length;
        let len = signal.first().map_or(0, Vec::len);
        if signal.iter().any(|c| c.len() != len) {
            return Err(LabError::LengthMismatch("channels differ in length".into()));
        }
        if len < n {
            return Err(LabError::SignalTooShort { len, frame_length: n });
        }
        let frames = self.cfg.frame_count(len);
        let bins = self.cfg.bins();
        let channels = signal.len();
        let mut spec = Spectrogram::zeros(&self.cfg, frames, channels, len);
        let mut buf = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for (ch, x) in signal.iter().enumerate() {
            for l in 0..frames {
                let start = l * self.cfg.hop;
                for (i, b) in buf.iter_mut().enumerate() {
                    let s = x.get(start + i).copied().unwrap_or(0.0);
                    *b = C64::new(s * self.window[i], 0.0);
                }
                self.forward.process_with_scratch(&mut buf, &mut scratch);
                // real input: DC and Nyquist are real up to rounding
                buf[0].im = 0.0;
                buf[n / 2].im = 0.0;
                for k in 0..bins {
                    spec.data[(l * bins + k) * channels + ch] = buf[k];
                }
            }
        }
        Ok(spec)
    }

    /// Inverse DFT, synthesis window and overlap-add back to `signal_len` samples.
    pub fn synthesize(&self, spec: &Spectrogram) -> Result<Vec<Vec<f64>>> {
        spec.check(&self.cfg)?;
        let n = self.cfg.frame_length;
        let bins = spec.bins;
        let total = (spec.frames - 1) * self.cfg.hop + n;
        let mut out = vec![vec![0.0; total.max(spec.signal_len)]; spec.channels];
        let mut buf = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / n as f64;
        for (ch, y) in out.iter_mut().enumerate() {
            for l in 0..spec.frames {
                for k in 0..bins {
                    buf[k] = spec.get(l, k, ch);
                }
                buf[0].im = 0.0;
                buf[n / 2].im = 0.0;
                for k in 1..n / 2 {
                    buf[n - k] = buf[k].conj();
                }
                self.inverse.process_with_scratch(&mut buf, &mut scratch);
                let start = l * self.cfg.hop;
                for (i, b) in buf.iter().enumerate() {
                    y[start + i] += b.re * scale * self.window[i];
                }
            }
            y.truncate(spec.signal_len);
        }
        Ok(out)
    }
}

pub fn analyze(signal: &[Vec<f64>], cfg: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*cfg)?.analyze(signal)
}

pub fn synthesize(spec: &Spectrogram, cfg: &StftConfig) -> Result<Vec<Vec<f64>>> {
    Stft::new(*cfg)?.synthesize(spec)
}

/// Time-domain energy `sum |X_k|^2 / N` of one channel of one frame,
/// recovered from the one-sided spectrum by doubling the interior bins.
pub fn frame_energy(spec: &Spectrogram, l: usize, ch: usize) -> f64 {
    let last = spec.bins - 1;
    let sum: f64 = (0..spec.bins)
        .map(|k| {
            let p = spec.get(l, k, ch).norm_sqr();
            if k == 0 || k == last {
                p
            } else {
                2.0 * p
            }
        })
        .sum();
    sum / spec.frame_length as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn interior_rel_rms(a: &[f64], b: &[f64], edge: usize) -> f64 {
        let r = edge..a.len() - edge;
        let err: f64 = a[r.clone()].iter().zip(&b[r.clone()]).map(|(x, y)| (x - y).powi(2)).sum();
        let refe: f64 = a[r].iter().map(|x| x * x).sum();
        (err / refe).sqrt()
    }

    #[test]
    fn config_rules() {
        let cfg = StftConfig::default();
        assert_eq!((cfg.frame_length, cfg.hop, cfg.bins()), (512, 256, 257));
        assert!(StftConfig::new(16_000.0, 511).is_err());
        let bad = StftConfig { hop: 128, ..cfg };
        assert!(bad.validate().is_err());
        assert_eq!(cfg.frame_count(512), 1);
        assert_eq!(cfg.frame_count(513), 2);
        assert_eq!(cfg.frame_count(768), 2);
        assert_eq!(cfg.frame_count(16_000), 62);
    }

    #[test]
    fn window_squares_sum_to_one() {
        let cfg = StftConfig::default();
        let w = cfg.window();
        for i in 0..cfg.hop {
            assert!((w[i] * w[i] + w[i + cfg.hop] * w[i + cfg.hop] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn too_short() {
        let cfg = StftConfig::default();
        assert!(matches!(
            analyze(&[vec![0.0; 100]], &cfg),
            Err(LabError::SignalTooShort { len: 100, frame_length: 512 })
        ));
    }

    #[test]
    fn zeros_in_zeros_out() {
        let cfg = StftConfig::default();
        let spec = analyze(&[vec![0.0; 2000]], &cfg).unwrap();
        assert!(spec.as_slice().iter().all(|c| c.norm() == 0.0));
        let y = synthesize(&spec, &cfg).unwrap();
        assert_eq!(y[0].len(), 2000);
        assert!(y[0].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn impulse_at_start_sees_window_zero() {
        let cfg = StftConfig::default();
        let mut x = vec![0.0; 1024];
        x[0] = 1.0;
        let spec = analyze(&[x], &cfg).unwrap();
        let w0 = cfg.window()[0];
        for k in 0..cfg.bins() {
            assert!((spec.get(0, k, 0).norm() - w0).abs() < 1e-15);
        }
        // one sample later the window is nonzero and the magnitude stays flat
        let mut x = vec![0.0; 1024];
        x[5] = 1.0;
        let spec = analyze(&[x], &cfg).unwrap();
        let w5 = cfg.window()[5];
        for k in 0..cfg.bins() {
            assert!((spec.get(0, k, 0).norm() - w5).abs() < 1e-14);
        }
    }

    #[test]
    fn sinusoid_concentrates_on_its_bin() {
        let cfg = StftConfig::default();
        let k0 = 40;
        let f = cfg.bin_frequency(k0);
        let x: Vec<f64> = (0..4096).map(|n| (2.0 * PI * f * n as f64 / cfg.sample_rate).cos()).collect();
        let spec = analyze(&[x], &cfg).unwrap();
        for l in 0..spec.frames() - 1 {
            let total = frame_energy(&spec, l, 0);
            let near: f64 = (k0 - 1..=k0 + 1).map(|k| 2.0 * spec.get(l, k, 0).norm_sqr()).sum::<f64>()
                / cfg.frame_length as f64;
            let at = 2.0 * spec.get(l, k0, 0).norm_sqr() / cfg.frame_length as f64;
            // the sine window puts 8/pi^2 of the energy in the bin and 99.06% in its main lobe
            assert!(near / total > 0.99, "frame {l}: {}", near / total);
            assert!(at / total > 0.8, "frame {l}: {}", at / total);
        }
    }

    #[test]
    fn round_trip_white_noise() {
        let cfg = StftConfig::default();
        let x = vec![noise(16_000, 1), noise(16_000, 2)];
        let spec = analyze(&x, &cfg).unwrap();
        assert_eq!(spec.channels(), 2);
        let y = synthesize(&spec, &cfg).unwrap();
        for ch in 0..2 {
            assert_eq!(y[ch].len(), x[ch].len());
            assert!(interior_rel_rms(&x[ch], &y[ch], cfg.frame_length) < 1e-10);
        }
    }

    #[test]
    fn round_trip_shaped_noise_above_100_db() {
        let cfg = StftConfig::default();
        let w = noise(20_000, 3);
        let mut x = vec![0.0; w.len()];
        for n in 1..w.len() {
            x[n] = w[n] + 0.95 * x[n - 1];
        }
        let y = synthesize(&analyze(&[x.clone()], &cfg).unwrap(), &cfg).unwrap();
        let snr = -20.0 * interior_rel_rms(&x, &y[0], cfg.frame_length).log10();
        assert!(snr > 100.0, "{snr}");
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = StftConfig::default();
        let x = noise(5000, 4);
        let spec = analyze(&[x.clone()], &cfg).unwrap();
        let w = cfg.window();
        for l in 0..spec.frames() {
            let direct: f64 = (0..cfg.frame_length)
                .map(|i| (x.get(l * cfg.hop + i).copied().unwrap_or(0.0) * w[i]).powi(2))
                .sum();
            let e = frame_energy(&spec, l, 0);
            assert!((e - direct).abs() < 1e-9 * direct, "frame {l}");
        }
    }

    #[test]
    fn dc_and_nyquist_are_real() {
        let cfg = StftConfig::default();
        let spec = analyze(&[noise(3000, 5)], &cfg).unwrap();
        for l in 0..spec.frames() {
            assert_eq!(spec.get(l, 0, 0).im, 0.0);
            assert_eq!(spec.get(l, cfg.bins() - 1, 0).im, 0.0);
        }
    }

    #[test]
    fn mismatched_config_rejected() {
        let cfg = StftConfig::default();
        let spec = analyze(&[noise(3000, 6)], &cfg).unwrap();
        let other = StftConfig::new(16_000.0, 256).unwrap();
        assert!(matches!(synthesize(&spec, &other), Err(LabError::ConfigMismatch(_))));
    }

    #[test]
    fn channel_selection_reorders() {
        let cfg = StftConfig::default();
        let x = vec![noise(1000, 7), noise(1000, 8), noise(1000, 9)];
        let spec = analyze(&x, &cfg).unwrap();
        let sel = spec.select_channels(&[2, 0]);
        assert_eq!(sel.channels(), 2);
        assert_eq!(sel.get(1, 10, 0), spec.get(1, 10, 2));
        assert_eq!(sel.get(1, 10, 1), spec.get(1, 10, 0));
    }
}

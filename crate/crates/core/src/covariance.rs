//! Per-bin covariance tracking for the noisy, speech and noise components.
//!
//! `R_y` and `R_x` only adapt on speech-active frames. `R_n` adapts on every
//! frame when the separated noise component is available (oracle mode) and on
//! speech-absent frames of the noisy signal otherwise (blind mode).

use alloc::vec::Vec;

use crate::linalg::{CMatrix, C64};
use crate::math;
use crate::{Error, Result};

/// Relative diagonal loading applied to `R_n` before it is inverted.
pub const NOISE_LOADING: f64 = 1e-10;

/// How a time constant maps to a per-frame forgetting factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SmoothingMap {
    /// `exp(-T_hop / tau)`
    #[default]
    Exponential,
    /// `1 - T_hop / tau`
    Linear,
}

/// Forgetting factor `exp(-hop / time_constant)`.
pub fn smoothing_factor(time_constant: f64, hop_duration: f64) -> Result<f64> {
    smoothing_factor_with(SmoothingMap::Exponential, time_constant, hop_duration)
}

pub fn smoothing_factor_with(map: SmoothingMap, time_constant: f64, hop_duration: f64) -> Result<f64> {
    if !(time_constant > 0.0) || !(hop_duration > 0.0) {
        return Err(Error::NonpositiveInput);
    }
    let lambda = match map {
        SmoothingMap::Exponential => math::exp(-hop_duration / time_constant),
        SmoothingMap::Linear => 1.0 - hop_duration / time_constant,
    };
    if lambda > 0.0 && lambda < 1.0 {
        Ok(lambda)
    } else if lambda >= 1.0 {
        // tau = inf within floating point: no forgetting at all
        Ok(1.0 - f64::EPSILON)
    } else {
        Err(Error::NonpositiveInput)
    }
}

/// Forgetting factors for the three tracked matrices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingFactors {
    pub y: f64,
    pub x: f64,
    pub n: f64,
}

impl SmoothingFactors {
    pub fn from_time_constants(
        map: SmoothingMap,
        tau_y: f64,
        tau_x: f64,
        tau_n: f64,
        hop_duration: f64,
    ) -> Result<Self> {
        Ok(SmoothingFactors {
            y: smoothing_factor_with(map, tau_y, hop_duration)?,
            x: smoothing_factor_with(map, tau_x, hop_duration)?,
            n: smoothing_factor_with(map, tau_n, hop_duration)?,
        })
    }
}

/// Whether `R_y` is tracked on its own or always formed as `R_x + R_n`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SumMode {
    #[default]
    Independent,
    ConsistentSum,
}

/// Covariance matrices of one frequency bin.
#[derive(Clone, Debug, PartialEq)]
pub struct BinCovariance {
    pub ry: CMatrix,
    pub rx: CMatrix,
    pub rn: CMatrix,
    pub frames_y: usize,
    pub frames_x: usize,
    pub frames_n: usize,
}

impl BinCovariance {
    pub fn new(channels: usize) -> Self {
        BinCovariance {
            ry: CMatrix::zeros(channels, channels),
            rx: CMatrix::zeros(channels, channels),
            rn: CMatrix::zeros(channels, channels),
            frames_y: 0,
            frames_x: 0,
            frames_n: 0,
        }
    }

    pub fn channels(&self) -> usize {
        self.ry.rows()
    }

    /// One recursive update with the frame vectors of this bin.
    ///
    /// `components` carries the separated `(x, n)` vectors in oracle mode.
    pub fn update(
        &mut self,
        y: &[C64],
        components: Option<(&[C64], &[C64])>,
        vad: bool,
        factors: &SmoothingFactors,
        mode: SumMode,
    ) -> Result<()> {
        let m = self.channels();
        check_len(m, y.len())?;
        match components {
            Some((x, n)) => {
                check_len(m, x.len())?;
                check_len(m, n.len())?;
                smooth_outer(&mut self.rn, n, factors.n);
                self.frames_n += 1;
                if vad {
                    smooth_outer(&mut self.ry, y, factors.y);
                    smooth_outer(&mut self.rx, x, factors.x);
                    self.frames_y += 1;
                    self.frames_x += 1;
                }
            }
            None => {
                if vad {
                    smooth_outer(&mut self.ry, y, factors.y);
                    self.frames_y += 1;
                    self.rx = subtract_clamped(&self.ry, &self.rn);
                    self.frames_x += 1;
                } else {
                    smooth_outer(&mut self.rn, y, factors.n);
                    self.frames_n += 1;
                }
            }
        }
        if mode == SumMode::ConsistentSum {
            self.ry = &self.rx + &self.rn;
        }
        Ok(())
    }

    /// `R_n` with the default diagonal loading, ready for inversion.
    pub fn loaded_rn(&self) -> CMatrix {
        diagonal_loading(&self.rn, NOISE_LOADING)
    }

    /// Copy with each matrix divided by `1 - lambda^t` after `t` updates, so
    /// that it is a normalized weighted mean of the frames seen so far rather
    /// than a recursion still decaying from its zero start. Matrices that were
    /// never updated stay zero. `blind` and `mode` must match the updates.
    pub fn startup_corrected(&self, factors: &SmoothingFactors, blind: bool, mode: SumMode) -> BinCovariance {
        let ry = startup_scale(&self.ry, factors.y, self.frames_y);
        let rn = startup_scale(&self.rn, factors.n, self.frames_n);
        let rx = if blind {
            subtract_clamped(&ry, &rn)
        } else {
            startup_scale(&self.rx, factors.x, self.frames_x)
        };
        let ry = match mode {
            SumMode::Independent => ry,
            SumMode::ConsistentSum => &rx + &rn,
        };
        BinCovariance { ry, rx, rn, ..*self }
    }
}

fn startup_scale(r: &CMatrix, lambda: f64, updates: usize) -> CMatrix {
    if updates == 0 {
        return r.clone();
    }
    r.scale_real(1.0 / (1.0 - math::pow(lambda, updates as f64)))
}

/// Speech covariance by subtraction, diagonal clamped at zero.
fn subtract_clamped(ry: &CMatrix, rn: &CMatrix) -> CMatrix {
    let mut rx = ry - rn;
    for i in 0..rx.rows() {
        let d = rx[(i, i)].re.max(0.0);
        rx[(i, i)] = C64::new(d, 0.0);
    }
    rx
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `r <- lambda r + (1 - lambda) v v^H`, computed on the lower triangle and
/// mirrored so the result is exactly Hermitian with a real diagonal.
fn smooth_outer(r: &mut CMatrix, v: &[C64], lambda: f64) {
    let m = v.len();
    let g = 1.0 - lambda;
    for i in 0..m {
        let d = lambda * r[(i, i)].re + g * v[i].norm_sqr();
        r[(i, i)] = C64::new(d, 0.0);
        for j in 0..i {
            let val = r[(i, j)] * lambda + v[i] * v[j].conj() * g;
            r[(i, j)] = val;
            r[(j, i)] = val.conj();
        }
    }
}

/// Adds `factor * trace(M) / dim` to the diagonal.
pub fn diagonal_loading(m: &CMatrix, factor: f64) -> CMatrix {
    let n = m.rows();
    if n == 0 {
        return m.clone();
    }
    let load = factor * m.trace().re / n as f64;
    let mut out = m.clone();
    for i in 0..n {
        out[(i, i)] += C64::new(load, 0.0);
    }
    out
}

/// Recursive covariance state for a whole spectrum.
#[derive(Clone, Debug)]
pub struct CovarianceState {
    bins: Vec<BinCovariance>,
    channels: usize,
    pub factors: SmoothingFactors,
    pub mode: SumMode,
}

impl CovarianceState {
    pub fn new(bins: usize, channels: usize, factors: SmoothingFactors, mode: SumMode) -> Self {
        CovarianceState {
            bins: (0..bins).map(|_| BinCovariance::new(channels)).collect(),
            channels,
            factors,
            mode,
        }
    }

    pub fn bins(&self) -> &[BinCovariance] {
        &self.bins
    }

    pub fn bin(&self, k: usize) -> &BinCovariance {
        &self.bins[k]
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Updates every bin with one frame laid out bin-major (`bin * M + mic`).
    pub fn update(
        &mut self,
        y: &[C64],
        components: Option<(&[C64], &[C64])>,
        vad: bool,
    ) -> Result<()> {
        let m = self.channels;
        let expected = self.bins.len() * m;
        check_len(expected, y.len())?;
        if let Some((x, n)) = components {
            check_len(expected, x.len())?;
            check_len(expected, n.len())?;
        }
        for (k, bin) in self.bins.iter_mut().enumerate() {
            let r = k * m..(k + 1) * m;
            let comps = components.map(|(x, n)| (&x[r.clone()], &n[r.clone()]));
            bin.update(&y[r], comps, vad, &self.factors, self.mode)?;
        }
        Ok(())
    }
}

/// Batch covariance estimates of one bin.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleCovariance {
    pub rx: CMatrix,
    pub rn: CMatrix,
    pub ry: CMatrix,
}

/// Sample averages over separated components.
///
/// `x` and `n` are frame-major, bin-major (`(frame * bins + bin) * M + mic`).
/// `R_x` averages speech-active frames only, `R_n` all frames, and
/// `R_y = R_x + R_n`.
pub fn oracle_covariances(
    x: &[C64],
    n: &[C64],
    vad: &[bool],
    bins: usize,
    channels: usize,
) -> Result<Vec<OracleCovariance>> {
    let frame_len = bins * channels;
    let frames = vad.len();
    check_len(frames * frame_len, x.len())?;
    check_len(frames * frame_len, n.len())?;
    let active = vad.iter().filter(|&&v| v).count();
    if active == 0 {
        return Err(Error::NoActiveFrames);
    }
    let mut out = Vec::with_capacity(bins);
    for k in 0..bins {
        let mut rx = CMatrix::zeros(channels, channels);
        let mut rn = CMatrix::zeros(channels, channels);
        for (l, &speech) in vad.iter().enumerate() {
            let r = (l * bins + k) * channels..(l * bins + k + 1) * channels;
            accumulate_outer(&mut rn, &n[r.clone()]);
            if speech {
                accumulate_outer(&mut rx, &x[r]);
            }
        }
        let rx = rx.scale_real(1.0 / active as f64);
        let rn = rn.scale_real(1.0 / frames as f64);
        let ry = &rx + &rn;
        out.push(OracleCovariance { rx, rn, ry });
    }
    Ok(out)
}

fn accumulate_outer(r: &mut CMatrix, v: &[C64]) {
    let m = v.len();
    for i in 0..m {
        r[(i, i)] += C64::new(v[i].norm_sqr(), 0.0);
        for j in 0..i {
            let val = v[i] * v[j].conj();
            r[(i, j)] += val;
            r[(j, i)] += val.conj();
        }
    }
}

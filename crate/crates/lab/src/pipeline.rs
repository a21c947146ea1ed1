//! The full experiment: STFT, per-bin covariance tracking, RTF estimation,
//! MVDR beamforming and shadow-filter metrics, once per side reference.

use rtfcomb_core::beamform::{mvdr_weights, BeamformerWeights};
use rtfcomb_core::covariance::{BinCovariance, SmoothingFactors, SumMode};
use rtfcomb_core::rtf::{
    bias_report, combine, gevd_weights, input_snrs, model_weights, predicted_bias_factors, EstimateMatrix,
    WeightFallback,
};
use rtfcomb_core::{CVector, C64};

use crate::beamform::{active_snr_db, sample_activity};
use crate::config::{CovarianceMode, Estimator, ExperimentConfig, FrequencyAveraging};
use crate::error::{LabError, Result};
use crate::scene::{read_recording, simulate, LabeledRecording, MicGeometry};
use crate::stft::{Spectrogram, Stft, StftConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessOptions {
    pub estimators: Vec<Estimator>,
    pub factors: SmoothingFactors,
    pub mode: CovarianceMode,
    pub averaging: FrequencyAveraging,
    pub bias_frame_stride: usize,
    pub startup_correction: bool,
}

impl ProcessOptions {
    pub fn from_config(cfg: &ExperimentConfig, stft: &StftConfig) -> Result<Self> {
        Ok(ProcessOptions {
            estimators: cfg.estimators.clone(),
            factors: cfg.smoothing.factors(stft)?,
            mode: cfg.covariance_mode,
            averaging: cfg.frequency_averaging,
            bias_frame_stride: cfg.bias_frame_stride,
            startup_correction: cfg.smoothing.startup_correction,
        })
    }
}

/// Frequency-averaged weights and input SNRs of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameWeights {
    pub frame: usize,
    /// Frame centre in seconds.
    pub time: f64,
    /// Per external mic, in dB.
    pub snr_db: Vec<f64>,
    /// `[estimator][external mic]`; zero for estimators without weights.
    pub alpha: Vec<Vec<C64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasRow {
    pub estimator: Estimator,
    pub frame: usize,
    pub bin: usize,
    /// External mic index.
    pub mic: usize,
    pub alpha: C64,
    pub predicted_factor: f64,
    pub measured_ratio: C64,
}

/// Segmental SNRs over one hop of a speech-active frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSnr {
    pub frame: usize,
    pub time: f64,
    pub input_db: f64,
    pub output_db: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SideResult {
    /// LMA mic used as reference.
    pub reference: usize,
    pub input_snr_db: f64,
    pub output_snr_db: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Diagnostics {
    /// Bin-frames steered by the reference passthrough, per estimator.
    pub passthrough: Vec<usize>,
    pub gevd_normalizer_fallbacks: usize,
    pub gevd_singular_fallbacks: usize,
    pub gevd_degenerate: usize,
    pub model_zero_snr_fallbacks: usize,
    pub near_zero_sc_normalizer: usize,
}

#[derive(Clone, Debug)]
pub struct ExperimentReport {
    pub estimators: Vec<Estimator>,
    pub sides: Vec<SideResult>,
    /// Mean over sides.
    pub input_snr_db: f64,
    /// Per estimator, output minus input SNR averaged over sides.
    pub delta_snr_db: Vec<f64>,
    /// Reported for the first side reference only.
    pub weights: Vec<FrameWeights>,
    pub frame_snr: Vec<FrameSnr>,
    pub bias: Vec<BiasRow>,
    pub diagnostics: Diagnostics,
    /// Beamformed mixture per estimator, first side reference.
    pub enhanced: Vec<Vec<f64>>,
}

impl ExperimentReport {
    pub fn delta(&self, e: Estimator) -> Option<f64> {
        self.estimators.iter().position(|&x| x == e).map(|i| self.delta_snr_db[i])
    }

    /// Summary of the model and GEVD weight trajectories of external mic 0.
    pub fn weight_summary(&self) -> Option<WeightSummary> {
        let g = self.estimators.iter().position(|&e| e == Estimator::Gevd)?;
        let m = self.estimators.iter().position(|&e| e == Estimator::Model)?;
        WeightSummary::from_frames(&self.weights, g, m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightSummary {
    /// Mean of `Re alpha_1` (model) over the first tenth of the frames.
    pub model_start: f64,
    /// Same over the last tenth.
    pub model_end: f64,
    /// Mean over frames and external mics of `|Re alpha_gevd - Re alpha_model|`.
    pub gevd_model_mad: f64,
    pub frames: usize,
}

impl WeightSummary {
    pub fn from_frames(frames: &[FrameWeights], gevd: usize, model: usize) -> Option<Self> {
        let n = frames.len();
        if n == 0 {
            return None;
        }
        let edge = (n / 10).max(1);
        let mean_a1 = |fs: &[FrameWeights]| fs.iter().map(|f| f.alpha[model][0].re).sum::<f64>() / fs.len() as f64;
        let me = frames[0].alpha[model].len();
        let mad = frames
            .iter()
            .map(|f| {
                (0..me).map(|i| (f.alpha[gevd][i].re - f.alpha[model][i].re).abs()).sum::<f64>() / me as f64
            })
            .sum::<f64>()
            / n as f64;
        Some(WeightSummary {
            model_start: mean_a1(&frames[..edge]),
            model_end: mean_a1(&frames[n - edge..]),
            gevd_model_mad: mad,
            frames: n,
        })
    }
}

/// Synthesizes (or loads) the scene, processes it and writes every output.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let (scene, stft, rec) = match &cfg.input_dir {
        Some(dir) => read_recording(dir)?,
        None => {
            let scene = cfg.scene();
            let stft = cfg.stft_config()?;
            let rec = simulate(&scene, &stft)?;
            (scene, stft, rec)
        }
    };
    let opts = ProcessOptions::from_config(cfg, &stft)?;
    let report = process(&rec, &scene.geometry, &stft, &opts)?;
    crate::report::write_outputs(&cfg.output_dir, cfg, &scene, &report)?;
    Ok(report)
}

/// Runs every estimator against every side reference of the geometry.
pub fn process(
    rec: &LabeledRecording,
    geometry: &MicGeometry,
    stft: &StftConfig,
    opts: &ProcessOptions,
) -> Result<ExperimentReport> {
    if opts.estimators.is_empty() {
        return Err(LabError::Config("at least one estimator is required".into()));
    }
    geometry.validate()?;
    let engine = Stft::new(*stft)?;
    let mut sides = Vec::new();
    let mut first = None;
    for (i, &r) in geometry.side_references.iter().enumerate() {
        let out = process_side(rec, geometry, &engine, opts, r, i == 0)?;
        sides.push(SideResult {
            reference: r,
            input_snr_db: out.input_snr_db,
            output_snr_db: out.output_snr_db.clone(),
        });
        if i == 0 {
            first = Some(out);
        }
    }
    let first = first.expect("at least one side reference");
    let n = sides.len() as f64;
    let input_snr_db = sides.iter().map(|s| s.input_snr_db).sum::<f64>() / n;
    let delta_snr_db = (0..opts.estimators.len())
        .map(|e| sides.iter().map(|s| s.output_snr_db[e] - s.input_snr_db).sum::<f64>() / n)
        .collect();
    Ok(ExperimentReport {
        estimators: opts.estimators.clone(),
        sides,
        input_snr_db,
        delta_snr_db,
        weights: first.weights,
        frame_snr: first.frame_snr,
        bias: first.bias,
        diagnostics: first.diagnostics,
        enhanced: first.enhanced,
    })
}

struct SideOutput {
    input_snr_db: f64,
    output_snr_db: Vec<f64>,
    weights: Vec<FrameWeights>,
    frame_snr: Vec<FrameSnr>,
    bias: Vec<BiasRow>,
    diagnostics: Diagnostics,
    enhanced: Vec<Vec<f64>>,
}

/// Steering vector of one estimator in one bin-frame, with its weights when
/// it is a combination of SC estimates.
fn steer(
    e: Estimator,
    cov: &BinCovariance,
    rn: &rtfcomb_core::CMatrix,
    est: &EstimateMatrix,
    snr: &[f64],
    truth: &CVector,
    diag: &mut Diagnostics,
) -> Option<(CVector, Option<CVector>)> {
    let me = est.layout().external;
    match e {
        Estimator::Oracle => Some((truth.clone(), None)),
        Estimator::Sc(j) => Some((est.column(j), Some(CVector::basis(me, j)))),
        Estimator::Gevd => {
            let w = gevd_weights(est, &cov.ry, rn).ok()?;
            match w.fallback {
                Some(WeightFallback::NormalizerNearZero) => diag.gevd_normalizer_fallbacks += 1,
                Some(WeightFallback::SingularPencil) => diag.gevd_singular_fallbacks += 1,
                _ => {}
            }
            diag.gevd_degenerate += usize::from(w.degenerate);
            let h = combine(est, &w).ok()?.h;
            Some((h, Some(w.alpha)))
        }
        Estimator::Model => {
            let w = model_weights(snr);
            diag.model_zero_snr_fallbacks += usize::from(w.fallback.is_some());
            let h = combine(est, &w).ok()?.h;
            Some((h, Some(w.alpha)))
        }
    }
}

fn process_side(
    rec: &LabeledRecording,
    geometry: &MicGeometry,
    stft: &Stft,
    opts: &ProcessOptions,
    reference: usize,
    primary: bool,
) -> Result<SideOutput> {
    let cfg = *stft.config();
    let order = geometry.reference_order(reference);
    let pick = |sig: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
        order
            .iter()
            .map(|&i| {
                sig.get(i)
                    .cloned()
                    .ok_or_else(|| LabError::LengthMismatch(format!("recording lacks channel {i}")))
            })
            .collect()
    };
    let xs = stft.analyze(&pick(&rec.speech)?)?;
    let ns = stft.analyze(&pick(&rec.noise)?)?;
    let layout = geometry.layout();
    let (frames, bins, m, me) = (xs.frames(), xs.bins(), layout.total(), layout.external);
    if xs.channels() != m {
        return Err(LabError::LengthMismatch(format!(
            "recording has {} channels, geometry {m}",
            xs.channels()
        )));
    }
    if rec.vad.len() != frames {
        return Err(LabError::LengthMismatch(format!(
            "VAD has {} frames, spectrogram {frames}",
            rec.vad.len()
        )));
    }
    let ne = opts.estimators.len();
    let mut zx = vec![Spectrogram::zeros_like(&xs, 1); ne];
    let mut zn = vec![Spectrogram::zeros_like(&xs, 1); ne];
    let mut weight_sum = vec![0.0; frames];
    let mut snr_acc = vec![0.0; frames * me];
    let mut alpha_acc = vec![C64::new(0.0, 0.0); frames * ne * me];
    let mut bias = Vec::new();
    let mut diag = Diagnostics {
        passthrough: vec![0; ne],
        ..Default::default()
    };
    let passthrough = BeamformerWeights::passthrough(m);
    let mut y = vec![C64::new(0.0, 0.0); m];
    let blind = opts.mode == CovarianceMode::Blind;

    for k in 0..bins {
        let mut tracker = BinCovariance::new(m);
        for l in 0..frames {
            let x = xs.bin(l, k);
            let n = ns.bin(l, k);
            for (yi, (a, b)) in y.iter_mut().zip(x.iter().zip(n)) {
                *yi = a + b;
            }
            let components = match opts.mode {
                CovarianceMode::Oracle => Some((x, n)),
                CovarianceMode::Blind => None,
            };
            tracker.update(&y, components, rec.vad[l], &opts.factors, SumMode::Independent)?;
            let corrected;
            let cov = if opts.startup_correction {
                corrected = tracker.startup_corrected(&opts.factors, blind, SumMode::Independent);
                &corrected
            } else {
                &tracker
            };

            let ready = cov.frames_y > 0 && cov.frames_n > 0;
            let rn = cov.loaded_rn();
            let est = if ready {
                match EstimateMatrix::build(&cov.ry, layout) {
                    Ok(e) => Some(e),
                    Err(_) => {
                        diag.near_zero_sc_normalizer += 1;
                        None
                    }
                }
            } else {
                None
            };
            let snr = input_snrs(&cov.rx, &rn, layout);
            let truth = {
                let h = &rec.oracle_rtf[rec.segment_of_frame(l, &cfg)][k];
                let r = h[order[0]];
                CVector(order.iter().map(|&i| h[i] / r).collect())
            };
            let weight = match opts.averaging {
                FrequencyAveraging::Energy => cov.rx[(0, 0)].re.max(0.0),
                FrequencyAveraging::Linear => 1.0,
            };
            let report_frame = primary && est.is_some();
            if report_frame {
                weight_sum[l] += weight;
                for (acc, s) in snr_acc[l * me..(l + 1) * me].iter_mut().zip(&snr) {
                    *acc += weight * s;
                }
            }
            let bias_frame = report_frame && l % opts.bias_frame_stride == 0;

            for (ei, &e) in opts.estimators.iter().enumerate() {
                let steered = est.as_ref().and_then(|est| steer(e, cov, &rn, est, &snr, &truth, &mut diag));
                let w = steered.as_ref().and_then(|(h, _)| mvdr_weights(&rn, h).ok());
                let w = match &w {
                    Some(w) => w,
                    None => {
                        diag.passthrough[ei] += 1;
                        &passthrough
                    }
                };
                zx[ei].bin_mut(l, k)[0] = w.output(x);
                zn[ei].bin_mut(l, k)[0] = w.output(n);

                if let Some((h, Some(alpha))) = &steered {
                    if report_frame {
                        let base = (l * ne + ei) * me;
                        for (acc, a) in alpha_acc[base..base + me].iter_mut().zip(alpha.iter()) {
                            *acc += a * weight;
                        }
                    }
                    if bias_frame {
                        let predicted = predicted_bias_factors(alpha, &snr);
                        for (mic, entry) in bias_report(h, &truth, &predicted, layout).into_iter().enumerate() {
                            if let Some(entry) = entry {
                                bias.push(BiasRow {
                                    estimator: e,
                                    frame: l,
                                    bin: k,
                                    mic,
                                    alpha: alpha[mic],
                                    predicted_factor: entry.predicted_factor,
                                    measured_ratio: entry.measured_ratio,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    bias.sort_by_key(|b| (b.frame, b.bin));

    let reference_x = stft.synthesize(&xs.select_channels(&[0]))?.swap_remove(0);
    let reference_n = stft.synthesize(&ns.select_channels(&[0]))?.swap_remove(0);
    let len = reference_x.len();
    let active = sample_activity(&rec.vad, len, cfg.frame_length, cfg.hop);
    let input_snr_db = active_snr_db(&reference_x, &reference_n, &active)?;
    let mut outputs = Vec::with_capacity(ne);
    let mut output_snr_db = Vec::with_capacity(ne);
    for (a, b) in zx.iter().zip(&zn) {
        let s = stft.synthesize(a)?.swap_remove(0);
        let n = stft.synthesize(b)?.swap_remove(0);
        output_snr_db.push(active_snr_db(&s, &n, &active)?);
        outputs.push((s, n));
    }

    let time = |l: usize| (l * cfg.hop + cfg.frame_length / 2) as f64 / cfg.sample_rate;
    let (mut weights, mut frame_snr, mut enhanced) = (Vec::new(), Vec::new(), Vec::new());
    if primary {
        for l in 0..frames {
            let w = weight_sum[l];
            if !(w > 0.0) {
                continue;
            }
            weights.push(FrameWeights {
                frame: l,
                time: time(l),
                snr_db: snr_acc[l * me..(l + 1) * me].iter().map(|s| 10.0 * (s / w).log10()).collect(),
                alpha: (0..ne)
                    .map(|e| alpha_acc[(l * ne + e) * me..(l * ne + e + 1) * me].iter().map(|a| a / w).collect())
                    .collect(),
            });
        }
        let seg_db = |s: &[f64], n: &[f64]| {
            let es: f64 = s.iter().map(|v| v * v).sum();
            let en: f64 = n.iter().map(|v| v * v).sum();
            10.0 * (es / en).log10()
        };
        for l in (0..frames).filter(|&l| rec.vad[l]) {
            let r = l * cfg.hop..((l + 1) * cfg.hop).min(len);
            if r.is_empty() {
                continue;
            }
            let row = FrameSnr {
                frame: l,
                time: time(l),
                input_db: seg_db(&reference_x[r.clone()], &reference_n[r.clone()]),
                output_db: outputs.iter().map(|(s, n)| seg_db(&s[r.clone()], &n[r.clone()])).collect(),
            };
            if row.input_db.is_finite() && row.output_db.iter().all(|v| v.is_finite()) {
                frame_snr.push(row);
            }
        }
        enhanced = outputs
            .iter()
            .map(|(s, n)| s.iter().zip(n).map(|(a, b)| a + b).collect())
            .collect();
    }
    Ok(SideOutput {
        input_snr_db,
        output_snr_db,
        weights,
        frame_snr,
        bias,
        diagnostics: diag,
        enhanced,
    })
}

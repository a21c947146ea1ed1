//! CSV and WAV outputs of an experiment, and their summary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{Estimator, ExperimentConfig};
use crate::error::{LabError, Result};
use crate::pipeline::{ExperimentReport, FrameWeights, WeightSummary};
use crate::scene::SceneConfig;
use crate::wav::write_wav;

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

fn weighted_estimators(report: &ExperimentReport) -> Vec<(usize, Estimator)> {
    report
        .estimators
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, e)| *e != Estimator::Oracle)
        .collect()
}

pub fn weights_csv(report: &ExperimentReport) -> String {
    let me = report.weights.first().map_or(0, |f| f.snr_db.len());
    let ests = weighted_estimators(report);
    let mut out = String::from("frame,time");
    for i in 1..=me {
        write!(out, ",snr_e{i}_db").unwrap();
    }
    for (_, e) in &ests {
        for i in 1..=me {
            write!(out, ",{e}_re_a{i},{e}_im_a{i}").unwrap();
        }
    }
    out.push('\n');
    for f in &report.weights {
        write!(out, "{},{}", f.frame, f.time).unwrap();
        for s in &f.snr_db {
            write!(out, ",{s}").unwrap();
        }
        for (ei, _) in &ests {
            for a in &f.alpha[*ei] {
                write!(out, ",{},{}", a.re, a.im).unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn snr_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("estimator,delta_snr_db\n");
    for (e, d) in report.estimators.iter().zip(&report.delta_snr_db) {
        writeln!(out, "{e},{d}").unwrap();
    }
    out
}

pub fn snr_sides_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("reference,estimator,input_snr_db,output_snr_db,delta_snr_db\n");
    for s in &report.sides {
        for (e, o) in report.estimators.iter().zip(&s.output_snr_db) {
            writeln!(out, "{},{e},{},{o},{}", s.reference, s.input_snr_db, o - s.input_snr_db).unwrap();
        }
    }
    out
}

pub fn snr_frames_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("frame,time,input_db");
    for e in &report.estimators {
        write!(out, ",{e}_db").unwrap();
    }
    out.push('\n');
    for f in &report.frame_snr {
        write!(out, "{},{},{}", f.frame, f.time, f.input_db).unwrap();
        for o in &f.output_db {
            write!(out, ",{o}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn bias_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("estimator,frame,bin,mic,alpha_re,alpha_im,predicted_factor,ratio_abs,ratio_arg\n");
    for b in &report.bias {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            b.estimator,
            b.frame,
            b.bin,
            b.mic + 1,
            b.alpha.re,
            b.alpha.im,
            b.predicted_factor,
            b.measured_ratio.norm(),
            b.measured_ratio.arg()
        )
        .unwrap();
    }
    out
}

pub fn diagnostics_csv(report: &ExperimentReport) -> String {
    let d = &report.diagnostics;
    let mut out = String::from("counter,value\n");
    for (e, n) in report.estimators.iter().zip(&d.passthrough) {
        writeln!(out, "passthrough_{e},{n}").unwrap();
    }
    writeln!(out, "gevd_normalizer_fallbacks,{}", d.gevd_normalizer_fallbacks).unwrap();
    writeln!(out, "gevd_singular_fallbacks,{}", d.gevd_singular_fallbacks).unwrap();
    writeln!(out, "gevd_degenerate,{}", d.gevd_degenerate).unwrap();
    writeln!(out, "model_zero_snr_fallbacks,{}", d.model_zero_snr_fallbacks).unwrap();
    writeln!(out, "near_zero_sc_normalizer,{}", d.near_zero_sc_normalizer).unwrap();
    out
}

/// Writes the CSV tables, the resolved configuration and one enhanced WAV per estimator.
pub fn write_outputs(dir: &Path, cfg: &ExperimentConfig, scene: &SceneConfig, report: &ExperimentReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    write(&dir.join("weights.csv"), &weights_csv(report))?;
    write(&dir.join("snr.csv"), &snr_csv(report))?;
    write(&dir.join("snr_sides.csv"), &snr_sides_csv(report))?;
    write(&dir.join("snr_frames.csv"), &snr_frames_csv(report))?;
    write(&dir.join("bias.csv"), &bias_csv(report))?;
    write(&dir.join("diagnostics.csv"), &diagnostics_csv(report))?;
    let fs_hz = scene.sample_rate.round() as u32;
    for (e, y) in report.estimators.iter().zip(&report.enhanced) {
        write_wav(&dir.join(format!("enhanced_{e}.wav")), std::slice::from_ref(y), fs_hz, cfg.wav_format)?;
    }
    Ok(())
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| LabError::Config(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    Ok((header, rows))
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse()
        .map_err(|_| LabError::Config(format!("{}: '{s}' is not a number", path.display())))
}

/// Human-readable summary of the outputs in `dir`.
pub fn summarize_dir(dir: &Path) -> Result<String> {
    let mut out = String::new();
    let path = dir.join("snr.csv");
    let (_, rows) = read_csv(&path)?;
    writeln!(out, "SNR improvement (dB, averaged over side references)").unwrap();
    let mut deltas = Vec::new();
    for r in &rows {
        if r.len() < 2 {
            continue;
        }
        let d = parse_f64(&r[1], &path)?;
        writeln!(out, "  {:<8} {:>8.3}", r[0], d).unwrap();
        deltas.push((r[0].clone(), d));
    }
    let get = |name: &str| deltas.iter().find(|(n, _)| n == name).map(|(_, d)| *d);
    if let (Some(g), Some(m)) = (get("gevd"), get("model")) {
        let best_sc = deltas
            .iter()
            .filter(|(n, _)| n.starts_with("sc"))
            .map(|(_, d)| *d)
            .fold(f64::NEG_INFINITY, f64::max);
        writeln!(out, "  gevd >= model: {}", g >= m).unwrap();
        if best_sc.is_finite() {
            writeln!(out, "  gevd >= best sc - 0.1 dB: {}", g >= best_sc - 0.1).unwrap();
        }
    }

    let path = dir.join("weights.csv");
    if path.exists() {
        let (header, rows) = read_csv(&path)?;
        let col = |name: &str| header.iter().position(|h| h == name);
        let me = header.iter().filter(|h| h.starts_with("snr_e")).count();
        let cols = |est: &str| -> Option<Vec<usize>> { (1..=me).map(|i| col(&format!("{est}_re_a{i}"))).collect() };
        if let (Some(gc), Some(mc)) = (cols("gevd"), cols("model")) {
            let mut frames = Vec::with_capacity(rows.len());
            for r in &rows {
                let g = gc.iter().map(|&c| parse_f64(&r[c], &path).map(|v| rtfcomb_core::C64::new(v, 0.0)));
                let m = mc.iter().map(|&c| parse_f64(&r[c], &path).map(|v| rtfcomb_core::C64::new(v, 0.0)));
                frames.push(FrameWeights {
                    frame: 0,
                    time: 0.0,
                    snr_db: Vec::new(),
                    alpha: vec![g.collect::<Result<_>>()?, m.collect::<Result<_>>()?],
                });
            }
            if let Some(s) = WeightSummary::from_frames(&frames, 0, 1) {
                writeln!(out, "Weight trajectories over {} frames", s.frames).unwrap();
                writeln!(out, "  model alpha_1 start {:.3}, end {:.3}", s.model_start, s.model_end).unwrap();
                writeln!(out, "  mean |Re gevd - model| {:.4}", s.gevd_model_mad).unwrap();
            }
        }
    }
    Ok(out)
}

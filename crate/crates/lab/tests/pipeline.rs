use std::fs;

use rtfcomb::config::{CovarianceMode, Estimator, ExperimentConfig, FrequencyAveraging};
use rtfcomb::pipeline::{process, ProcessOptions};
use rtfcomb::report::{bias_csv, snr_csv, weights_csv};
use rtfcomb::scene::{simulate, MicGeometry, SceneConfig, SourceTrajectory};
use rtfcomb::{run_experiment, ExperimentReport};

fn short(seed: u64, duration: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        seed,
        estimators: vec![
            Estimator::Sc(0),
            Estimator::Sc(1),
            Estimator::Gevd,
            Estimator::Model,
            Estimator::Oracle,
        ],
        ..ExperimentConfig::default()
    };
    cfg.scene.duration = duration;
    cfg.scene.trajectory = SourceTrajectory::linear([-1.3, 1.9, 0.0], [1.3, 1.9, 0.0], duration);
    cfg
}

fn run(cfg: &ExperimentConfig) -> ExperimentReport {
    let scene = cfg.scene();
    let stft = cfg.stft_config().unwrap();
    let rec = simulate(&scene, &stft).unwrap();
    let opts = ProcessOptions::from_config(cfg, &stft).unwrap();
    process(&rec, &scene.geometry, &stft, &opts).unwrap()
}

fn all_finite(report: &ExperimentReport) -> bool {
    report.delta_snr_db.iter().all(|d| d.is_finite())
        && report.weights.iter().all(|f| {
            f.snr_db.iter().all(|s| !s.is_nan()) && f.alpha.iter().flatten().all(|a| a.re.is_finite() && a.im.is_finite())
        })
        && report.bias.iter().all(|b| b.predicted_factor.is_finite() && b.measured_ratio.re.is_finite())
}

#[test]
fn symmetric_static_scene_splits_model_weights_evenly() {
    let mut cfg = short(3, 6.0);
    cfg.estimators = vec![Estimator::Model];
    let mut geometry = MicGeometry::binaural();
    geometry.side_references = vec![0];
    cfg.scene = SceneConfig {
        geometry,
        trajectory: SourceTrajectory::fixed([0.0, 1.9, 0.0], 6.0),
        ..cfg.scene
    };
    let report = run(&cfg);
    // skip the first second while the noise estimate settles
    let frames: Vec<_> = report.weights.iter().filter(|f| f.time > 1.0).collect();
    assert!(frames.len() > 100);
    let mean = |i: usize| frames.iter().map(|f| f.alpha[0][i].re).sum::<f64>() / frames.len() as f64;
    let (a1, a2) = (mean(0), mean(1));
    assert!((a1 - 0.5).abs() < 0.1 && (a2 - 0.5).abs() < 0.1, "{a1} {a2}");
    for f in &frames {
        let sum: f64 = f.alpha[0].iter().map(|a| a.re).sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }
}

#[test]
fn processing_is_deterministic_and_finite() {
    let cfg = short(11, 3.0);
    let a = run(&cfg);
    let b = run(&cfg);
    assert_eq!(weights_csv(&a), weights_csv(&b));
    assert_eq!(snr_csv(&a), snr_csv(&b));
    assert_eq!(bias_csv(&a), bias_csv(&b));
    assert!(all_finite(&a));
    assert_eq!(a.sides.len(), 2);
    assert_eq!(a.enhanced.len(), 5);
}

#[test]
fn every_estimator_improves_snr() {
    let report = run(&short(5, 4.0));
    for (e, d) in report.estimators.iter().zip(&report.delta_snr_db) {
        assert!(*d > 0.0, "{e}: {d}");
    }
    assert!(report.delta(Estimator::Oracle).unwrap() > 3.0);
}

#[test]
fn blind_mode_and_linear_averaging_run() {
    let mut cfg = short(7, 3.0);
    cfg.covariance_mode = CovarianceMode::Blind;
    cfg.frequency_averaging = FrequencyAveraging::Linear;
    let report = run(&cfg);
    assert!(all_finite(&report));
    assert!(report.delta(Estimator::Gevd).unwrap() > 0.0);

    cfg.smoothing.startup_correction = false;
    assert!(all_finite(&run(&cfg)));
}

#[test]
fn experiment_writes_its_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = short(2, 2.0);
    cfg.output_dir = dir.path().to_path_buf();
    let report = run_experiment(&cfg).unwrap();
    for name in [
        "config.toml",
        "weights.csv",
        "snr.csv",
        "snr_sides.csv",
        "snr_frames.csv",
        "bias.csv",
        "diagnostics.csv",
        "enhanced_gevd.wav",
        "enhanced_oracle.wav",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let weights = fs::read_to_string(dir.path().join("weights.csv")).unwrap();
    assert!(weights.starts_with("frame,time,snr_e1_db,snr_e2_db,sc1_re_a1,sc1_im_a1"));
    assert_eq!(weights.lines().count(), 1 + report.weights.len());
    let snr = fs::read_to_string(dir.path().join("snr.csv")).unwrap();
    assert_eq!(snr.lines().count(), 6);
    let back = ExperimentConfig::load(&dir.path().join("config.toml")).unwrap();
    assert_eq!(back, cfg);
    let summary = rtfcomb::report::summarize_dir(dir.path()).unwrap();
    assert!(summary.contains("gevd >= model"));
}

#[test]
fn mismatched_recording_is_rejected() {
    let cfg = short(1, 2.0);
    let scene = cfg.scene();
    let stft = cfg.stft_config().unwrap();
    let mut rec = simulate(&scene, &stft).unwrap();
    rec.vad.pop();
    let opts = ProcessOptions::from_config(&cfg, &stft).unwrap();
    assert!(process(&rec, &scene.geometry, &stft, &opts).is_err());

    let mut bad = cfg.clone();
    bad.estimators = vec![Estimator::Sc(2)];
    assert!(bad.validate().is_err());
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rtfcomb::config::{parse_estimators, ExperimentConfig};
use rtfcomb::identities::{run_battery, BatteryConfig};
use rtfcomb::report::summarize_dir;
use rtfcomb::scene::{simulate, write_recording};
use rtfcomb::{run_experiment, LabError};

/// External-microphone RTF estimation laboratory.
#[derive(Debug, Parser)]
#[command(name = "rtfcomb", version)]
struct Cli {
    /// TOML experiment configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Scene seed (or battery seed for `verify`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated estimators, e.g. sc1,sc2,gevd,model.
    #[arg(long, global = true)]
    estimators: Option<String>,
    /// Print the default configuration and exit.
    #[arg(long)]
    dump_defaults: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize the scene and write its WAV files and metadata.
    Simulate,
    /// Run the experiment and write CSV tables and enhanced audio.
    Run {
        /// Process a scene written by `simulate` instead of synthesizing one.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run the exact-model identity battery.
    Verify {
        /// Randomized instances per identity.
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        /// Random competitors per instance in the optimality checks.
        #[arg(long, default_value_t = 1000)]
        competitors: usize,
    },
    /// Summarize the outputs of a previous run.
    Report,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, LabError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(list) = &cli.estimators {
        cfg.estimators = parse_estimators(list)?;
    }
    Ok(cfg)
}

fn execute(cli: &Cli, command: &Command) -> Result<bool, LabError> {
    match command {
        Command::Simulate => {
            let cfg = load_config(cli)?;
            cfg.validate()?;
            let scene = cfg.scene();
            let stft = cfg.stft_config()?;
            let rec = simulate(&scene, &stft)?;
            write_recording(&cfg.output_dir, &scene, &stft, &rec)?;
            println!(
                "wrote {} channels, {:.1} s, to {}",
                rec.mixture.len(),
                scene.duration,
                cfg.output_dir.display()
            );
        }
        Command::Run { input } => {
            let mut cfg = load_config(cli)?;
            if input.is_some() {
                cfg.input_dir = input.clone();
            }
            let report = run_experiment(&cfg)?;
            println!("input SNR {:.2} dB", report.input_snr_db);
            for (e, d) in report.estimators.iter().zip(&report.delta_snr_db) {
                println!("  {e:<8} delta SNR {d:>7.3} dB");
            }
            println!("outputs in {}", cfg.output_dir.display());
        }
        Command::Verify { instances, competitors } => {
            let battery = BatteryConfig {
                seed: cli.seed.unwrap_or(BatteryConfig::default().seed),
                instances: *instances,
                competitors: *competitors,
            };
            let checks = run_battery(&battery);
            for c in &checks {
                println!("{c}");
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
        Command::Report => {
            let cfg = load_config(cli)?;
            print!("{}", summarize_dir(&cfg.output_dir)?);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.dump_defaults {
        print!("{}", ExperimentConfig::default().to_toml());
        return ExitCode::SUCCESS;
    }
    let Some(command) = &cli.command else {
        eprintln!("error: a subcommand is required (simulate, run, verify, report); see --help");
        return ExitCode::from(2);
    };
    match execute(&cli, command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}

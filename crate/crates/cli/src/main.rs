//! Command-line front end: dataset generation, training, ablation,
//! evaluation, and acoustic analysis as reproducible runs.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use grfkit_core::config::RunSettings;
use grfkit_core::runs;
use grfkit_core::simgen::Split;
use grfkit_core::trainer::AblationTag;

#[derive(Parser)]
#[command(
    name = "grfkit",
    about = "Contact-force estimation toolkit: synthetic biped data, physics-structured training, and acoustic metrics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Plain-text config file (key = value sections).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted-key overrides, e.g. --override train.epochs=50
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn settings(&self) -> anyhow::Result<RunSettings> {
        Ok(RunSettings::load(self.config.as_deref(), &self.overrides)?)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset (train/val/test splits + metadata).
    GenData {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for the dataset files.
        #[arg(long)]
        out: PathBuf,
        /// Root seed for generation (overrides the config value).
        #[arg(long)]
        seed: Option<u64>,
        /// Restrict to a subset of motion modes (comma separated).
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<String>>,
    },
    /// Train one loss configuration and report test metrics.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dataset directory produced by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Output directory for checkpoint/history/report.
        #[arg(long)]
        out: PathBuf,
        /// Loss configuration (C1 = full loss, C2..C5 remove one term).
        #[arg(long, default_value = "C1")]
        ablation: String,
        /// Root seed for training (overrides the config value).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train C1..C5 sequentially and emit the comparison table.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a dataset split.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        /// Checkpoint file written by train/ablate.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Split to evaluate (train, val, or test).
        #[arg(long, default_value = "test")]
        split: String,
        /// Add a per-mode metric breakdown.
        #[arg(long)]
        per_mode: bool,
        /// Also write per-tick impact rewards.
        #[arg(long)]
        reward: bool,
        /// Impact penalty scale used with --reward (overrides config).
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// A-weighted SPL analysis of a recording (optionally compare two).
    Acoustics {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input WAV file (PCM 16-bit or float 32-bit, mono or stereo).
        wav: PathBuf,
        /// Second WAV file; the report includes ΔMNL/ΔPNL (positive means
        /// the second file is quieter).
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print checkpoint metadata.
    InspectModel {
        /// Checkpoint file.
        checkpoint: PathBuf,
    },
}

fn parse_split(name: &str) -> anyhow::Result<Split> {
    match name {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => anyhow::bail!("unknown split '{other}' (expected train, val, or test)"),
    }
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenData {
            config,
            out,
            seed,
            modes,
        } => {
            let mut settings = config.settings()?;
            if let Some(seed) = seed {
                settings.data.seed = seed;
            }
            if let Some(modes) = modes {
                settings.data.modes = modes;
            }
            println!("root seed: {}", settings.data.seed);
            let report = runs::run_gen_data(&settings, &out)?;
            println!(
                "wrote {} train / {} val / {} test records ({} / {} / {} sessions) to {}",
                report.train_records,
                report.val_records,
                report.test_records,
                report.train_sessions,
                report.val_sessions,
                report.test_sessions,
                report.out_dir.display()
            );
            println!("metadata: rate_hz = {}", settings.data.rate_hz);
        }
        Command::Train {
            config,
            data,
            out,
            ablation,
            seed,
        } => {
            let mut settings = config.settings()?;
            if let Some(seed) = seed {
                settings.train.seed = seed;
            }
            let tag: AblationTag = ablation.parse()?;
            println!("root seed: {}", settings.train.seed);
            println!(
                "training {tag} for {} epochs (batch {})",
                settings.train.epochs, settings.train.batch_size
            );
            let artifacts = runs::run_train(&settings, &data, &out, tag)?;
            println!(
                "checkpoint: {} (best epoch {} at val loss {:.6})",
                artifacts.checkpoint_path.display(),
                artifacts.best_epoch,
                artifacts.best_val_loss
            );
            println!("history: {}", artifacts.history_path.display());
            for (fi, foot) in ["left", "right"].iter().enumerate() {
                let m = &artifacts.test_report.per_foot[fi];
                println!(
                    "test {foot}: rmse {:.3} N, mae {:.3} N, r2 {:.4}",
                    m.rmse, m.mae, m.r2
                );
            }
        }
        Command::Ablate {
            config,
            data,
            out,
            seed,
        } => {
            let mut settings = config.settings()?;
            if let Some(seed) = seed {
                settings.train.seed = seed;
            }
            println!("root seed: {}", settings.train.seed);
            let artifacts = runs::run_ablate(&settings, &data, &out)?;
            println!("results: {}", artifacts.results_path.display());
            for (tag, r2) in &artifacts.r2_by_tag {
                println!("{tag}: r2 left {:.4}, right {:.4}", r2[0], r2[1]);
            }
        }
        Command::Eval {
            config,
            checkpoint,
            data,
            out,
            split,
            per_mode,
            reward,
            alpha,
        } => {
            let settings = config.settings()?;
            let split = parse_split(&split)?;
            let reward_alpha = if reward {
                Some(alpha.unwrap_or(settings.reward.alpha))
            } else {
                None
            };
            let artifacts =
                runs::run_eval(&settings, &checkpoint, &data, split, per_mode, reward_alpha, &out)?;
            println!("checkpoint ablation: {}", artifacts.ablation_tag);
            for (fi, foot) in ["left", "right"].iter().enumerate() {
                let m = &artifacts.report.per_foot[fi];
                println!(
                    "{foot}: rmse {:.3} N, mae {:.3} N, r2 {:.4}",
                    m.rmse, m.mae, m.r2
                );
            }
            for (mode, feet, count) in &artifacts.report.per_mode {
                println!(
                    "mode {mode} ({count} ticks): r2 left {:.4}, right {:.4}",
                    feet[0].r2, feet[1].r2
                );
            }
            println!("report: {}", artifacts.report_path.display());
            if let Some(p) = &artifacts.rewards_path {
                println!("impact rewards: {}", p.display());
            }
        }
        Command::Acoustics {
            config,
            wav,
            compare,
            out,
        } => {
            let settings = config.settings()?;
            let artifacts = runs::run_acoustics(&settings, &wav, compare.as_deref(), &out)?;
            println!(
                "{}: {} frames, mnl {:.2} dBA, pnl {:.2} dBA",
                wav.display(),
                artifacts.primary.frames,
                artifacts.primary.mnl_dba,
                artifacts.primary.pnl_dba
            );
            if let (Some(dm), Some(dp), Some((second, _))) = (
                artifacts.delta_mnl,
                artifacts.delta_pnl,
                artifacts.comparison.as_ref(),
            ) {
                println!(
                    "comparison: mnl {:.2} dBA, pnl {:.2} dBA",
                    second.mnl_dba, second.pnl_dba
                );
                println!(
                    "delta (first − second): ΔMNL {dm:.2} dB, ΔPNL {dp:.2} dB (positive means the second file is quieter)"
                );
            }
        }
        Command::InspectModel { checkpoint } => {
            let text = runs::run_inspect(&checkpoint)?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run().context("grfkit run failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

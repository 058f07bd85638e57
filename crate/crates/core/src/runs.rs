//! Run-level entry points behind the CLI commands. Each run writes its
//! artifacts plus an effective-config snapshot, so any run is reproducible
//! from the snapshot alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, RunSettings};
use crate::metrics::{mnl, pnl, read_wav, spl_series, AudioSegment, MetricsError, WavError};
use crate::predictor::{window_at, LossWeights, PredictorError};
use crate::reward::impact_reward;
use crate::seqnet::WINDOW_LEN;
use crate::simgen::{emit_dataset, load_split, BipedModel, DataError, EmitReport, Split};
use crate::trainer::{
    check_dimension, evaluate, history_csv, load_checkpoint, results_csv, run_ablation_suite,
    save_checkpoint, train, AblationTag, CheckpointError, EvalReport, TrainError,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Wav(#[from] WavError),
    #[error("run io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("run: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn prepare_out_dir(out_dir: &Path, settings: &RunSettings) -> Result<(), RunError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    settings.write_snapshot(&out_dir.join("effective-config.toml"))?;
    Ok(())
}

/// `gen-data`: emit the synthetic dataset splits.
pub fn run_gen_data(settings: &RunSettings, out_dir: &Path) -> Result<EmitReport, RunError> {
    prepare_out_dir(out_dir, settings)?;
    let model = BipedModel::<f64>::default();
    let report = emit_dataset(&model, &settings.data, out_dir)?;
    Ok(report)
}

/// Artifacts of one training run.
#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub checkpoint_path: PathBuf,
    pub history_path: PathBuf,
    pub test_report_path: PathBuf,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub test_report: EvalReport,
}

/// `train`: one configuration end to end, with test metrics for the
/// selected model.
pub fn run_train(
    settings: &RunSettings,
    data_dir: &Path,
    out_dir: &Path,
    ablation: AblationTag,
) -> Result<TrainArtifacts, RunError> {
    prepare_out_dir(out_dir, settings)?;
    let train_split = load_split::<f64>(data_dir, Split::Train)?;
    let val_split = load_split::<f64>(data_dir, Split::Val)?;
    let test_split = load_split::<f64>(data_dir, Split::Test)?;
    let weights: LossWeights<f64> = settings.loss;
    let outcome = train(
        &train_split,
        &val_split,
        &settings.model,
        &settings.train,
        ablation,
        &weights,
    )?;
    let checkpoint_path = out_dir.join(format!("checkpoint-{}.json", ablation.name()));
    save_checkpoint(&checkpoint_path, &outcome.model, &outcome.info)?;
    let history_path = out_dir.join(format!("history-{}.csv", ablation.name()));
    fs::write(&history_path, history_csv(&outcome.history)).map_err(io_err(&history_path))?;
    let report = evaluate(&outcome.model, &test_split, false)?;
    let test_report_path = out_dir.join(format!("test-report-{}.csv", ablation.name()));
    fs::write(&test_report_path, eval_csv(ablation.name(), &report, false))
        .map_err(io_err(&test_report_path))?;
    Ok(TrainArtifacts {
        checkpoint_path,
        history_path,
        test_report_path,
        best_epoch: outcome.info.best_epoch,
        best_val_loss: outcome.info.best_val_loss,
        test_report: report,
    })
}

/// Artifacts of the C1..C5 sweep.
#[derive(Debug, Clone)]
pub struct AblateArtifacts {
    pub results_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    /// `(config, [left, right] R²)` in run order.
    pub r2_by_tag: Vec<(String, [f64; 2])>,
}

/// `ablate`: train C1..C5 sequentially and emit the comparison table.
pub fn run_ablate(
    settings: &RunSettings,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<AblateArtifacts, RunError> {
    prepare_out_dir(out_dir, settings)?;
    let train_split = load_split::<f64>(data_dir, Split::Train)?;
    let val_split = load_split::<f64>(data_dir, Split::Val)?;
    let test_split = load_split::<f64>(data_dir, Split::Test)?;
    let outcome = run_ablation_suite(
        &train_split,
        &val_split,
        &test_split,
        &settings.model,
        &settings.train,
        &settings.loss,
    )?;
    let mut checkpoints = Vec::new();
    let mut r2_by_tag = Vec::new();
    for (tag, run, report) in &outcome.runs {
        let path = out_dir.join(format!("checkpoint-{}.json", tag.name()));
        save_checkpoint(&path, &run.model, &run.info)?;
        let hist = out_dir.join(format!("history-{}.csv", tag.name()));
        fs::write(&hist, history_csv(&run.history)).map_err(io_err(&hist))?;
        checkpoints.push(path);
        r2_by_tag.push((
            tag.name().to_string(),
            [report.per_foot[0].r2, report.per_foot[1].r2],
        ));
    }
    let results_path = out_dir.join("results.csv");
    fs::write(&results_path, results_csv(&outcome.rows())).map_err(io_err(&results_path))?;
    Ok(AblateArtifacts {
        results_path,
        checkpoints,
        r2_by_tag,
    })
}

fn eval_csv(tag: &str, report: &EvalReport, per_mode: bool) -> String {
    let mut out = if per_mode {
        String::from("config, foot, mode, rmse, mae, r2\n")
    } else {
        String::from("config, foot, rmse, mae, r2\n")
    };
    for (fi, foot) in ["left", "right"].iter().enumerate() {
        let m = &report.per_foot[fi];
        if per_mode {
            let _ = writeln!(out, "{tag}, {foot}, all, {}, {}, {}", m.rmse, m.mae, m.r2);
        } else {
            let _ = writeln!(out, "{tag}, {foot}, {}, {}, {}", m.rmse, m.mae, m.r2);
        }
    }
    if per_mode {
        for (mode, feet, _) in &report.per_mode {
            for (fi, foot) in ["left", "right"].iter().enumerate() {
                let m = &feet[fi];
                let _ = writeln!(out, "{tag}, {foot}, {mode}, {}, {}, {}", m.rmse, m.mae, m.r2);
            }
        }
    }
    out
}

/// Artifacts of one evaluation run.
#[derive(Debug, Clone)]
pub struct EvalArtifacts {
    pub report_path: PathBuf,
    pub rewards_path: Option<PathBuf>,
    pub ablation_tag: String,
    pub report: EvalReport,
}

/// `eval`: metrics of a checkpoint on one split, with an optional per-tick
/// impact-reward column.
pub fn run_eval(
    settings: &RunSettings,
    checkpoint: &Path,
    data_dir: &Path,
    split: Split,
    per_mode: bool,
    reward_alpha: Option<f64>,
    out_dir: &Path,
) -> Result<EvalArtifacts, RunError> {
    prepare_out_dir(out_dir, settings)?;
    let (pred, info) = load_checkpoint::<f64>(checkpoint)?;
    let data = load_split::<f64>(data_dir, split)?;
    check_dimension(data.meta.n, pred.n())?;
    let report = evaluate(&pred, &data, per_mode)?;
    let report_path = out_dir.join("eval-report.csv");
    fs::write(&report_path, eval_csv(&info.ablation, &report, per_mode))
        .map_err(io_err(&report_path))?;
    let rewards_path = match reward_alpha {
        None => None,
        Some(alpha) => {
            let mut out = String::from("session, tick, fz_left, fz_right, r_impact\n");
            for (si, session) in data.sessions.iter().enumerate() {
                for t in WINDOW_LEN - 1..session.records.len() {
                    let window = window_at(session, t)?;
                    let f = pred.predict(&window, &session.records[t].jn)?;
                    let r = impact_reward(f, alpha);
                    let _ = writeln!(out, "{si}, {t}, {}, {}, {r}", f[0], f[1]);
                }
            }
            let path = out_dir.join("impact-rewards.csv");
            fs::write(&path, out).map_err(io_err(&path))?;
            Some(path)
        }
    };
    Ok(EvalArtifacts {
        report_path,
        rewards_path,
        ablation_tag: info.ablation,
        report,
    })
}

/// Summary of one analyzed audio file.
#[derive(Debug, Clone)]
pub struct AcousticsSummary {
    pub frames_path: PathBuf,
    pub summary_path: PathBuf,
    pub mnl_dba: f64,
    pub pnl_dba: f64,
    pub frames: usize,
}

fn analyze_wav(
    settings: &RunSettings,
    wav_path: &Path,
    out_dir: &Path,
    stem: &str,
) -> Result<AcousticsSummary, RunError> {
    let audio = read_wav(wav_path)?;
    let seg = AudioSegment::new(
        audio.rate_hz as f64,
        audio.samples,
        settings.acoustics.calibration_pa_fs,
    )?;
    let frames = spl_series(&seg, &settings.acoustics.spl_options())?;
    let mean = mnl(&frames, settings.acoustics.energy_average)?;
    let peak = pnl(&frames)?;
    let mut out = String::from("frame_start_s, spl_dba\n");
    for f in &frames {
        let _ = writeln!(out, "{}, {}", f.start_s, f.spl_dba);
    }
    let frames_path = out_dir.join(format!("{stem}-spl.csv"));
    fs::write(&frames_path, out).map_err(io_err(&frames_path))?;
    let summary_path = out_dir.join(format!("{stem}-summary.csv"));
    let averaging = if settings.acoustics.energy_average {
        "energy-mean"
    } else {
        "db-mean"
    };
    fs::write(
        &summary_path,
        format!("mnl_dba, pnl_dba, mnl_averaging\n{mean}, {peak}, {averaging}\n"),
    )
    .map_err(io_err(&summary_path))?;
    Ok(AcousticsSummary {
        frames_path,
        summary_path,
        mnl_dba: mean,
        pnl_dba: peak,
        frames: frames.len(),
    })
}

/// Artifacts of an acoustics run; `delta` is `first − second`, so a positive
/// value means the second file is quieter.
#[derive(Debug, Clone)]
pub struct AcousticsArtifacts {
    pub primary: AcousticsSummary,
    pub comparison: Option<(AcousticsSummary, PathBuf)>,
    pub delta_mnl: Option<f64>,
    pub delta_pnl: Option<f64>,
}

/// `acoustics`: per-frame SPL plus summary, optionally comparing two files.
pub fn run_acoustics(
    settings: &RunSettings,
    wav_path: &Path,
    compare: Option<&Path>,
    out_dir: &Path,
) -> Result<AcousticsArtifacts, RunError> {
    prepare_out_dir(out_dir, settings)?;
    let primary = analyze_wav(settings, wav_path, out_dir, "primary")?;
    match compare {
        None => Ok(AcousticsArtifacts {
            primary,
            comparison: None,
            delta_mnl: None,
            delta_pnl: None,
        }),
        Some(other) => {
            let second = analyze_wav(settings, other, out_dir, "comparison")?;
            let delta_mnl = primary.mnl_dba - second.mnl_dba;
            let delta_pnl = primary.pnl_dba - second.pnl_dba;
            let path = out_dir.join("comparison-delta.csv");
            fs::write(
                &path,
                format!(
                    "delta_mnl_dba, delta_pnl_dba, sign_convention\n{delta_mnl}, {delta_pnl}, positive-means-second-file-quieter\n"
                ),
            )
            .map_err(io_err(&path))?;
            Ok(AcousticsArtifacts {
                primary,
                comparison: Some((second, path)),
                delta_mnl: Some(delta_mnl),
                delta_pnl: Some(delta_pnl),
            })
        }
    }
}

/// `inspect-model`: human-readable checkpoint metadata.
pub fn run_inspect(checkpoint: &Path) -> Result<String, RunError> {
    let (pred, info) = load_checkpoint::<f64>(checkpoint)?;
    let mut out = String::new();
    let _ = writeln!(out, "checkpoint: {}", checkpoint.display());
    let _ = writeln!(out, "joint dimension: {}", pred.n());
    let _ = writeln!(out, "ablation: {}", info.ablation);
    let _ = writeln!(out, "seed: {}", info.seed);
    let _ = writeln!(
        out,
        "epochs trained: {} (best epoch {} at val loss {})",
        info.epochs_trained, info.best_epoch, info.best_val_loss
    );
    let _ = writeln!(
        out,
        "force stats: mean [{}, {}] N, std [{}, {}] N",
        pred.norm_stats().mean()[0],
        pred.norm_stats().mean()[1],
        pred.norm_stats().std()[0],
        pred.norm_stats().std()[1]
    );
    let _ = writeln!(
        out,
        "grid: {} intervals, degree {}; damping λ = {}; inertia floor ε = {}; contact threshold = {} N",
        pred.config().grid_size,
        pred.config().spline_degree,
        pred.config().dls_lambda,
        pred.config().inertia_epsilon,
        pred.config().contact_threshold
    );
    let total: usize = pred.param_tensors().iter().map(|t| t.numel()).sum();
    let _ = writeln!(out, "parameters: {total} across {} tensors", pred.param_tensors().len());
    Ok(out)
}

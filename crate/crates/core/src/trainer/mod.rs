//! Supervised training loop, model selection, evaluation, and the C1–C5
//! ablation harness.

mod adam;
mod checkpoint;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::{
    check_dimension, load_checkpoint, save_checkpoint, CheckpointError, CheckpointFile,
    CheckpointInfo, NamedTensor, CHECKPOINT_VERSION,
};

use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{mae, r2, rmse, MetricsError};
use crate::predictor::{
    build_loss_graph, window_at, ChunkSpec, GrfPredictor, LossValue, LossWeights, PredictorConfig,
    PredictorError,
};
use crate::scalar::{lit, Scalar};
use crate::seqnet::WINDOW_LEN;
use crate::simgen::{DataError, LoadedSplit, SessionData};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("training aborted: non-finite gradient in parameter '{param}' at epoch {epoch}")]
    NanGradient { param: String, epoch: usize },
    #[error("training diverged at epoch {epoch} (non-finite loss); history retained")]
    Diverged { epoch: usize, history: Vec<EpochRow> },
    #[error("dataset provides no full training sequences")]
    NoSequences,
    #[error("unknown ablation tag '{0}' (expected C1..C5)")]
    UnknownTag(String),
}

/// Optimization settings. The sequence length is pinned to the window
/// length (6 frames); batch size counts sequences.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub clip_norm: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            seed: 42,
            clip_norm: 10.0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(TrainError::Predictor(PredictorError::InvalidConfig(
                "epochs and batch_size must be at least 1".into(),
            )));
        }
        if !(self.adam.lr > 0.0) {
            return Err(TrainError::Predictor(PredictorError::InvalidConfig(
                "learning rate must be positive".into(),
            )));
        }
        Ok(())
    }
}

/// Loss configurations of the ablation study: C1 trains the full loss, the
/// others each remove one term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AblationTag {
    C1,
    C2,
    C3,
    C4,
    C5,
}

impl AblationTag {
    pub const ALL: [AblationTag; 5] = [
        AblationTag::C1,
        AblationTag::C2,
        AblationTag::C3,
        AblationTag::C4,
        AblationTag::C5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AblationTag::C1 => "C1",
            AblationTag::C2 => "C2",
            AblationTag::C3 => "C3",
            AblationTag::C4 => "C4",
            AblationTag::C5 => "C5",
        }
    }

    /// Weight mask: which base weight this configuration zeroes.
    pub fn apply<T: Scalar>(self, base: &LossWeights<T>) -> LossWeights<T> {
        let mut w = *base;
        match self {
            AblationTag::C1 => {}
            AblationTag::C2 => w.grf = T::zero(),
            AblationTag::C3 => w.dynamics = T::zero(),
            AblationTag::C4 => w.swing = T::zero(),
            AblationTag::C5 => w.smooth = T::zero(),
        }
        w
    }
}

impl FromStr for AblationTag {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "C1" | "c1" => Ok(AblationTag::C1),
            "C2" | "c2" => Ok(AblationTag::C2),
            "C3" | "c3" => Ok(AblationTag::C3),
            "C4" | "c4" => Ok(AblationTag::C4),
            "C5" | "c5" => Ok(AblationTag::C5),
            other => Err(TrainError::UnknownTag(other.to_string())),
        }
    }
}

impl std::fmt::Display for AblationTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One line of the training history (recorded as `f64` for reporting).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_total: f64,
    pub train_grf: f64,
    pub train_dyn: f64,
    pub train_swing: f64,
    pub train_smooth: f64,
    pub val_total: f64,
}

/// Result of one training run: the validation-selected model plus history.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: GrfPredictor<T>,
    pub info: CheckpointInfo,
    pub history: Vec<EpochRow>,
}

#[derive(Debug, Clone, Copy)]
struct PlannedChunk {
    session: usize,
    spec: ChunkSpec,
}

fn plan_chunks<T: Scalar>(sessions: &[SessionData<T>], batch_size: usize) -> Vec<PlannedChunk> {
    let mut plan = Vec::new();
    for (si, s) in sessions.iter().enumerate() {
        let len = s.records.len();
        if len < 2 * WINDOW_LEN {
            continue;
        }
        let first = WINDOW_LEN - 1;
        let last = len - WINDOW_LEN; // inclusive last sequence start
        let mut start = first;
        while start <= last {
            let n = (last - start + 1).min(batch_size);
            plan.push(PlannedChunk {
                session: si,
                spec: ChunkSpec {
                    first_start: start,
                    num_seqs: n,
                },
            });
            start += n;
        }
    }
    plan
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mean loss over a list of chunks, weighted by sequence count
/// (forward passes only).
fn dataset_loss<T: Scalar>(
    pred: &GrfPredictor<T>,
    sessions: &[SessionData<T>],
    plan: &[PlannedChunk],
    weights: &LossWeights<T>,
) -> Result<LossValue<T>, PredictorError> {
    let mut acc = LossValue::zero();
    let mut total_seqs = 0usize;
    for chunk in plan {
        let graph = build_loss_graph(pred, &sessions[chunk.session], chunk.spec, weights)?;
        let mut v = graph.value();
        let w = T::from_f64(chunk.spec.num_seqs as f64);
        v.scale(w);
        acc.add(&v);
        total_seqs += chunk.spec.num_seqs;
    }
    acc.scale(T::one() / T::from_f64(total_seqs as f64));
    Ok(acc)
}

/// Train one configuration and return the validation-selected model.
///
/// Deterministic given `(seed, config, dataset)`: initialization, chunk
/// shuffling, and every reduction run in a fixed order.
pub fn train<T: Scalar>(
    train_split: &LoadedSplit<T>,
    val_split: &LoadedSplit<T>,
    predictor_config: &PredictorConfig,
    config: &TrainConfig,
    ablation: AblationTag,
    base_weights: &LossWeights<T>,
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    let weights = ablation.apply(base_weights);
    weights.validate()?;
    let mut pred =
        GrfPredictor::<T>::init_from_meta(&train_split.meta, predictor_config, config.seed)?;
    let param_names = pred.param_names();
    let shapes: Vec<Vec<usize>> = pred
        .param_tensors()
        .iter()
        .map(|t| t.shape().to_vec())
        .collect();
    let mut adam = AdamState::<T>::new(&shapes);
    let clip = lit::<T>(config.clip_norm);

    let train_plan = plan_chunks(&train_split.sessions, config.batch_size);
    let val_plan = plan_chunks(&val_split.sessions, config.batch_size);
    if train_plan.is_empty() {
        return Err(TrainError::NoSequences);
    }

    let mut history: Vec<EpochRow> = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, GrfPredictor<T>)> = None;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_plan.len()).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(splitmix64(config.seed ^ (epoch as u64) << 20));
        order.shuffle(&mut rng);

        let mut epoch_acc = LossValue::<T>::zero();
        let mut epoch_seqs = 0usize;
        for &ci in &order {
            let chunk = &train_plan[ci];
            let graph = build_loss_graph(
                &pred,
                &train_split.sessions[chunk.session],
                chunk.spec,
                &weights,
            );
            let mut graph = match graph {
                Ok(g) => g,
                Err(PredictorError::Diff(crate::diffcore::DiffError::NonFinite { .. })) => {
                    return Err(TrainError::Diverged { epoch, history });
                }
                Err(e) => return Err(e.into()),
            };
            let mut value = graph.value();
            graph.backward()?;
            let mut grads = graph.gradients();
            for (gi, g) in grads.iter().enumerate() {
                if g.data().iter().any(|v| !v.is_finite()) {
                    return Err(TrainError::NanGradient {
                        param: param_names[gi].clone(),
                        epoch,
                    });
                }
            }
            clip_global_norm(&mut grads, clip);
            {
                let mut params = pred.param_tensors_mut()?;
                adam.step(&mut params, &grads, &config.adam);
            }
            let w = T::from_f64(chunk.spec.num_seqs as f64);
            value.scale(w);
            epoch_acc.add(&value);
            epoch_seqs += chunk.spec.num_seqs;
        }
        epoch_acc.scale(T::one() / T::from_f64(epoch_seqs as f64));

        let val = match dataset_loss(&pred, &val_split.sessions, &val_plan, &weights) {
            Ok(v) => v,
            Err(PredictorError::Diff(crate::diffcore::DiffError::NonFinite { .. })) => {
                return Err(TrainError::Diverged { epoch, history });
            }
            Err(e) => return Err(e.into()),
        };
        let val_total = val.total.as_f64();
        if !val_total.is_finite() {
            return Err(TrainError::Diverged { epoch, history });
        }
        history.push(EpochRow {
            epoch,
            train_total: epoch_acc.total.as_f64(),
            train_grf: epoch_acc.grf.as_f64(),
            train_dyn: epoch_acc.dynamics.as_f64(),
            train_swing: epoch_acc.swing.as_f64(),
            train_smooth: epoch_acc.smooth.as_f64(),
            val_total,
        });
        let improved = best.as_ref().map_or(true, |(_, v, _)| val_total < *v);
        if improved {
            best = Some((epoch, val_total, pred.clone()));
        }
    }

    let (best_epoch, best_val_loss, mut model) = best.expect("at least one epoch ran");
    model.freeze();
    Ok(TrainOutcome {
        model,
        info: CheckpointInfo {
            ablation: ablation.name().to_string(),
            seed: config.seed,
            epochs_trained: config.epochs,
            best_epoch,
            best_val_loss,
        },
        history,
    })
}

/// Per-foot accuracy metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootMetrics {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// Evaluation over a split: pooled per-foot metrics, optionally broken out
/// per motion mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: usize,
    pub per_foot: [FootMetrics; 2],
    pub per_mode: Vec<(String, [FootMetrics; 2], usize)>,
}

fn foot_metrics<T: Scalar>(pred: &[T], truth: &[T]) -> Result<FootMetrics, MetricsError> {
    Ok(FootMetrics {
        rmse: rmse(pred, truth)?.as_f64(),
        mae: mae(pred, truth)?.as_f64(),
        r2: r2(pred, truth)?.as_f64(),
    })
}

/// Run the frozen predictor over every full window of a split.
pub fn evaluate<T: Scalar>(
    pred: &GrfPredictor<T>,
    split: &LoadedSplit<T>,
    per_mode: bool,
) -> Result<EvalReport, TrainError> {
    check_dimension(split.meta.n, pred.n()).map_err(|_| {
        TrainError::Predictor(PredictorError::DimensionMismatch {
            what: "checkpoint vs dataset joint dimension",
            expected: split.meta.n,
            got: pred.n(),
        })
    })?;
    let mut by_mode: Vec<(String, [Vec<T>; 4])> = Vec::new();
    let mut pooled: [Vec<T>; 4] = [vec![], vec![], vec![], vec![]];
    for session in &split.sessions {
        let mode = session.mode.name().to_string();
        if per_mode && !by_mode.iter().any(|(m, _)| *m == mode) {
            by_mode.push((mode.clone(), [vec![], vec![], vec![], vec![]]));
        }
        for t in WINDOW_LEN - 1..session.records.len() {
            let window = window_at(session, t)?;
            let rec = &session.records[t];
            let f = pred.predict(&window, &rec.jn)?;
            pooled[0].push(f[0]);
            pooled[1].push(rec.f_gt[0]);
            pooled[2].push(f[1]);
            pooled[3].push(rec.f_gt[1]);
            if per_mode {
                let slot = by_mode
                    .iter_mut()
                    .find(|(m, _)| *m == mode)
                    .expect("mode registered");
                slot.1[0].push(f[0]);
                slot.1[1].push(rec.f_gt[0]);
                slot.1[2].push(f[1]);
                slot.1[3].push(rec.f_gt[1]);
            }
        }
    }
    let per_foot = [
        foot_metrics(&pooled[0], &pooled[1])?,
        foot_metrics(&pooled[2], &pooled[3])?,
    ];
    let mut per_mode_rows = Vec::new();
    for (mode, cols) in by_mode {
        per_mode_rows.push((
            mode,
            [
                foot_metrics(&cols[0], &cols[1])?,
                foot_metrics(&cols[2], &cols[3])?,
            ],
            cols[0].len(),
        ));
    }
    Ok(EvalReport {
        records: pooled[0].len(),
        per_foot,
        per_mode: per_mode_rows,
    })
}

/// One row of the ablation results table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: String,
    pub foot: String,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

/// Outcome of the full C1–C5 sweep.
#[derive(Debug)]
pub struct AblationOutcome<T> {
    pub runs: Vec<(AblationTag, TrainOutcome<T>, EvalReport)>,
}

impl<T> AblationOutcome<T> {
    pub fn rows(&self) -> Vec<AblationRow> {
        let mut rows = Vec::new();
        for (tag, _, report) in &self.runs {
            for (fi, name) in ["left", "right"].iter().enumerate() {
                rows.push(AblationRow {
                    config: tag.name().to_string(),
                    foot: name.to_string(),
                    rmse: report.per_foot[fi].rmse,
                    mae: report.per_foot[fi].mae,
                    r2: report.per_foot[fi].r2,
                });
            }
        }
        rows
    }
}

/// Train every configuration C1..C5 sequentially and evaluate each on the
/// test split.
pub fn run_ablation_suite<T: Scalar>(
    train_split: &LoadedSplit<T>,
    val_split: &LoadedSplit<T>,
    test_split: &LoadedSplit<T>,
    predictor_config: &PredictorConfig,
    config: &TrainConfig,
    base_weights: &LossWeights<T>,
) -> Result<AblationOutcome<T>, TrainError> {
    let mut runs = Vec::new();
    for tag in AblationTag::ALL {
        let outcome = train(
            train_split,
            val_split,
            predictor_config,
            config,
            tag,
            base_weights,
        )?;
        let report = evaluate(&outcome.model, test_split, false)?;
        runs.push((tag, outcome, report));
    }
    Ok(AblationOutcome { runs })
}

/// History file in the documented column order.
pub fn history_csv(history: &[EpochRow]) -> String {
    let mut out =
        String::from("epoch, train_total, train_grf, train_dyn, train_swing, train_smooth, val_total\n");
    for r in history {
        let _ = writeln!(
            out,
            "{}, {}, {}, {}, {}, {}, {}",
            r.epoch, r.train_total, r.train_grf, r.train_dyn, r.train_swing, r.train_smooth, r.val_total
        );
    }
    out
}

/// Ablation results file in the documented column order.
pub fn results_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from("config, foot, rmse, mae, r2\n");
    for r in rows {
        let _ = writeln!(out, "{}, {}, {}, {}, {}", r.config, r.foot, r.rmse, r.mae, r.r2);
    }
    out
}

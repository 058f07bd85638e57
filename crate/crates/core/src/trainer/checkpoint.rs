//! Human-inspectable JSON checkpoints.
//!
//! The file stores the structural config, normalization data, every
//! parameter tensor as a flat list, and run provenance (ablation tag, seed,
//! selection info). Serialization round-trips bitwise, so a reloaded model
//! reproduces predictions exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::{GrfPredictor, NormStats, PredictorConfig, PredictorError};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("checkpoint {path}: {what}")]
    Format { path: PathBuf, what: String },
    #[error("checkpoint version mismatch: file has {found}, this build reads {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint dimension mismatch: file has n={found}, expected n={expected}")]
    Dimension { found: usize, expected: usize },
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Run provenance stored alongside the parameters.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckpointInfo {
    pub ablation: String,
    pub seed: u64,
    pub epochs_trained: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub version: u32,
    pub n: usize,
    pub config: PredictorConfig,
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
    pub force_mean: [f64; 2],
    pub force_std: [f64; 2],
    pub info: CheckpointInfo,
    pub params: Vec<NamedTensor>,
}

pub fn save_checkpoint<T: Scalar>(
    path: &Path,
    pred: &GrfPredictor<T>,
    info: &CheckpointInfo,
) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let names = pred.param_names();
    let params = names
        .into_iter()
        .zip(pred.param_tensors())
        .map(|(name, t)| NamedTensor {
            name,
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.as_f64()).collect(),
        })
        .collect();
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        n: pred.n(),
        config: pred.config().clone(),
        input_min: pred.input_norm().min().iter().map(|v| v.as_f64()).collect(),
        input_max: pred.input_norm().max().iter().map(|v| v.as_f64()).collect(),
        force_mean: [
            pred.norm_stats().mean()[0].as_f64(),
            pred.norm_stats().mean()[1].as_f64(),
        ],
        force_std: [
            pred.norm_stats().std()[0].as_f64(),
            pred.norm_stats().std()[1].as_f64(),
        ],
        info: info.clone(),
        params,
    };
    let json = serde_json::to_string_pretty(&file).map_err(|e| CheckpointError::Format {
        path: path.to_path_buf(),
        what: e.to_string(),
    })?;
    fs::write(path, json).map_err(io_err)
}

pub fn load_checkpoint<T: Scalar>(
    path: &Path,
) -> Result<(GrfPredictor<T>, CheckpointInfo), CheckpointError> {
    let io_err = |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    };
    let text = fs::read_to_string(path).map_err(io_err)?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| CheckpointError::Format {
        path: path.to_path_buf(),
        what: e.to_string(),
    })?;
    if file.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: file.version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let stats = NormStats::new(
        [
            T::from_f64(file.force_mean[0]),
            T::from_f64(file.force_mean[1]),
        ],
        [
            T::from_f64(file.force_std[0]),
            T::from_f64(file.force_std[1]),
        ],
    )?;
    let mut pred = GrfPredictor::init(
        file.n,
        &file.config,
        file.input_min.iter().map(|&v| T::from_f64(v)).collect(),
        file.input_max.iter().map(|&v| T::from_f64(v)).collect(),
        stats,
        file.info.seed,
    )?;
    let names = pred.param_names();
    if names.len() != file.params.len() {
        return Err(CheckpointError::Format {
            path: path.to_path_buf(),
            what: format!(
                "parameter count mismatch: file has {}, model has {}",
                file.params.len(),
                names.len()
            ),
        });
    }
    {
        let mut tensors = pred.param_tensors_mut()?;
        for ((name, slot), stored) in names.iter().zip(tensors.iter_mut()).zip(&file.params) {
            if *name != stored.name || slot.shape() != stored.shape.as_slice() {
                return Err(CheckpointError::Format {
                    path: path.to_path_buf(),
                    what: format!(
                        "parameter mismatch: file has {} {:?}, model expects {} {:?}",
                        stored.name,
                        stored.shape,
                        name,
                        slot.shape()
                    ),
                });
            }
            for (dst, &src) in slot.data_mut().iter_mut().zip(&stored.data) {
                *dst = T::from_f64(src);
            }
        }
    }
    Ok((pred, file.info))
}

/// Reject a checkpoint whose joint dimension differs from the dataset's.
pub fn check_dimension(expected_n: usize, found_n: usize) -> Result<(), CheckpointError> {
    if expected_n != found_n {
        return Err(CheckpointError::Dimension {
            found: found_n,
            expected: expected_n,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::PredictorConfig;
    use crate::seqnet::WINDOW_LEN;
    use crate::simgen::{
        feature_bounds, force_stats, generate_session, BipedModel, FootwearPreset, MotionMode,
    };
    use crate::predictor::window_at;
    use tempfile::tempdir;

    fn fresh_predictor(seed: u64) -> (GrfPredictor<f64>, crate::simgen::SessionData<f64>) {
        let model = BipedModel::<f64>::default();
        let preset = FootwearPreset::by_name("barefoot").unwrap();
        let session =
            generate_session(&model, MotionMode::Forward, &preset, seed, 3.0, 50.0, 0.0).unwrap();
        let sessions = vec![session];
        let (mean, std) = force_stats(&sessions);
        let (fmin, fmax) = feature_bounds(&sessions);
        let stats = NormStats::new([mean[0], mean[1]], [std[0], std[1]]).unwrap();
        let pred =
            GrfPredictor::init(7, &PredictorConfig::default(), fmin, fmax, stats, seed).unwrap();
        (pred, sessions.into_iter().next().unwrap())
    }

    #[test]
    fn roundtrip_reproduces_predictions_bitwise() {
        let (pred, session) = fresh_predictor(77);
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let info = CheckpointInfo {
            ablation: "C1".into(),
            seed: 77,
            epochs_trained: 0,
            best_epoch: 0,
            best_val_loss: f64::MAX,
        };
        save_checkpoint(&path, &pred, &info).unwrap();
        let (loaded, info2) = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(info, info2);
        for t in (WINDOW_LEN - 1..session.records.len()).step_by(3) {
            let w = window_at(&session, t).unwrap();
            let a = pred.predict(&w, &session.records[t].jn).unwrap();
            let b = loaded.predict(&w, &session.records[t].jn).unwrap();
            assert_eq!(a[0].to_bits(), b[0].to_bits(), "t={t}");
            assert_eq!(a[1].to_bits(), b[1].to_bits(), "t={t}");
        }
    }

    #[test]
    fn version_and_dimension_mismatches_are_named() {
        let (pred, _) = fresh_predictor(78);
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let info = CheckpointInfo {
            ablation: "C3".into(),
            seed: 78,
            epochs_trained: 1,
            best_epoch: 1,
            best_val_loss: 0.5,
        };
        save_checkpoint(&path, &pred, &info).unwrap();
        // Corrupt the version field.
        let text = fs::read_to_string(&path).unwrap();
        let bumped = text.replace("\"version\": 1", "\"version\": 99");
        fs::write(&path, bumped).unwrap();
        let err = load_checkpoint::<f64>(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("99") && msg.contains('1'), "{msg}");

        let err = check_dimension(7, 29).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("n=29") && msg.contains("n=7"), "{msg}");
    }

    #[test]
    fn checkpoint_records_ablation_tag_and_stats() {
        let (pred, _) = fresh_predictor(79);
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.json");
        let info = CheckpointInfo {
            ablation: "C4".into(),
            seed: 79,
            epochs_trained: 12,
            best_epoch: 9,
            best_val_loss: 0.25,
        };
        save_checkpoint(&path, &pred, &info).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let file: CheckpointFile = serde_json::from_str(&text).unwrap();
        assert_eq!(file.info.ablation, "C4");
        assert_eq!(file.force_mean[0], pred.norm_stats().mean()[0]);
        assert_eq!(file.force_std[1], pred.norm_stats().std()[1]);
    }
}

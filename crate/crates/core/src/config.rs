//! Plain-text run configuration: `key = value` sections, dotted-path
//! overrides, and effective-config snapshots.
//!
//! Unknown keys are rejected at deserialization so typos fail loudly, and
//! every run writes back the merged settings it actually used.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::SplOptions;
use crate::predictor::{LossWeights, PredictorConfig};
use crate::simgen::GenConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Parse(String),
    #[error("config override '{key}': {what}")]
    Override { key: String, what: String },
}

/// Reward-shaping settings consumed by the evaluation report.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RewardSettings {
    /// Impact penalty scale (1/N²).
    pub alpha: f64,
    /// Uniform diagonal stiffness (N·m/rad).
    pub kp: f64,
    /// Uniform diagonal damping (N·m·s/rad).
    pub kd: f64,
    /// Optional staged schedule for `alpha`; the value at step 0 applies
    /// until the next entry.
    pub alpha_schedule: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub step: u64,
    pub alpha: f64,
}

impl Default for RewardSettings {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            kp: 100.0,
            kd: 2.0,
            alpha_schedule: Vec::new(),
        }
    }
}

/// Acoustic analysis settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AcousticsSettings {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Report the energy mean instead of the arithmetic dB mean.
    pub energy_average: bool,
    /// Pascal per digital full-scale unit (default: full scale ↦ 1 Pa).
    pub calibration_pa_fs: f64,
}

impl Default for AcousticsSettings {
    fn default() -> Self {
        let spl = SplOptions::default();
        Self {
            frame_ms: spl.frame_ms,
            hop_ms: spl.hop_ms,
            energy_average: spl.energy_average,
            calibration_pa_fs: 1.0,
        }
    }
}

impl AcousticsSettings {
    pub fn spl_options(&self) -> SplOptions {
        SplOptions {
            frame_ms: self.frame_ms,
            hop_ms: self.hop_ms,
            energy_average: self.energy_average,
        }
    }
}

/// Every tunable of the toolkit, one section per subsystem.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub data: GenConfig,
    pub model: PredictorConfig,
    pub train: TrainConfig,
    pub loss: LossWeights<f64>,
    pub reward: RewardSettings,
    pub acoustics: AcousticsSettings,
}

impl RunSettings {
    /// Load from an optional file, then apply dotted-path overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| ConfigError::Io {
                    path: p.display().to_string(),
                    source,
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError::Parse(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let value = toml::Value::Table(table);
        value
            .try_into()
            .map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Serialized snapshot of the effective settings.
    pub fn snapshot(&self) -> Result<String, ConfigError> {
        toml::to_string_pretty(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<(), ConfigError> {
        fs::write(path, self.snapshot()?).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Apply one `section.key = value` override into the raw table.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let (key, raw) = item.split_once('=').ok_or_else(|| ConfigError::Override {
        key: item.to_string(),
        what: "expected dotted.key=value".into(),
    })?;
    let key = key.trim();
    let raw = raw.trim();
    if key.is_empty() {
        return Err(ConfigError::Override {
            key: item.to_string(),
            what: "empty key".into(),
        });
    }
    // Parse the value as a toml literal; fall back to a plain string.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cursor = table;
    let parts: Vec<&str> = key.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| ConfigError::Override {
            key: key.to_string(),
            what: format!("'{part}' is not a section"),
        })?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_snapshot() {
        let settings = RunSettings::default();
        let snap = settings.snapshot().unwrap();
        let table: toml::Table = snap.parse().unwrap();
        let back: RunSettings = toml::Value::Table(table).try_into().unwrap();
        assert_eq!(settings, back);
    }

    #[test]
    fn overrides_replace_nested_values() {
        let s = RunSettings::load(
            None,
            &[
                "train.epochs=3".into(),
                "train.adam.lr=0.01".into(),
                "loss.smooth=0.5".into(),
                "data.modes=[\"forward\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(s.train.epochs, 3);
        assert_eq!(s.train.adam.lr, 0.01);
        assert_eq!(s.loss.smooth, 0.5);
        assert_eq!(s.data.modes, vec!["forward".to_string()]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunSettings::load(None, &["train.epocs=3".into()]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("epocs"), "{msg}");
        let err = RunSettings::load(None, &["nonsense.key=1".into()]).unwrap_err();
        assert!(err.to_string().contains("nonsense"));
    }

    #[test]
    fn file_and_overrides_compose() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        fs::write(&path, "[train]\nepochs = 7\nseed = 9\n").unwrap();
        let s = RunSettings::load(Some(&path), &["train.epochs=11".into()]).unwrap();
        assert_eq!(s.train.epochs, 11);
        assert_eq!(s.train.seed, 9);
    }

    #[test]
    fn malformed_override_is_reported() {
        assert!(RunSettings::load(None, &["no-equals".into()]).is_err());
    }
}

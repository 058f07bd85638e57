//! Dataset assembly: inverse-dynamics-consistent records, split emission,
//! and CSV/metadata round-trips.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::ContactJacobian;
use crate::linalg::matvec;
use crate::scalar::Scalar;

use super::biped::{BipedModel, SimError, BIPED_N};
use super::dual::SimScalar;
use super::contact::{contact_force, FootwearPreset};
use super::trajectory::{sample_trajectory, MotionMode};

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("dataset io: {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("dataset parse: {path}:{line}: {what}")]
    Parse {
        path: PathBuf,
        line: usize,
        what: String,
    },
    #[error("dataset metadata: {0}")]
    Meta(String),
    #[error("record violates the joint-space force balance: residual {residual} exceeds {bound}")]
    ResidualViolation { residual: f64, bound: f64 },
}

/// One 50 Hz tick of ground-truth data.
#[derive(Debug, Clone)]
pub struct DatasetRecord<T> {
    /// Tick index within its session (restarts at 0 per session).
    pub tick: u64,
    pub mode: MotionMode,
    pub preset: String,
    pub q: Vec<T>,
    pub qd: Vec<T>,
    pub qdd: Vec<T>,
    pub jn: ContactJacobian<T>,
    pub f_gt: [T; 2],
    pub tau_eff: Vec<T>,
}

/// A contiguous recording session; windows never cross session boundaries.
#[derive(Debug, Clone)]
pub struct SessionData<T> {
    pub mode: MotionMode,
    pub preset: String,
    pub seed: u64,
    pub records: Vec<DatasetRecord<T>>,
}

/// Dataset split names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Generation configuration (defaults give ≥ 50 000 training records).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub seed: u64,
    pub modes: Vec<String>,
    pub presets: Vec<String>,
    pub train_sessions_per_combo: usize,
    pub val_sessions_per_combo: usize,
    pub test_sessions_per_combo: usize,
    /// Duration of each training session (seconds).
    pub session_secs: f64,
    /// Duration of each validation/test session (seconds).
    pub holdout_session_secs: f64,
    pub rate_hz: f64,
    /// Standard deviation of optional contact-force process noise (N).
    /// Zero (the default) disables it; records stay exactly consistent
    /// either way because actuation is derived after the noise.
    pub noise_std: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            modes: MotionMode::ALL.iter().map(|m| m.name().to_string()).collect(),
            presets: FootwearPreset::<f64>::default_names()
                .iter()
                .map(|s| s.to_string())
                .collect(),
            train_sessions_per_combo: 12,
            val_sessions_per_combo: 3,
            test_sessions_per_combo: 3,
            session_secs: 10.0,
            holdout_session_secs: 8.0,
            rate_hz: 50.0,
            noise_std: 0.0,
        }
    }
}

/// Per-session metadata entry.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionMeta {
    pub mode: String,
    pub preset: String,
    pub seed: u64,
    pub ticks: usize,
}

/// Physical model parameters, recorded so oracles can be rebuilt exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BipedModelMeta {
    pub torso_mass: f64,
    pub torso_inertia: f64,
    pub hip_offset: f64,
    pub thigh_mass: f64,
    pub thigh_inertia: f64,
    pub thigh_len: f64,
    pub shank_mass: f64,
    pub shank_inertia: f64,
    pub shank_len: f64,
    pub gravity: f64,
}

impl BipedModelMeta {
    pub fn from_model<T: Scalar>(m: &BipedModel<T>) -> Self {
        Self {
            torso_mass: m.torso_mass.as_f64(),
            torso_inertia: m.torso_inertia.as_f64(),
            hip_offset: m.hip_offset.as_f64(),
            thigh_mass: m.thigh_mass.as_f64(),
            thigh_inertia: m.thigh_inertia.as_f64(),
            thigh_len: m.thigh_len.as_f64(),
            shank_mass: m.shank_mass.as_f64(),
            shank_inertia: m.shank_inertia.as_f64(),
            shank_len: m.shank_len.as_f64(),
            gravity: m.gravity.as_f64(),
        }
    }

    pub fn to_model<T: Scalar>(&self) -> BipedModel<T> {
        BipedModel {
            torso_mass: T::from_f64(self.torso_mass),
            torso_inertia: T::from_f64(self.torso_inertia),
            hip_offset: T::from_f64(self.hip_offset),
            thigh_mass: T::from_f64(self.thigh_mass),
            thigh_inertia: T::from_f64(self.thigh_inertia),
            thigh_len: T::from_f64(self.thigh_len),
            shank_mass: T::from_f64(self.shank_mass),
            shank_inertia: T::from_f64(self.shank_inertia),
            shank_len: T::from_f64(self.shank_len),
            gravity: T::from_f64(self.gravity),
        }
    }
}

/// Sidecar metadata for one emitted split. Force statistics and feature
/// ranges always come from the training split.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetMeta {
    pub version: u32,
    pub n: usize,
    pub rate_hz: f64,
    pub split: String,
    pub records: usize,
    pub generator_seed: u64,
    pub noise_std: f64,
    pub stats_from_split: String,
    pub force_mean: [f64; 2],
    pub force_std: [f64; 2],
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    pub sessions: Vec<SessionMeta>,
    pub model: BipedModelMeta,
}

/// Residual of the joint-space force balance for one record, evaluated with
/// the true model: `‖M q̈ + C q̇ + G − τ_eff − Jᵀ f‖∞`.
pub fn record_residual<T: SimScalar>(
    model: &BipedModel<T>,
    rec: &DatasetRecord<T>,
) -> Result<T, SimError> {
    let m = model.mass_matrix(&rec.q)?;
    let c = model.coriolis_matrix(&rec.q, &rec.qd)?;
    let g = model.gravity(&rec.q)?;
    let m_qdd = matvec(&m, &rec.qdd);
    let c_qd = matvec(&c, &rec.qd);
    let mut worst = T::zero();
    for i in 0..BIPED_N {
        let jtf = rec.jn.row(0)[i] * rec.f_gt[0] + rec.jn.row(1)[i] * rec.f_gt[1];
        let r = m_qdd[i] + c_qd[i] + g[i] - rec.tau_eff[i] - jtf;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

const RESIDUAL_BOUND: f64 = 1e-8;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic per-session seed, disjoint across splits and sessions.
pub fn session_seed(root: u64, split: Split, combo_index: usize, session_index: usize) -> u64 {
    let tag = match split {
        Split::Train => 1u64,
        Split::Val => 2,
        Split::Test => 3,
    };
    splitmix64(root ^ (tag << 56) ^ ((combo_index as u64) << 24) ^ session_index as u64)
}

/// Generate one session of records by inverse dynamics from a prescribed
/// trajectory. Every record satisfies the joint-space force balance by
/// construction; that is asserted against [`RESIDUAL_BOUND`].
pub fn generate_session<T: SimScalar>(
    model: &BipedModel<T>,
    mode: MotionMode,
    preset: &FootwearPreset<T>,
    seed: u64,
    duration_secs: f64,
    rate_hz: f64,
    noise_std: f64,
) -> Result<SessionData<T>, DataError> {
    model.validate()?;
    let mut traj = sample_trajectory(model, mode, T::from_f64(duration_secs), seed)?;
    traj.shift_mean(1, preset.base_lift - preset.extra_depth);
    let ticks = (duration_secs * rate_hz).floor() as u64;
    let dt = T::from_f64(1.0 / rate_hz);
    let mut noise_rng = NoiseSource::new(splitmix64(seed ^ 0x6e6f697365), noise_std);
    let mut records = Vec::with_capacity(ticks as usize);
    for tick in 0..ticks {
        let t = dt * T::from_f64(tick as f64);
        let (q, qd, qdd) = traj.eval(t);
        let (mut f, jn) = contact_force(model, &preset.contact, &q, &qd)?;
        for v in f.iter_mut() {
            if *v > T::zero() {
                *v = (*v + T::from_f64(noise_rng.next())).max(T::zero());
            }
        }
        let m = model.mass_matrix(&q)?;
        let c = model.coriolis_matrix(&q, &qd)?;
        let g = model.gravity(&q)?;
        let m_qdd = matvec(&m, &qdd);
        let c_qd = matvec(&c, &qd);
        let tau_eff: Vec<T> = (0..BIPED_N)
            .map(|i| {
                let jtf = jn.row(0)[i] * f[0] + jn.row(1)[i] * f[1];
                m_qdd[i] + c_qd[i] + g[i] - jtf
            })
            .collect();
        let rec = DatasetRecord {
            tick,
            mode,
            preset: preset.name.clone(),
            q,
            qd,
            qdd,
            jn,
            f_gt: f,
            tau_eff,
        };
        let residual = record_residual(model, &rec)?.as_f64();
        if residual > RESIDUAL_BOUND {
            return Err(DataError::ResidualViolation {
                residual,
                bound: RESIDUAL_BOUND,
            });
        }
        records.push(rec);
    }
    Ok(SessionData {
        mode,
        preset: preset.name.clone(),
        seed,
        records,
    })
}

/// Gaussian process noise via Box-Muller over a deterministic stream.
struct NoiseSource {
    rng: rand_chacha::ChaCha20Rng,
    std: f64,
}

impl NoiseSource {
    fn new(seed: u64, std: f64) -> Self {
        use rand::SeedableRng;
        Self {
            rng: rand_chacha::ChaCha20Rng::seed_from_u64(seed),
            std,
        }
    }

    fn next(&mut self) -> f64 {
        if self.std == 0.0 {
            return 0.0;
        }
        use rand::Rng;
        let u1: f64 = self.rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = self.rng.gen_range(0.0..1.0);
        self.std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// Population mean and standard deviation of the ground-truth forces.
pub fn force_stats<T: Scalar>(sessions: &[SessionData<T>]) -> ([f64; 2], [f64; 2]) {
    let mut mean = [0.0f64; 2];
    let mut count = 0usize;
    for s in sessions {
        for r in &s.records {
            mean[0] += r.f_gt[0].as_f64();
            mean[1] += r.f_gt[1].as_f64();
            count += 1;
        }
    }
    for m in mean.iter_mut() {
        *m /= count as f64;
    }
    let mut var = [0.0f64; 2];
    for s in sessions {
        for r in &s.records {
            var[0] += (r.f_gt[0].as_f64() - mean[0]).powi(2);
            var[1] += (r.f_gt[1].as_f64() - mean[1]).powi(2);
        }
    }
    for v in var.iter_mut() {
        *v = (*v / count as f64).sqrt();
    }
    (mean, var)
}

/// Min/max per input feature (`[q; q̇; q̈]`, width 3n).
pub fn feature_bounds<T: Scalar>(sessions: &[SessionData<T>]) -> (Vec<f64>, Vec<f64>) {
    let width = 3 * BIPED_N;
    let mut min = vec![f64::INFINITY; width];
    let mut max = vec![f64::NEG_INFINITY; width];
    for s in sessions {
        for r in &s.records {
            for (offset, vecs) in [(0, &r.q), (BIPED_N, &r.qd), (2 * BIPED_N, &r.qdd)] {
                for (i, v) in vecs.iter().enumerate() {
                    let v = v.as_f64();
                    min[offset + i] = min[offset + i].min(v);
                    max[offset + i] = max[offset + i].max(v);
                }
            }
        }
    }
    (min, max)
}

/// Report of one emitted dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmitReport {
    pub out_dir: PathBuf,
    pub train_records: usize,
    pub val_records: usize,
    pub test_records: usize,
    pub train_sessions: usize,
    pub val_sessions: usize,
    pub test_sessions: usize,
}

fn csv_header() -> String {
    let mut h = String::from("tick, mode, preset");
    for prefix in ["q", "qd", "qdd"] {
        for i in 0..BIPED_N {
            let _ = write!(h, ", {prefix}_{i}");
        }
    }
    for r in 0..2 {
        for i in 0..BIPED_N {
            let _ = write!(h, ", Jn_{r}{i}");
        }
    }
    h.push_str(", fz_L, fz_R");
    for i in 0..BIPED_N {
        let _ = write!(h, ", tau_{i}");
    }
    h
}

fn write_split_csv<T: Scalar>(path: &Path, sessions: &[SessionData<T>]) -> Result<(), DataError> {
    let io_err = |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = String::new();
    out.push_str(&csv_header());
    out.push('\n');
    for s in sessions {
        for r in &s.records {
            let _ = write!(out, "{}, {}, {}", r.tick, r.mode, r.preset);
            for v in r.q.iter().chain(&r.qd).chain(&r.qdd) {
                let _ = write!(out, ", {}", v.as_f64());
            }
            for v in r.jn.matrix().data() {
                let _ = write!(out, ", {}", v.as_f64());
            }
            let _ = write!(out, ", {}, {}", r.f_gt[0].as_f64(), r.f_gt[1].as_f64());
            for v in &r.tau_eff {
                let _ = write!(out, ", {}", v.as_f64());
            }
            out.push('\n');
        }
    }
    let mut file = fs::File::create(path).map_err(io_err)?;
    file.write_all(out.as_bytes()).map_err(io_err)
}

/// Generate and write all three splits plus sidecar metadata.
///
/// Sessions are generated in a fixed order (split → mode → preset → index)
/// from seeds derived off the root seed, so output is bitwise reproducible.
pub fn emit_dataset<T: SimScalar>(
    model: &BipedModel<T>,
    cfg: &GenConfig,
    out_dir: &Path,
) -> Result<EmitReport, DataError> {
    if cfg.rate_hz <= 0.0 || cfg.session_secs <= 0.0 {
        return Err(DataError::Meta(
            "rate_hz and session_secs must be positive".into(),
        ));
    }
    let modes: Vec<MotionMode> = cfg
        .modes
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_, _>>()?;
    let presets: Vec<FootwearPreset<T>> = cfg
        .presets
        .iter()
        .map(|p| FootwearPreset::by_name(p))
        .collect::<Result<_, _>>()?;
    fs::create_dir_all(out_dir).map_err(|source| DataError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let mut all: Vec<(Split, Vec<SessionData<T>>)> = Vec::new();
    for split in Split::ALL {
        let per_combo = match split {
            Split::Train => cfg.train_sessions_per_combo,
            Split::Val => cfg.val_sessions_per_combo,
            Split::Test => cfg.test_sessions_per_combo,
        };
        let secs = match split {
            Split::Train => cfg.session_secs,
            _ => cfg.holdout_session_secs,
        };
        let mut sessions = Vec::new();
        let mut combo = 0usize;
        for mode in &modes {
            for preset in &presets {
                for s in 0..per_combo {
                    let seed = session_seed(cfg.seed, split, combo, s);
                    sessions.push(generate_session(
                        model, *mode, preset, seed, secs, cfg.rate_hz, cfg.noise_std,
                    )?);
                }
                combo += 1;
            }
        }
        all.push((split, sessions));
    }

    let train_sessions = &all[0].1;
    let (force_mean, force_std) = force_stats(train_sessions);
    let (feature_min, feature_max) = feature_bounds(train_sessions);

    let mut counts = [0usize; 3];
    let mut session_counts = [0usize; 3];
    for (idx, (split, sessions)) in all.iter().enumerate() {
        let records: usize = sessions.iter().map(|s| s.records.len()).sum();
        counts[idx] = records;
        session_counts[idx] = sessions.len();
        let csv_path = out_dir.join(format!("{}.csv", split.name()));
        write_split_csv(&csv_path, sessions)?;
        let meta = DatasetMeta {
            version: 1,
            n: BIPED_N,
            rate_hz: cfg.rate_hz,
            split: split.name().to_string(),
            records,
            generator_seed: cfg.seed,
            noise_std: cfg.noise_std,
            stats_from_split: Split::Train.name().to_string(),
            force_mean,
            force_std,
            feature_min: feature_min.clone(),
            feature_max: feature_max.clone(),
            sessions: sessions
                .iter()
                .map(|s| SessionMeta {
                    mode: s.mode.name().to_string(),
                    preset: s.preset.clone(),
                    seed: s.seed,
                    ticks: s.records.len(),
                })
                .collect(),
            model: BipedModelMeta::from_model(model),
        };
        let meta_path = out_dir.join(format!("{}.meta.json", split.name()));
        let json = serde_json::to_string_pretty(&meta)
            .map_err(|e| DataError::Meta(e.to_string()))?;
        fs::write(&meta_path, json).map_err(|source| DataError::Io {
            path: meta_path.clone(),
            source,
        })?;
    }

    Ok(EmitReport {
        out_dir: out_dir.to_path_buf(),
        train_records: counts[0],
        val_records: counts[1],
        test_records: counts[2],
        train_sessions: session_counts[0],
        val_sessions: session_counts[1],
        test_sessions: session_counts[2],
    })
}

/// A split loaded back from disk.
#[derive(Debug, Clone)]
pub struct LoadedSplit<T> {
    pub meta: DatasetMeta,
    pub sessions: Vec<SessionData<T>>,
}

impl<T: Scalar> LoadedSplit<T> {
    pub fn total_records(&self) -> usize {
        self.sessions.iter().map(|s| s.records.len()).sum()
    }
}

/// Load one split (CSV plus metadata). Sessions are recovered from tick
/// resets, then cross-checked against the metadata session list.
pub fn load_split<T: Scalar>(dir: &Path, split: Split) -> Result<LoadedSplit<T>, DataError> {
    let meta_path = dir.join(format!("{}.meta.json", split.name()));
    let meta_text = fs::read_to_string(&meta_path).map_err(|source| DataError::Io {
        path: meta_path.clone(),
        source,
    })?;
    let meta: DatasetMeta =
        serde_json::from_str(&meta_text).map_err(|e| DataError::Meta(e.to_string()))?;
    if meta.n != BIPED_N {
        return Err(DataError::Meta(format!(
            "dataset joint dimension {} does not match the planar model ({})",
            meta.n, BIPED_N
        )));
    }
    let csv_path = dir.join(format!("{}.csv", split.name()));
    let text = fs::read_to_string(&csv_path).map_err(|source| DataError::Io {
        path: csv_path.clone(),
        source,
    })?;
    let parse_err = |line: usize, what: String| DataError::Parse {
        path: csv_path.clone(),
        line,
        what,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(0, "empty file".into()))?;
    if header != csv_header() {
        return Err(parse_err(1, "unexpected header".into()));
    }
    let n = BIPED_N;
    let expected_cols = 3 + 3 * n + 2 * n + 2 + n;
    let mut sessions: Vec<SessionData<T>> = Vec::new();
    let mut prev_tick: Option<u64> = None;
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != expected_cols {
            return Err(parse_err(
                lineno + 1,
                format!("expected {expected_cols} columns, got {}", cols.len()),
            ));
        }
        let tick: u64 = cols[0]
            .parse()
            .map_err(|e| parse_err(lineno + 1, format!("tick: {e}")))?;
        let mode: MotionMode = cols[1]
            .parse()
            .map_err(|e: SimError| parse_err(lineno + 1, e.to_string()))?;
        let preset = cols[2].to_string();
        let mut floats = Vec::with_capacity(expected_cols - 3);
        for c in &cols[3..] {
            let v: f64 = c
                .parse()
                .map_err(|e| parse_err(lineno + 1, format!("float: {e}")))?;
            floats.push(T::from_f64(v));
        }
        let q = floats[0..n].to_vec();
        let qd = floats[n..2 * n].to_vec();
        let qdd = floats[2 * n..3 * n].to_vec();
        let jn = ContactJacobian::from_rows(
            &floats[3 * n..4 * n],
            &floats[4 * n..5 * n],
        )
        .map_err(|e| parse_err(lineno + 1, e.to_string()))?;
        let f_gt = [floats[5 * n], floats[5 * n + 1]];
        let tau_eff = floats[5 * n + 2..5 * n + 2 + n].to_vec();
        let record = DatasetRecord {
            tick,
            mode,
            preset: preset.clone(),
            q,
            qd,
            qdd,
            jn,
            f_gt,
            tau_eff,
        };
        let new_session = match prev_tick {
            None => true,
            Some(prev) => tick <= prev,
        };
        if new_session {
            sessions.push(SessionData {
                mode,
                preset,
                seed: 0,
                records: vec![record],
            });
        } else {
            sessions
                .last_mut()
                .expect("session exists after first record")
                .records
                .push(record);
        }
        prev_tick = Some(tick);
    }
    if sessions.len() != meta.sessions.len() {
        return Err(DataError::Meta(format!(
            "metadata lists {} sessions, file holds {}",
            meta.sessions.len(),
            sessions.len()
        )));
    }
    for (s, m) in sessions.iter_mut().zip(&meta.sessions) {
        if s.records.len() != m.ticks {
            return Err(DataError::Meta(format!(
                "session tick count mismatch: {} vs {}",
                s.records.len(),
                m.ticks
            )));
        }
        s.seed = m.seed;
    }
    Ok(LoadedSplit { meta, sessions })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::Side;
    use tempfile::tempdir;

    fn small_cfg() -> GenConfig {
        GenConfig {
            seed: 11,
            session_secs: 4.0,
            holdout_session_secs: 4.0,
            train_sessions_per_combo: 1,
            val_sessions_per_combo: 1,
            test_sessions_per_combo: 1,
            modes: vec!["forward".into(), "in-place".into()],
            presets: vec!["barefoot".into(), "stiff-heel".into()],
            ..GenConfig::default()
        }
    }

    #[test]
    fn default_config_yields_at_least_fifty_thousand_training_records() {
        let cfg = GenConfig::default();
        let combos = cfg.modes.len() * cfg.presets.len();
        let expected =
            combos * cfg.train_sessions_per_combo * (cfg.session_secs * cfg.rate_hz) as usize;
        assert!(expected >= 50_000, "planned records {expected}");
    }

    #[test]
    fn every_record_is_consistent_and_nonnegative() {
        let model = BipedModel::<f64>::default();
        let preset = FootwearPreset::by_name("barefoot").unwrap();
        let session =
            generate_session(&model, MotionMode::Forward, &preset, 3, 6.0, 50.0, 0.0).unwrap();
        assert_eq!(session.records.len(), 300);
        let mut contact_ticks = 0usize;
        for rec in &session.records {
            assert!(rec.f_gt[0] >= 0.0 && rec.f_gt[1] >= 0.0);
            let r = record_residual(&model, rec).unwrap();
            assert!(r < 1e-8, "residual {r}");
            if rec.f_gt[0] > 0.0 || rec.f_gt[1] > 0.0 {
                contact_ticks += 1;
            }
            // Airborne feet carry exactly zero force.
            for side in Side::BOTH {
                let pz = model.foot_height(&rec.q, side).unwrap();
                if pz > 0.0 {
                    assert_eq!(rec.f_gt[side.index()], 0.0);
                }
            }
        }
        assert!(contact_ticks > 100, "trajectory rarely touches ground");
    }

    #[test]
    fn perturbing_actuation_shifts_residual_exactly() {
        let model = BipedModel::<f64>::default();
        let preset = FootwearPreset::by_name("cushioned").unwrap();
        let session =
            generate_session(&model, MotionMode::InPlace, &preset, 5, 1.0, 50.0, 0.0).unwrap();
        let mut rec = session.records[10].clone();
        let eta = 0.125;
        rec.tau_eff[3] += eta;
        let r = record_residual(&model, &rec).unwrap();
        assert!((r - eta).abs() < 1e-9, "residual {r} vs eta {eta}");
    }

    #[test]
    fn emit_is_bitwise_deterministic() {
        let model = BipedModel::<f64>::default();
        let cfg = small_cfg();
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        emit_dataset(&model, &cfg, d1.path()).unwrap();
        emit_dataset(&model, &cfg, d2.path()).unwrap();
        for name in ["train.csv", "val.csv", "test.csv", "train.meta.json"] {
            let a = fs::read(d1.path().join(name)).unwrap();
            let b = fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }

    #[test]
    fn splits_use_disjoint_session_seeds() {
        let cfg = small_cfg();
        let mut seen = std::collections::HashSet::new();
        for split in Split::ALL {
            for combo in 0..4 {
                for s in 0..2 {
                    assert!(seen.insert(session_seed(cfg.seed, split, combo, s)));
                }
            }
        }
    }

    #[test]
    fn roundtrip_preserves_records_and_stats() {
        let model = BipedModel::<f64>::default();
        let cfg = small_cfg();
        let dir = tempdir().unwrap();
        let report = emit_dataset(&model, &cfg, dir.path()).unwrap();
        assert_eq!(report.train_records, 4 * 200);

        let loaded: LoadedSplit<f64> = load_split(dir.path(), Split::Train).unwrap();
        assert_eq!(loaded.total_records(), report.train_records);
        assert_eq!(loaded.sessions.len(), 4);

        // Stats recomputed from the emitted file match the metadata exactly.
        let (mean, std) = force_stats(&loaded.sessions);
        assert_eq!(mean, loaded.meta.force_mean);
        assert_eq!(std, loaded.meta.force_std);
        let (fmin, fmax) = feature_bounds(&loaded.sessions);
        assert_eq!(fmin, loaded.meta.feature_min);
        assert_eq!(fmax, loaded.meta.feature_max);

        // Every reloaded record still satisfies the force balance.
        let remodel: BipedModel<f64> = loaded.meta.model.to_model();
        for s in &loaded.sessions {
            for rec in &s.records {
                assert!(record_residual(&remodel, rec).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn mode_filter_restricts_emitted_modes() {
        let model = BipedModel::<f64>::default();
        let mut cfg = small_cfg();
        cfg.modes = vec!["forward".into()];
        let dir = tempdir().unwrap();
        emit_dataset(&model, &cfg, dir.path()).unwrap();
        let loaded: LoadedSplit<f64> = load_split(dir.path(), Split::Test).unwrap();
        for s in &loaded.sessions {
            assert_eq!(s.mode, MotionMode::Forward);
            for r in &s.records {
                assert_eq!(r.mode, MotionMode::Forward);
            }
        }
    }

    #[test]
    fn stiff_heel_preset_lifts_base_but_keeps_contact() {
        let model = BipedModel::<f64>::default();
        let bare = FootwearPreset::by_name("barefoot").unwrap();
        let heel = FootwearPreset::by_name("stiff-heel").unwrap();
        let sb = generate_session(&model, MotionMode::Forward, &bare, 9, 4.0, 50.0, 0.0).unwrap();
        let sh = generate_session(&model, MotionMode::Forward, &heel, 9, 4.0, 50.0, 0.0).unwrap();
        let base_z = |s: &SessionData<f64>| {
            s.records.iter().map(|r| r.q[1]).sum::<f64>() / s.records.len() as f64
        };
        assert!(base_z(&sh) > base_z(&sb) + 0.04, "sole lift missing");
        let contact_frac = |s: &SessionData<f64>| {
            s.records
                .iter()
                .filter(|r| r.f_gt[0] > 0.0 || r.f_gt[1] > 0.0)
                .count() as f64
                / s.records.len() as f64
        };
        assert!(contact_frac(&sh) > 0.3, "stiff-heel rarely in contact");
    }
}

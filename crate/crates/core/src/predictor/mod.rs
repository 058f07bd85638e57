//! Full force predictor: structured dynamics heads, sequence network,
//! damped least-squares recovery, and the four-term training loss.

mod graph;

pub use graph::{build_loss_graph, loss_reference, ChunkSpec, LossGraph, LossValue};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{DiffError, Tensor};
use crate::dynamics::{
    contact_generalized_force, coriolis_matrix, dls_solve, project_nonneg, tri_entry_count,
    ContactJacobian, DlsConfig, DynError, InertiaHead, PotentialHead,
};
use crate::kan::{FeatureNormalizer, KanError, KanLayer, KanStack, SplineGrid};
use crate::scalar::{lit, Scalar};
use crate::seqnet::{ProprioWindow, SeqArch, SeqError, SequenceNet, WINDOW_LEN};
use crate::simgen::{DatasetMeta, SessionData};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("predictor: dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("predictor: invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("predictor: parameters are frozen")]
    Frozen,
    #[error("predictor: invalid batch: {0}")]
    InvalidBatch(String),
    #[error(transparent)]
    Dyn(#[from] DynError),
    #[error(transparent)]
    Kan(#[from] KanError),
    #[error(transparent)]
    Seq(#[from] SeqError),
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Per-foot mean/std of the ground-truth vertical force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats<T> {
    mean: [T; 2],
    std: [T; 2],
}

impl<T: Scalar> NormStats<T> {
    pub fn new(mean: [T; 2], std: [T; 2]) -> Result<Self, PredictorError> {
        if std.iter().any(|s| !(*s > T::zero())) {
            return Err(PredictorError::InvalidConfig(format!(
                "force std must be > 0 per foot, got [{}, {}]",
                std[0], std[1]
            )));
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> [T; 2] {
        self.mean
    }

    pub fn std(&self) -> [T; 2] {
        self.std
    }

    pub fn normalize(&self, f: [T; 2]) -> [T; 2] {
        [
            (f[0] - self.mean[0]) / self.std[0],
            (f[1] - self.mean[1]) / self.std[1],
        ]
    }

    pub fn denormalize(&self, f_norm: [T; 2]) -> [T; 2] {
        [
            f_norm[0] * self.std[0] + self.mean[0],
            f_norm[1] * self.std[1] + self.mean[1],
        ]
    }

    /// Normalized value corresponding to zero force.
    pub fn normalized_zero(&self) -> [T; 2] {
        self.normalize([T::zero(); 2])
    }
}

/// Binary contact mask from thresholded ground truth; the boundary counts
/// as contact.
pub fn contact_mask<T: Scalar>(f_gt: [T; 2], threshold: T) -> [bool; 2] {
    [f_gt[0] >= threshold, f_gt[1] >= threshold]
}

/// Loss term weights. Ablations zero individual weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights<T> {
    pub grf: T,
    pub dynamics: T,
    pub swing: T,
    pub smooth: T,
}

impl<T: Scalar> Default for LossWeights<T> {
    fn default() -> Self {
        // The smoothing term acts on raw forces (N²) while the supervised
        // term is variance-normalized; at walking force scales a raw-unit
        // weight above ~1e-4 low-passes the impact transients away, so the
        // default sits two decades below the supervised term's effective
        // per-newton weight.
        Self {
            grf: T::one(),
            dynamics: lit(0.1),
            swing: lit(0.1),
            smooth: lit(1e-5),
        }
    }
}

impl<T: Scalar> LossWeights<T> {
    pub fn validate(&self) -> Result<(), PredictorError> {
        for (name, v) in [
            ("grf", self.grf),
            ("dynamics", self.dynamics),
            ("swing", self.swing),
            ("smooth", self.smooth),
        ] {
            if v < T::zero() {
                return Err(PredictorError::InvalidConfig(format!(
                    "loss weight {name} must be >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Structural configuration of the predictor.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    pub grid_size: usize,
    pub spline_degree: usize,
    pub dls_lambda: f64,
    pub inertia_epsilon: f64,
    pub contact_threshold: f64,
    pub seq_arch: SeqArch,
    /// Position features pinned to a constant (cyclic coordinates).
    pub masked_positions: Vec<usize>,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            grid_size: 8,
            spline_degree: 3,
            dls_lambda: 0.05,
            inertia_epsilon: 1e-3,
            contact_threshold: 10.0,
            seq_arch: SeqArch::Tcn,
            masked_positions: vec![0],
        }
    }
}

impl PredictorConfig {
    fn masked_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.masked_positions.iter().copied()
    }
}

/// The assembled force predictor.
#[derive(Debug, Clone)]
pub struct GrfPredictor<T> {
    n: usize,
    inertia: InertiaHead<T>,
    potential: PotentialHead<T>,
    seqnet: SequenceNet<T>,
    dls: DlsConfig<T>,
    norm_stats: NormStats<T>,
    /// Per-feature bounds over `[q; q̇; q̈]` (width 3n).
    input_norm: FeatureNormalizer<T>,
    contact_threshold: T,
    config: PredictorConfig,
    frozen: bool,
}

impl<T: Scalar> GrfPredictor<T> {
    /// Randomly initialized predictor for a dataset described by `meta`.
    pub fn init_from_meta(
        meta: &DatasetMeta,
        config: &PredictorConfig,
        seed: u64,
    ) -> Result<Self, PredictorError> {
        let n = meta.n;
        let input_min: Vec<T> = meta.feature_min.iter().map(|&v| T::from_f64(v)).collect();
        let input_max: Vec<T> = meta.feature_max.iter().map(|&v| T::from_f64(v)).collect();
        let norm_stats = NormStats::new(
            [
                T::from_f64(meta.force_mean[0]),
                T::from_f64(meta.force_mean[1]),
            ],
            [
                T::from_f64(meta.force_std[0]),
                T::from_f64(meta.force_std[1]),
            ],
        )?;
        Self::init(n, config, input_min, input_max, norm_stats, seed)
    }

    pub fn init(
        n: usize,
        config: &PredictorConfig,
        mut input_min: Vec<T>,
        mut input_max: Vec<T>,
        norm_stats: NormStats<T>,
        seed: u64,
    ) -> Result<Self, PredictorError> {
        if input_min.len() != 3 * n || input_max.len() != 3 * n {
            return Err(PredictorError::DimensionMismatch {
                what: "input bounds",
                expected: 3 * n,
                got: input_min.len(),
            });
        }
        // The horizontal base coordinate is cyclic: the dynamics are
        // translation-invariant and its drift would act as a time index.
        // Collapsing its bounds pins the feature to a constant, which also
        // zeroes every derivative taken along it.
        for masked in config.masked_features() {
            if masked < 3 * n {
                input_min[masked] = T::zero();
                input_max[masked] = T::zero();
            }
        }
        let grid = SplineGrid::new(
            config.grid_size,
            config.spline_degree,
            lit(-1.0),
            lit(1.0),
        )?;
        let input_norm = FeatureNormalizer::from_bounds(input_min, input_max)?;
        let q_norm = FeatureNormalizer::from_bounds(
            input_norm.min()[..n].to_vec(),
            input_norm.max()[..n].to_vec(),
        )?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let inertia_layer = KanLayer::init(n, tri_entry_count(n), grid.clone(), &mut rng);
        let potential_layer = KanLayer::init(n, 1, grid, &mut rng);
        let seqnet = SequenceNet::init(n, config.seq_arch, &mut rng);
        let inertia = InertiaHead::new(
            n,
            KanStack::new(vec![inertia_layer]),
            Some(q_norm.clone()),
            lit(config.inertia_epsilon),
        )?;
        let potential = PotentialHead::new(n, KanStack::new(vec![potential_layer]), Some(q_norm))?;
        let dls = DlsConfig::new(lit(config.dls_lambda))?;
        Ok(Self {
            n,
            inertia,
            potential,
            seqnet,
            dls,
            norm_stats,
            input_norm,
            contact_threshold: lit(config.contact_threshold),
            config: config.clone(),
            frozen: false,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn inertia_head(&self) -> &InertiaHead<T> {
        &self.inertia
    }

    pub fn potential_head(&self) -> &PotentialHead<T> {
        &self.potential
    }

    pub fn sequence_net(&self) -> &SequenceNet<T> {
        &self.seqnet
    }

    pub fn dls(&self) -> &DlsConfig<T> {
        &self.dls
    }

    pub fn norm_stats(&self) -> &NormStats<T> {
        &self.norm_stats
    }

    pub fn input_norm(&self) -> &FeatureNormalizer<T> {
        &self.input_norm
    }

    pub fn contact_threshold(&self) -> T {
        self.contact_threshold
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Normalize a raw window for the sequence network.
    pub fn normalize_window(&self, window: &ProprioWindow<T>) -> Result<ProprioWindow<T>, PredictorError> {
        let width = 3 * self.n;
        if window.n() != self.n {
            return Err(PredictorError::DimensionMismatch {
                what: "window width",
                expected: width,
                got: 3 * window.n(),
            });
        }
        let mut data = Vec::with_capacity(WINDOW_LEN * width);
        for f in 0..WINDOW_LEN {
            let row = window.frame(f);
            for (i, &v) in row.iter().enumerate() {
                data.push(self.input_norm.normalize(i, v));
            }
        }
        Ok(ProprioWindow::new(Tensor::new(vec![WINDOW_LEN, width], data)?)?)
    }

    /// Effective actuation estimate for a raw window.
    pub fn actuation(&self, window: &ProprioWindow<T>) -> Result<Vec<T>, PredictorError> {
        let norm = self.normalize_window(window)?;
        Ok(self.seqnet.forward(&norm)?)
    }

    /// Contact force from explicit dynamics quantities (newest frame) and a
    /// supplied actuation estimate. `lambda` defaults to the configured
    /// damping when `None`.
    pub fn force_from_dynamics(
        &self,
        q: &[T],
        qd: &[T],
        qdd: &[T],
        tau_eff: &[T],
        jacobian: &ContactJacobian<T>,
        lambda: Option<T>,
    ) -> Result<[T; 2], PredictorError> {
        let m = self.inertia.assemble_inertia(q)?;
        let c = coriolis_matrix(&self.inertia, q, qd)?;
        let g = self.potential.gravity_vector(q)?;
        let tau_c = contact_generalized_force(&m, &c, &g, qdd, qd, tau_eff)?;
        let cfg = match lambda {
            Some(l) => DlsConfig::new(l)?,
            None => self.dls,
        };
        let raw = dls_solve(jacobian, &tau_c, &cfg)?;
        Ok(project_nonneg(raw))
    }

    /// Predict the bilateral vertical contact force for one raw window.
    /// Dynamics quantities come from the newest frame; the contact Jacobian
    /// is supplied externally per tick. Both outputs are ≥ 0.
    pub fn predict(
        &self,
        window: &ProprioWindow<T>,
        jacobian: &ContactJacobian<T>,
    ) -> Result<[T; 2], PredictorError> {
        if jacobian.n() != self.n {
            return Err(PredictorError::DimensionMismatch {
                what: "contact jacobian columns",
                expected: self.n,
                got: jacobian.n(),
            });
        }
        let tau_eff = self.actuation(window)?;
        let (q, qd, qdd) = window.newest_split();
        self.force_from_dynamics(q, qd, qdd, &tau_eff, jacobian, None)
    }

    /// Contact mask of a ground-truth force pair under this predictor's
    /// threshold.
    pub fn contact_mask(&self, f_gt: [T; 2]) -> [bool; 2] {
        contact_mask(f_gt, self.contact_threshold)
    }

    // ── parameter access (for the optimizer and checkpoints) ──────────

    /// Stable names of every learnable tensor, in registration order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (prefix, layer) in [
            ("inertia", &self.inertia.stack().layers()[0]),
            ("potential", &self.potential.stack().layers()[0]),
        ] {
            for i in 0..layer.in_dim() {
                names.push(format!("{prefix}.coef{i}"));
            }
            names.push(format!("{prefix}.base_w"));
            names.push(format!("{prefix}.spline_w"));
        }
        for n in self.seqnet.param_names() {
            names.push(format!("seqnet.{n}"));
        }
        names
    }

    pub fn param_tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = Vec::new();
        for head in [&self.inertia.stack().layers()[0], &self.potential.stack().layers()[0]] {
            out.extend(head.coef().iter());
            out.push(head.base_w());
            out.push(head.spline_w());
        }
        out.extend(self.seqnet.params().iter());
        out
    }

    pub fn param_tensors_mut(&mut self) -> Result<Vec<&mut Tensor<T>>, PredictorError> {
        if self.frozen {
            return Err(PredictorError::Frozen);
        }
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        let (inertia, potential, seqnet) =
            (&mut self.inertia, &mut self.potential, &mut self.seqnet);
        for head in [
            &mut inertia.stack_mut().layers_mut()[0],
            &mut potential.stack_mut().layers_mut()[0],
        ] {
            // Split borrows: coefficient list first, then the weight mats.
            let (coef, rest) = head.split_params_mut();
            out.extend(coef.iter_mut());
            out.push(rest.0);
            out.push(rest.1);
        }
        out.extend(seqnet.params_mut().iter_mut());
        Ok(out)
    }
}

/// Build the raw window ending at tick `t` of a session (requires
/// `t ≥ WINDOW_LEN − 1`).
pub fn window_at<T: Scalar>(
    session: &SessionData<T>,
    t: usize,
) -> Result<ProprioWindow<T>, PredictorError> {
    if t + 1 < WINDOW_LEN || t >= session.records.len() {
        return Err(PredictorError::InvalidBatch(format!(
            "window ending at tick {t} out of range (session has {} ticks)",
            session.records.len()
        )));
    }
    let n = session.records[0].q.len();
    let mut data = Vec::with_capacity(WINDOW_LEN * 3 * n);
    for rec in &session.records[t + 1 - WINDOW_LEN..=t] {
        data.extend_from_slice(&rec.q);
        data.extend_from_slice(&rec.qd);
        data.extend_from_slice(&rec.qdd);
    }
    Ok(ProprioWindow::new(Tensor::new(vec![WINDOW_LEN, 3 * n], data)?)?)
}

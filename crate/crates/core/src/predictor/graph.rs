//! Training-loss graph construction.
//!
//! A batch is a chunk of consecutive training sequences inside one session.
//! Consecutive sequences overlap heavily (stride 1), so the graph evaluates
//! every unique tick once and assembles the per-sequence means with constant
//! multiplicity weights; the result equals the naive per-sequence loss
//! exactly (same terms, grouped by tick).
//!
//! Everything here is expressed with tape primitives only. The contact
//! Jacobian is data, so the damped pseudoinverse is folded into constant
//! per-tick projection rows, and the spline bases of the (data) inputs enter
//! as constant design matrices; all parameter dependence flows through
//! matrix products, elementwise ops, and the listed activations.

use crate::diffcore::{NodeId, Tape, Tensor};
use crate::dynamics::{dls_projection_matrix, strict_lower_pairs, tri_entry_count};
use crate::kan::{tape_forward, tape_input_derivative, KanDesign, KanLayerNodes};
use crate::scalar::Scalar;
use crate::seqnet::{tape_forward_chunk, SeqNetNodes, WINDOW_LEN};
use crate::simgen::SessionData;

use super::{GrfPredictor, LossWeights, PredictorError};

/// One contiguous batch of training sequences.
#[derive(Debug, Clone, Copy)]
pub struct ChunkSpec {
    /// Start tick of the first sequence (≥ `WINDOW_LEN − 1`).
    pub first_start: usize,
    /// Number of consecutive sequences (stride 1).
    pub num_seqs: usize,
}

/// Loss total plus its four components (all in evaluation order).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue<T> {
    pub total: T,
    pub grf: T,
    pub dynamics: T,
    pub swing: T,
    pub smooth: T,
}

impl<T: Scalar> LossValue<T> {
    pub fn zero() -> Self {
        Self {
            total: T::zero(),
            grf: T::zero(),
            dynamics: T::zero(),
            swing: T::zero(),
            smooth: T::zero(),
        }
    }

    pub fn add(&mut self, o: &Self) {
        self.total += o.total;
        self.grf += o.grf;
        self.dynamics += o.dynamics;
        self.swing += o.swing;
        self.smooth += o.smooth;
    }

    pub fn scale(&mut self, c: T) {
        self.total *= c;
        self.grf *= c;
        self.dynamics *= c;
        self.swing *= c;
        self.smooth *= c;
    }
}

/// A built loss graph, ready for evaluation and one backward pass.
pub struct LossGraph<T> {
    tape: Tape<T>,
    param_nodes: Vec<NodeId>,
    total: NodeId,
    grf: NodeId,
    dynamics: NodeId,
    swing: NodeId,
    smooth: NodeId,
}

impl<T: Scalar> LossGraph<T> {
    pub fn value(&self) -> LossValue<T> {
        let read = |id: NodeId| self.tape.value(id).item().expect("scalar component");
        LossValue {
            total: read(self.total),
            grf: read(self.grf),
            dynamics: read(self.dynamics),
            swing: read(self.swing),
            smooth: read(self.smooth),
        }
    }

    /// Backward pass from the weighted total.
    pub fn backward(&mut self) -> Result<(), PredictorError> {
        self.tape.backward(self.total)?;
        Ok(())
    }

    /// Parameter gradients aligned with [`GrfPredictor::param_tensors`].
    /// Values are not validated; the trainer checks finiteness and reports
    /// the offending parameter by name.
    pub fn gradients(&self) -> Vec<Tensor<T>> {
        self.param_nodes
            .iter()
            .map(|&id| {
                let shape = self.tape.value(id).shape().to_vec();
                Tensor::new_unvalidated(shape, self.tape.grad_or_zeros(id))
            })
            .collect()
    }

    pub fn tape_len(&self) -> usize {
        self.tape.len()
    }
}

struct TriConsts {
    /// `[E−n, n]` scatter of entry e to its row a_e.
    sa: NodeId,
    /// `[n, E−n]` gather transpose of `sa`.
    sa_t: NodeId,
    /// `[E−n, n]` scatter of entry e to its column b_e.
    sb: NodeId,
    /// `[n, E−n]` gather transpose of `sb`.
    sb_t: NodeId,
}

fn tri_consts<T: Scalar>(tape: &mut Tape<T>, n: usize) -> TriConsts {
    let pairs = strict_lower_pairs(n);
    let e = pairs.len();
    let mut sa = Tensor::zeros(vec![e, n]);
    let mut sb = Tensor::zeros(vec![e, n]);
    let mut sa_t = Tensor::zeros(vec![n, e]);
    let mut sb_t = Tensor::zeros(vec![n, e]);
    for (idx, &(a, b)) in pairs.iter().enumerate() {
        sa.data_mut()[idx * n + a] = T::one();
        sa_t.data_mut()[a * e + idx] = T::one();
        sb.data_mut()[idx * n + b] = T::one();
        sb_t.data_mut()[b * e + idx] = T::one();
    }
    TriConsts {
        sa: tape.constant(sa),
        sa_t: tape.constant(sa_t),
        sb: tape.constant(sb),
        sb_t: tape.constant(sb_t),
    }
}

/// Lower-triangular factor in split form: `diag` is `[U, n]` (already
/// positively transformed where applicable), `offd` is `[U, E−n]` in the
/// strict-lower layout of [`strict_lower_pairs`].
struct TriFactor {
    diag: NodeId,
    offd: NodeId,
}

/// `Lᵀ v` per tick: `(Lᵀv)_b = diag_b v_b + Σ_{e: b_e=b} offd_e v_{a_e}`.
fn tri_vec_t<T: Scalar>(
    tape: &mut Tape<T>,
    tri: &TriFactor,
    v: NodeId,
    consts: &TriConsts,
) -> Result<NodeId, PredictorError> {
    let term1 = tape.mul(tri.diag, v)?;
    let gathered = tape.matmul(v, consts.sa_t)?;
    let prod = tape.mul(tri.offd, gathered)?;
    let term2 = tape.matmul(prod, consts.sb)?;
    Ok(tape.add(term1, term2)?)
}

/// `L v` per tick: `(Lv)_a = diag_a v_a + Σ_{e: a_e=a} offd_e v_{b_e}`.
fn tri_vec<T: Scalar>(
    tape: &mut Tape<T>,
    tri: &TriFactor,
    v: NodeId,
    consts: &TriConsts,
) -> Result<NodeId, PredictorError> {
    let term1 = tape.mul(tri.diag, v)?;
    let gathered = tape.matmul(v, consts.sb_t)?;
    let prod = tape.mul(tri.offd, gathered)?;
    let term2 = tape.matmul(prod, consts.sa)?;
    Ok(tape.add(term1, term2)?)
}

/// Column `k` of a `[U, n]` tensor tiled to width `w`.
fn tile_column<T: Scalar>(rows: &Tensor<T>, k: usize, w: usize) -> Tensor<T> {
    let (u, n) = (rows.shape()[0], rows.shape()[1]);
    let mut out = Tensor::zeros(vec![u, w]);
    for r in 0..u {
        let v = rows.data()[r * n + k];
        for c in 0..w {
            out.data_mut()[r * w + c] = v;
        }
    }
    out
}

/// Rows-of-values helpers over the chunk's ticks.
fn gather_rows<T: Scalar, F: Fn(usize) -> Vec<T>>(u: usize, width: usize, f: F) -> Tensor<T> {
    let mut data = Vec::with_capacity(u * width);
    for i in 0..u {
        data.extend(f(i));
    }
    Tensor::new(vec![u, width], data).expect("finite rows")
}

/// Build the loss graph for one chunk. Equals the mean of the per-sequence
/// losses over the chunk's `num_seqs` sequences.
pub fn build_loss_graph<T: Scalar>(
    pred: &GrfPredictor<T>,
    session: &SessionData<T>,
    chunk: ChunkSpec,
    weights: &LossWeights<T>,
) -> Result<LossGraph<T>, PredictorError> {
    weights.validate()?;
    let n = pred.n();
    let h = WINDOW_LEN;
    let s0 = chunk.first_start;
    let b = chunk.num_seqs;
    if b == 0 {
        return Err(PredictorError::InvalidBatch("empty chunk".into()));
    }
    if s0 + 1 < h {
        return Err(PredictorError::InvalidBatch(format!(
            "first sequence start {s0} lacks window history"
        )));
    }
    let last_tick = s0 + b - 1 + (h - 1);
    if last_tick >= session.records.len() {
        return Err(PredictorError::InvalidBatch(format!(
            "chunk needs tick {last_tick}, session has {}",
            session.records.len()
        )));
    }
    if session.records[0].q.len() != n {
        return Err(PredictorError::DimensionMismatch {
            what: "session joint dimension",
            expected: n,
            got: session.records[0].q.len(),
        });
    }
    let inertia_layer = {
        let layers = pred.inertia_head().stack().layers();
        if layers.len() != 1 {
            return Err(PredictorError::InvalidConfig(
                "training requires single-layer spline heads".into(),
            ));
        }
        &layers[0]
    };
    let potential_layer = {
        let layers = pred.potential_head().stack().layers();
        if layers.len() != 1 {
            return Err(PredictorError::InvalidConfig(
                "training requires single-layer spline heads".into(),
            ));
        }
        &layers[0]
    };

    let u = b + h - 1; // unique predicted ticks
    let e = tri_entry_count(n);
    let eo = e - n; // strict-lower entries
    let ticks: Vec<usize> = (0..u).map(|i| s0 + i).collect();
    let recs = &session.records;

    // ── constant data ────────────────────────────────────────────────
    let q_rows = gather_rows(u, n, |i| recs[ticks[i]].q.clone());
    let qd_rows = gather_rows(u, n, |i| recs[ticks[i]].qd.clone());
    let qdd_rows = gather_rows(u, n, |i| recs[ticks[i]].qdd.clone());
    let eps = pred.inertia_head().epsilon();
    let eps_qdd = qdd_rows.map(|v| v * eps);

    let frames_norm = {
        let rows = u + h - 1;
        let width = 3 * n;
        let first_frame = s0 + 1 - h;
        gather_rows(rows, width, |i| {
            let r = &recs[first_frame + i];
            let mut row = Vec::with_capacity(width);
            for (off, vs) in [(0, &r.q), (n, &r.qd), (2 * n, &r.qdd)] {
                for (j, &v) in vs.iter().enumerate() {
                    row.push(pred.input_norm().normalize(off + j, v));
                }
            }
            row
        })
    };

    let p_rows: [Tensor<T>; 2] = {
        let mut p0 = Vec::with_capacity(u * n);
        let mut p1 = Vec::with_capacity(u * n);
        for &t in &ticks {
            let p = dls_projection_matrix(&recs[t].jn, pred.dls());
            p0.extend_from_slice(&p.data()[..n]);
            p1.extend_from_slice(&p.data()[n..]);
        }
        [
            Tensor::new(vec![u, n], p0)?,
            Tensor::new(vec![u, n], p1)?,
        ]
    };
    let j_rows: [Tensor<T>; 2] = [
        gather_rows(u, n, |i| recs[ticks[i]].jn.row(0).to_vec()),
        gather_rows(u, n, |i| recs[ticks[i]].jn.row(1).to_vec()),
    ];

    // Per-tick sequence multiplicities and consecutive-pair multiplicities.
    let tick_weight = |i: usize| -> T {
        let lo = i.saturating_sub(h - 1);
        let hi = i.min(b - 1);
        T::from_f64((hi + 1 - lo) as f64)
    };
    let pair_weight = |i: usize| -> T {
        // pair between tick i and i+1; sequences s with s ≤ i, i+1 ≤ s+h−1
        let lo = i.saturating_sub(h - 2);
        let hi = i.min(b - 1);
        T::from_f64(if hi + 1 > lo { (hi + 1 - lo) as f64 } else { 0.0 })
    };

    let w2 = gather_rows(u, 2, |i| vec![tick_weight(i); 2]);
    let wn = gather_rows(u, n, |i| vec![tick_weight(i); n]);
    let pair_w = gather_rows(u - 1, 2, |i| vec![pair_weight(i); 2]);

    let stats = pred.norm_stats();
    let f_gt_norm = gather_rows(u, 2, |i| {
        let f = stats.normalize(recs[ticks[i]].f_gt);
        vec![f[0], f[1]]
    });
    let inv_sigma = gather_rows(u, 2, |_| {
        vec![T::one() / stats.std()[0], T::one() / stats.std()[1]]
    });
    let mu_rows = gather_rows(u, 2, |_| vec![stats.mean()[0], stats.mean()[1]]);
    let swing_w = gather_rows(u, 2, |i| {
        let c = pred.contact_mask(recs[ticks[i]].f_gt);
        let w = tick_weight(i);
        vec![
            if c[0] { T::zero() } else { w },
            if c[1] { T::zero() } else { w },
        ]
    });

    let q_design = KanDesign::build(
        inertia_layer.grid(),
        pred.inertia_head().normalizer(),
        &q_rows,
    );

    // ── tape ─────────────────────────────────────────────────────────
    let mut tape = Tape::new();
    let inertia_nodes = KanLayerNodes::register(&mut tape, inertia_layer);
    let potential_nodes = KanLayerNodes::register(&mut tape, potential_layer);
    let seq_nodes = SeqNetNodes::register(&mut tape, pred.sequence_net());
    let mut param_nodes = Vec::new();
    param_nodes.extend(inertia_nodes.coef.iter().copied());
    param_nodes.push(inertia_nodes.base_w);
    param_nodes.push(inertia_nodes.spline_w);
    param_nodes.extend(potential_nodes.coef.iter().copied());
    param_nodes.push(potential_nodes.base_w);
    param_nodes.push(potential_nodes.spline_w);
    param_nodes.extend(seq_nodes.params.iter().copied());

    let ones_u = tape.constant(Tensor::filled(vec![u, 1], T::one())?);
    let consts = tri_consts(&mut tape, n);
    let qd_node = tape.constant(qd_rows.clone());
    let qdd_node = tape.constant(qdd_rows);

    // factor entries and the softplus-positive diagonal
    let l_flat = tape_forward(&mut tape, inertia_layer, &inertia_nodes, &q_design, ones_u)?;
    let diag_raw = tape.slice(l_flat, 1, 0, n)?;
    let offd = tape.slice(l_flat, 1, n, eo)?;
    let diag = tape.softplus(diag_raw);
    let sig = tape.sigmoid(diag_raw);
    let l_tri = TriFactor { diag, offd };

    // M q̈ = L (Lᵀ q̈) + ε q̈
    let u1 = tri_vec_t(&mut tape, &l_tri, qdd_node, &consts)?;
    let l_u1 = tri_vec(&mut tape, &l_tri, u1, &consts)?;
    let eps_qdd_node = tape.constant(eps_qdd);
    let m_qdd = tape.add(l_u1, eps_qdd_node)?;

    // factor input-derivatives, chained through the softplus diagonal
    let mut dl_factors = Vec::with_capacity(n);
    for k in 0..n {
        let dlk = tape_input_derivative(&mut tape, &inertia_nodes, &q_design, ones_u, k)?;
        let ddiag_raw = tape.slice(dlk, 1, 0, n)?;
        let ddiag = tape.mul(sig, ddiag_raw)?;
        let doffd = tape.slice(dlk, 1, n, eo)?;
        dl_factors.push(TriFactor {
            diag: ddiag,
            offd: doffd,
        });
    }

    // dLq̇ = Σ_k q̇_k ∂L/∂q_k (velocity-weighted factor derivative)
    let mut dlqd_diag: Option<NodeId> = None;
    let mut dlqd_offd: Option<NodeId> = None;
    for (k, dlk) in dl_factors.iter().enumerate() {
        let tile_n = tape.constant(tile_column(&qd_rows, k, n));
        let tile_e = tape.constant(tile_column(&qd_rows, k, eo));
        let td = tape.mul(tile_n, dlk.diag)?;
        let te = tape.mul(tile_e, dlk.offd)?;
        dlqd_diag = Some(match dlqd_diag {
            None => td,
            Some(prev) => tape.add(prev, td)?,
        });
        dlqd_offd = Some(match dlqd_offd {
            None => te,
            Some(prev) => tape.add(prev, te)?,
        });
    }
    let dlqd = TriFactor {
        diag: dlqd_diag.expect("n ≥ 1"),
        offd: dlqd_offd.expect("n ≥ 1"),
    };

    // C q̇ = Ṁ q̇ − t, with Ṁ q̇ = dLq̇ (Lᵀq̇) + L (dLq̇ᵀ q̇) and
    // t_i = (∂L/∂q_iᵀ q̇) · (Lᵀ q̇) per tick.
    let w_vec = tri_vec_t(&mut tape, &l_tri, qd_node, &consts)?;
    let a1 = tri_vec(&mut tape, &dlqd, w_vec, &consts)?;
    let inner = tri_vec_t(&mut tape, &dlqd, qd_node, &consts)?;
    let a2 = tri_vec(&mut tape, &l_tri, inner, &consts)?;
    let a_qd = tape.add(a1, a2)?;
    let mut t_cols = Vec::with_capacity(n);
    for dlk in &dl_factors {
        let r = tri_vec_t(&mut tape, dlk, qd_node, &consts)?;
        let prod = tape.mul(r, w_vec)?;
        t_cols.push(tape.sum(prod, Some(1))?);
    }
    let t_stack = tape.concat(&t_cols, 1)?;
    let c_qd = tape.sub(a_qd, t_stack)?;

    // gravity from the potential head
    let mut g_cols = Vec::with_capacity(n);
    for k in 0..n {
        g_cols.push(tape_input_derivative(
            &mut tape,
            &potential_nodes,
            &q_design,
            ones_u,
            k,
        )?);
    }
    let g = tape.concat(&g_cols, 1)?;

    // effective actuation over the chunk
    let tau_eff = tape_forward_chunk(&mut tape, pred.sequence_net(), &seq_nodes, &frames_norm, u)?;

    // τ_c = M q̈ + C q̇ + G − τ_eff
    let mc = tape.add(m_qdd, c_qd)?;
    let mcg = tape.add(mc, g)?;
    let tau_c = tape.sub(mcg, tau_eff)?;

    // damped pseudoinverse rows are constant per tick
    let p0 = tape.constant(p_rows[0].clone());
    let p1 = tape.constant(p_rows[1].clone());
    let pr0 = tape.mul(p0, tau_c)?;
    let fr0 = tape.sum(pr0, Some(1))?;
    let pr1 = tape.mul(p1, tau_c)?;
    let fr1 = tape.sum(pr1, Some(1))?;
    let f_raw = tape.concat(&[fr0, fr1], 1)?;
    let f_pred = tape.relu(f_raw);

    // ── loss components ──────────────────────────────────────────────
    let per_tick = T::from_f64((b * h) as f64);
    let per_pair = T::from_f64((b * (h - 1)) as f64);

    let mu_node = tape.constant(mu_rows);
    let inv_sigma_node = tape.constant(inv_sigma);
    let centered = tape.sub(f_pred, mu_node)?;
    let f_pred_norm = tape.mul(centered, inv_sigma_node)?;
    let f_gt_norm_node = tape.constant(f_gt_norm);
    let grf_diff = tape.sub(f_pred_norm, f_gt_norm_node)?;
    let grf_sq = tape.square(grf_diff);
    let w2_node = tape.constant(w2);
    let grf_weighted = tape.mul(grf_sq, w2_node)?;
    let grf_sum = tape.sum(grf_weighted, None)?;
    let l_grf = tape.scale(grf_sum, T::one() / per_tick)?;

    let ones_row_n = tape.constant(Tensor::filled(vec![1, n], T::one())?);
    let f_l = tape.slice(f_pred, 1, 0, 1)?;
    let f_r = tape.slice(f_pred, 1, 1, 1)?;
    let f_l_tile = tape.matmul(f_l, ones_row_n)?;
    let f_r_tile = tape.matmul(f_r, ones_row_n)?;
    let j0 = tape.constant(j_rows[0].clone());
    let j1 = tape.constant(j_rows[1].clone());
    let jtf_l = tape.mul(f_l_tile, j0)?;
    let jtf_r = tape.mul(f_r_tile, j1)?;
    let jtf = tape.add(jtf_l, jtf_r)?;
    let dyn_diff = tape.sub(tau_c, jtf)?;
    let dyn_sq = tape.square(dyn_diff);
    let wn_node = tape.constant(wn);
    let dyn_weighted = tape.mul(dyn_sq, wn_node)?;
    let dyn_sum = tape.sum(dyn_weighted, None)?;
    let l_dyn = tape.scale(dyn_sum, T::one() / per_tick)?;

    // Swing: the normalized prediction minus normalized zero is f_pred/σ.
    let swing_term = tape.mul(f_pred, inv_sigma_node)?;
    let swing_sq = tape.square(swing_term);
    let swing_w_node = tape.constant(swing_w);
    let swing_weighted = tape.mul(swing_sq, swing_w_node)?;
    let swing_sum = tape.sum(swing_weighted, None)?;
    let l_swing = tape.scale(swing_sum, T::one() / per_tick)?;

    let newer = tape.slice(f_pred, 0, 1, u - 1)?;
    let older = tape.slice(f_pred, 0, 0, u - 1)?;
    let step = tape.sub(newer, older)?;
    let step_sq = tape.square(step);
    let pair_node = tape.constant(pair_w);
    let step_weighted = tape.mul(step_sq, pair_node)?;
    let smooth_sum = tape.sum(step_weighted, None)?;
    let l_smooth = tape.scale(smooth_sum, T::one() / per_pair)?;

    let mut total: Option<NodeId> = None;
    for (weight, comp) in [
        (weights.grf, l_grf),
        (weights.dynamics, l_dyn),
        (weights.swing, l_swing),
        (weights.smooth, l_smooth),
    ] {
        if weight > T::zero() {
            let term = tape.scale(comp, weight)?;
            total = Some(match total {
                None => term,
                Some(prev) => tape.add(prev, term)?,
            });
        }
    }
    let total = match total {
        Some(t) => t,
        None => tape.constant_scalar(T::zero()),
    };

    Ok(LossGraph {
        tape,
        param_nodes,
        total,
        grf: l_grf,
        dynamics: l_dyn,
        swing: l_swing,
        smooth: l_smooth,
    })
}

/// Reference loss: evaluate each sequence as its own single-sequence chunk
/// and average. Used as the slow oracle for the chunked fast path.
pub fn loss_reference<T: Scalar>(
    pred: &GrfPredictor<T>,
    session: &SessionData<T>,
    starts: &[usize],
    weights: &LossWeights<T>,
) -> Result<LossValue<T>, PredictorError> {
    if starts.is_empty() {
        return Err(PredictorError::InvalidBatch("no sequences".into()));
    }
    let mut acc = LossValue::zero();
    for &s in starts {
        let graph = build_loss_graph(
            pred,
            session,
            ChunkSpec {
                first_start: s,
                num_seqs: 1,
            },
            weights,
        )?;
        acc.add(&graph.value());
    }
    acc.scale(T::one() / T::from_f64(starts.len() as f64));
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{GrfPredictor, PredictorConfig};
    use crate::simgen::{
        feature_bounds, force_stats, generate_session, BipedModel, FootwearPreset, MotionMode,
    };
    use crate::predictor::NormStats;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn session_and_predictor(seed: u64) -> (SessionData<f64>, GrfPredictor<f64>) {
        let model = BipedModel::<f64>::default();
        let preset = FootwearPreset::by_name("barefoot").unwrap();
        let session =
            generate_session(&model, MotionMode::Forward, &preset, seed, 3.0, 50.0, 0.0).unwrap();
        let sessions = vec![session];
        let (mean, std) = force_stats(&sessions);
        let (fmin, fmax) = feature_bounds(&sessions);
        let stats = NormStats::new(
            [mean[0], mean[1]],
            [std[0], std[1]],
        )
        .unwrap();
        let pred = GrfPredictor::init(
            7,
            &PredictorConfig::default(),
            fmin,
            fmax,
            stats,
            seed ^ 0xabc,
        )
        .unwrap();
        (sessions.into_iter().next().unwrap(), pred)
    }

    #[test]
    fn chunked_loss_equals_mean_of_single_sequences() {
        let (session, pred) = session_and_predictor(31);
        let weights = LossWeights::default();
        let s0 = 6;
        let b = 9;
        let graph = build_loss_graph(
            &pred,
            &session,
            ChunkSpec {
                first_start: s0,
                num_seqs: b,
            },
            &weights,
        )
        .unwrap();
        let chunked = graph.value();
        let starts: Vec<usize> = (s0..s0 + b).collect();
        let naive = loss_reference(&pred, &session, &starts, &weights).unwrap();
        for (a, b, name) in [
            (chunked.total, naive.total, "total"),
            (chunked.grf, naive.grf, "grf"),
            (chunked.dynamics, naive.dynamics, "dynamics"),
            (chunked.swing, naive.swing, "swing"),
            (chunked.smooth, naive.smooth, "smooth"),
        ] {
            assert!(
                (a - b).abs() <= 1e-12 * b.abs().max(1.0),
                "{name}: chunked {a} vs naive {b}"
            );
        }
    }

    #[test]
    fn components_match_direct_prediction_arithmetic() {
        // Single sequence: recompute every component from predict() outputs.
        let (session, pred) = session_and_predictor(37);
        let weights = LossWeights::default();
        let s0 = 8;
        let graph = build_loss_graph(
            &pred,
            &session,
            ChunkSpec {
                first_start: s0,
                num_seqs: 1,
            },
            &weights,
        )
        .unwrap();
        let got = graph.value();

        let h = WINDOW_LEN;
        let stats = pred.norm_stats();
        let mut fs = Vec::new();
        let mut grf = 0.0;
        let mut dynv = 0.0;
        let mut swing = 0.0;
        for t in s0..s0 + h {
            let rec = &session.records[t];
            let window = crate::predictor::window_at(&session, t).unwrap();
            let f = pred.predict(&window, &rec.jn).unwrap();
            // reproduce τ_c for the dynamics residual
            let tau_eff = pred.actuation(&window).unwrap();
            let m = pred.inertia_head().assemble_inertia(&rec.q).unwrap();
            let c = crate::dynamics::coriolis_matrix(pred.inertia_head(), &rec.q, &rec.qd).unwrap();
            let g = pred.potential_head().gravity_vector(&rec.q).unwrap();
            let tau_c =
                crate::dynamics::contact_generalized_force(&m, &c, &g, &rec.qdd, &rec.qd, &tau_eff)
                    .unwrap();
            let fn_ = stats.normalize(f);
            let gt_n = stats.normalize(rec.f_gt);
            grf += (fn_[0] - gt_n[0]).powi(2) + (fn_[1] - gt_n[1]).powi(2);
            let mask = pred.contact_mask(rec.f_gt);
            let zero_n = stats.normalized_zero();
            for foot in 0..2 {
                if !mask[foot] {
                    swing += (fn_[foot] - zero_n[foot]).powi(2);
                }
            }
            let mut r2 = 0.0;
            for i in 0..7 {
                let jtf = rec.jn.row(0)[i] * f[0] + rec.jn.row(1)[i] * f[1];
                r2 += (tau_c[i] - jtf).powi(2);
            }
            dynv += r2;
            fs.push(f);
        }
        let mut smooth = 0.0;
        for t in 1..h {
            smooth += (fs[t][0] - fs[t - 1][0]).powi(2) + (fs[t][1] - fs[t - 1][1]).powi(2);
        }
        let expect_grf = grf / h as f64;
        let expect_dyn = dynv / h as f64;
        let expect_swing = swing / h as f64;
        let expect_smooth = smooth / (h - 1) as f64;
        assert!((got.grf - expect_grf).abs() < 1e-9 * expect_grf.max(1.0), "{} vs {}", got.grf, expect_grf);
        assert!((got.dynamics - expect_dyn).abs() < 1e-9 * expect_dyn.max(1.0), "{} vs {}", got.dynamics, expect_dyn);
        assert!((got.swing - expect_swing).abs() < 1e-9 * expect_swing.max(1.0), "{} vs {}", got.swing, expect_swing);
        assert!((got.smooth - expect_smooth).abs() < 1e-9 * expect_smooth.max(1.0), "{} vs {}", got.smooth, expect_smooth);
        let w = LossWeights::<f64>::default();
        let expect_total = expect_grf * w.grf + expect_dyn * w.dynamics + expect_swing * w.swing + expect_smooth * w.smooth;
        assert!((got.total - expect_total).abs() < 1e-9 * expect_total.max(1.0));
    }

    #[test]
    fn trivial_component_identities() {
        let (session, mut pred) = session_and_predictor(41);
        // With a zero-weight term the total ignores that component exactly.
        let mut weights = LossWeights::default();
        weights.dynamics = 0.0;
        let graph = build_loss_graph(
            &pred,
            &session,
            ChunkSpec {
                first_start: 7,
                num_seqs: 3,
            },
            &weights,
        )
        .unwrap();
        let v = graph.value();
        let expect = v.grf * weights.grf + v.swing * weights.swing + v.smooth * weights.smooth;
        assert!((v.total - expect).abs() < 1e-12 * expect.max(1.0));
        assert!(v.grf >= 0.0 && v.dynamics >= 0.0 && v.swing >= 0.0 && v.smooth >= 0.0);
        pred.freeze();
    }

    #[test]
    fn gradient_of_total_matches_finite_differences() {
        let (session, pred) = session_and_predictor(43);
        let weights = LossWeights::default();
        let chunk = ChunkSpec {
            first_start: 9,
            num_seqs: 4,
        };
        let eval = |p: &GrfPredictor<f64>| -> (f64, Vec<Tensor<f64>>) {
            let mut graph = build_loss_graph(p, &session, chunk, &weights).unwrap();
            graph.backward().unwrap();
            (graph.value().total, graph.gradients())
        };
        let (_, grads) = eval(&pred);
        let names = pred.param_names();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        // Spot-check 120 random coordinates across all parameter tensors.
        let tensors = pred.param_tensors();
        let mut worst = 0.0f64;
        for _ in 0..120 {
            let pi = rng.gen_range(0..tensors.len());
            let ci = rng.gen_range(0..tensors[pi].numel());
            let h = 1e-5;
            let mut hi_p = pred.clone();
            hi_p.param_tensors_mut().unwrap()[pi].data_mut()[ci] += h;
            let mut lo_p = pred.clone();
            lo_p.param_tensors_mut().unwrap()[pi].data_mut()[ci] -= h;
            let f_hi = build_loss_graph(&hi_p, &session, chunk, &weights)
                .unwrap()
                .value()
                .total;
            let f_lo = build_loss_graph(&lo_p, &session, chunk, &weights)
                .unwrap()
                .value()
                .total;
            let fd = (f_hi - f_lo) / (2.0 * h);
            let analytic = grads[pi].data()[ci];
            let rel = (analytic - fd).abs() / analytic.abs().max(1.0);
            if rel > worst {
                worst = rel;
            }
            assert!(
                rel < 1e-4,
                "param {} coord {ci}: analytic {analytic} fd {fd} rel {rel}",
                names[pi]
            );
        }
        assert!(worst < 1e-4, "worst rel error {worst}");
    }
}

//! Sequence network: maps a 6-frame proprioceptive window to the effective
//! generalized actuation vector.
//!
//! The default architecture is a small temporal-convolution stack (kernel 3
//! over the time axis, 64 channels, valid padding) with a linear head; a
//! flat multilayer perceptron is available behind a config switch.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffcore::{DiffError, NodeId, Tape, Tensor};
use crate::scalar::{lit, silu, Scalar};

/// Frames per proprioceptive window.
pub const WINDOW_LEN: usize = 6;

/// Temporal convolution kernel width.
const KERNEL: usize = 3;

/// Channel width of both convolution stages (and the MLP hidden layers).
const CHANNELS: usize = 64;

#[derive(Debug, Error)]
pub enum SeqError {
    #[error("seqnet: expected a window of {expected_frames} frames × {expected_width} features, got {got_frames} × {got_width}")]
    WindowShape {
        expected_frames: usize,
        expected_width: usize,
        got_frames: usize,
        got_width: usize,
    },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// `H` stacked `[q; q̇; q̈]` frames, ordered oldest → newest.
#[derive(Debug, Clone, PartialEq)]
pub struct ProprioWindow<T> {
    frames: Tensor<T>,
}

impl<T: Scalar> ProprioWindow<T> {
    /// Build from a `[WINDOW_LEN, 3n]` tensor.
    pub fn new(frames: Tensor<T>) -> Result<Self, SeqError> {
        if frames.shape().len() != 2
            || frames.shape()[0] != WINDOW_LEN
            || frames.shape()[1] % 3 != 0
            || frames.shape()[1] == 0
        {
            return Err(SeqError::WindowShape {
                expected_frames: WINDOW_LEN,
                expected_width: 3,
                got_frames: frames.shape().first().copied().unwrap_or(0),
                got_width: frames.shape().get(1).copied().unwrap_or(0),
            });
        }
        Ok(Self { frames })
    }

    pub fn n(&self) -> usize {
        self.frames.shape()[1] / 3
    }

    pub fn frames(&self) -> &Tensor<T> {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &[T] {
        let w = self.frames.shape()[1];
        &self.frames.data()[i * w..(i + 1) * w]
    }

    /// Newest frame split into `(q, q̇, q̈)`.
    pub fn newest_split(&self) -> (&[T], &[T], &[T]) {
        let n = self.n();
        let f = self.frame(WINDOW_LEN - 1);
        (&f[..n], &f[n..2 * n], &f[2 * n..])
    }
}

/// Architecture selector for the sequence network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeqArch {
    Tcn,
    Mlp,
}

/// Learned map from a proprioceptive window to `τ_eff ∈ ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceNet<T> {
    n: usize,
    arch: SeqArch,
    /// Layer weight matrices in evaluation order; layout depends on `arch`.
    /// TCN: `[W1_m1, W1_0, W1_p1, b1, W2_m1, W2_0, W2_p1, b2, head, b_head]`.
    /// MLP: `[W1, b1, W2, b2, head, b_head]`.
    params: Vec<Tensor<T>>,
}

impl<T: Scalar> SequenceNet<T> {
    pub fn zeros(n: usize, arch: SeqArch) -> Self {
        let params = Self::param_shapes(n, arch)
            .into_iter()
            .map(Tensor::zeros)
            .collect();
        Self { n, arch, params }
    }

    pub fn init<R: Rng>(n: usize, arch: SeqArch, rng: &mut R) -> Self {
        let mut net = Self::zeros(n, arch);
        let head_idx = net.params.len() - 2;
        for (idx, p) in net.params.iter_mut().enumerate() {
            let shape = p.shape().to_vec();
            // Biases (single-row tensors) start at zero.
            if shape[0] == 1 {
                continue;
            }
            let fan_in = shape[1] as f64;
            // The head starts near zero so the initial actuation estimate
            // stays small against the physical torque scale.
            let a = if idx == head_idx {
                0.01 / fan_in.sqrt()
            } else {
                1.0 / fan_in.sqrt()
            };
            for v in p.data_mut() {
                *v = lit(rng.gen_range(-a..a));
            }
        }
        net
    }

    fn param_shapes(n: usize, arch: SeqArch) -> Vec<Vec<usize>> {
        let w = 3 * n;
        match arch {
            SeqArch::Tcn => vec![
                vec![CHANNELS, w],
                vec![CHANNELS, w],
                vec![CHANNELS, w],
                vec![1, CHANNELS],
                vec![CHANNELS, CHANNELS],
                vec![CHANNELS, CHANNELS],
                vec![CHANNELS, CHANNELS],
                vec![1, CHANNELS],
                vec![n, 2 * CHANNELS],
                vec![1, n],
            ],
            SeqArch::Mlp => vec![
                vec![CHANNELS, WINDOW_LEN * w],
                vec![1, CHANNELS],
                vec![CHANNELS, CHANNELS],
                vec![1, CHANNELS],
                vec![n, CHANNELS],
                vec![1, n],
            ],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arch(&self) -> SeqArch {
        self.arch
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    /// Stable parameter names for checkpoints and diagnostics.
    pub fn param_names(&self) -> Vec<String> {
        match self.arch {
            SeqArch::Tcn => ["conv1_m1", "conv1_0", "conv1_p1", "bias1", "conv2_m1", "conv2_0", "conv2_p1", "bias2", "head", "head_bias"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            SeqArch::Mlp => ["dense1", "bias1", "dense2", "bias2", "head", "head_bias"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }

    fn check_window(&self, window: &ProprioWindow<T>) -> Result<(), SeqError> {
        if window.n() != self.n {
            return Err(SeqError::WindowShape {
                expected_frames: WINDOW_LEN,
                expected_width: 3 * self.n,
                got_frames: WINDOW_LEN,
                got_width: 3 * window.n(),
            });
        }
        Ok(())
    }

    /// Evaluate on one (already normalized) window.
    pub fn forward(&self, window: &ProprioWindow<T>) -> Result<Vec<T>, SeqError> {
        self.check_window(window)?;
        let rows = eval_chunk(self, window.frames(), 1)?;
        Ok(rows.into_data())
    }
}

fn affine_rows<T: Scalar>(
    inputs: &[(&Tensor<T>, usize, &Tensor<T>)],
    bias: &Tensor<T>,
    rows: usize,
    out_width: usize,
    activate: bool,
) -> Tensor<T> {
    // out[r] = act(Σ_k W_k · in_k[r + offset_k] + b)
    let mut out = Tensor::zeros(vec![rows, out_width]);
    for (src, offset, w) in inputs {
        let width = src.shape()[1];
        for r in 0..rows {
            let row = &src.data()[(r + offset) * width..(r + offset + 1) * width];
            for j in 0..out_width {
                let wrow = &w.data()[j * width..(j + 1) * width];
                let mut acc = T::zero();
                for (x, coef) in row.iter().zip(wrow) {
                    acc += *x * *coef;
                }
                out.data_mut()[r * out_width + j] += acc;
            }
        }
    }
    for r in 0..rows {
        for j in 0..out_width {
            let v = out.data_mut()[r * out_width + j] + bias.data()[j];
            out.data_mut()[r * out_width + j] = if activate { silu(v) } else { v };
        }
    }
    out
}

/// Evaluate the network over a chunk of `ticks` consecutive windows given the
/// shared frame rows (`[ticks + WINDOW_LEN - 1, 3n]`, oldest first). Row `t`
/// of the result is the output for the window ending at frame `t + 5`.
pub fn eval_chunk<T: Scalar>(
    net: &SequenceNet<T>,
    frames: &Tensor<T>,
    ticks: usize,
) -> Result<Tensor<T>, SeqError> {
    let w = 3 * net.n;
    let need = ticks + WINDOW_LEN - 1;
    if frames.shape().len() != 2 || frames.shape()[0] != need || frames.shape()[1] != w {
        return Err(SeqError::WindowShape {
            expected_frames: need,
            expected_width: w,
            got_frames: frames.shape().first().copied().unwrap_or(0),
            got_width: frames.shape().get(1).copied().unwrap_or(0),
        });
    }
    match net.arch {
        SeqArch::Tcn => {
            let p = &net.params;
            let c1 = affine_rows(
                &[(frames, 0, &p[0]), (frames, 1, &p[1]), (frames, 2, &p[2])],
                &p[3],
                need - KERNEL + 1,
                CHANNELS,
                true,
            );
            let c2 = affine_rows(
                &[(&c1, 0, &p[4]), (&c1, 1, &p[5]), (&c1, 2, &p[6])],
                &p[7],
                need - 2 * (KERNEL - 1),
                CHANNELS,
                true,
            );
            // Head consumes the last two convolution outputs of each window.
            let mut concat = Tensor::zeros(vec![ticks, 2 * CHANNELS]);
            for t in 0..ticks {
                let a = &c2.data()[t * CHANNELS..(t + 1) * CHANNELS];
                let b = &c2.data()[(t + 1) * CHANNELS..(t + 2) * CHANNELS];
                concat.data_mut()[t * 2 * CHANNELS..t * 2 * CHANNELS + CHANNELS]
                    .copy_from_slice(a);
                concat.data_mut()[t * 2 * CHANNELS + CHANNELS..(t + 1) * 2 * CHANNELS]
                    .copy_from_slice(b);
            }
            Ok(affine_rows(&[(&concat, 0, &p[8])], &p[9], ticks, net.n, false))
        }
        SeqArch::Mlp => {
            let p = &net.params;
            let flat_w = WINDOW_LEN * w;
            let mut flat = Tensor::zeros(vec![ticks, flat_w]);
            for t in 0..ticks {
                flat.data_mut()[t * flat_w..(t + 1) * flat_w]
                    .copy_from_slice(&frames.data()[t * w..(t + WINDOW_LEN) * w]);
            }
            let h1 = affine_rows(&[(&flat, 0, &p[0])], &p[1], ticks, CHANNELS, true);
            let h2 = affine_rows(&[(&h1, 0, &p[2])], &p[3], ticks, CHANNELS, true);
            Ok(affine_rows(&[(&h2, 0, &p[4])], &p[5], ticks, net.n, false))
        }
    }
}

/// Tape handles for the network parameters.
pub struct SeqNetNodes {
    pub params: Vec<NodeId>,
}

impl SeqNetNodes {
    pub fn register<T: Scalar>(tape: &mut Tape<T>, net: &SequenceNet<T>) -> Self {
        Self {
            params: net.params().iter().map(|p| tape.input(p.clone())).collect(),
        }
    }
}

fn tape_affine<T: Scalar>(
    tape: &mut Tape<T>,
    inputs: &[(NodeId, usize, usize, NodeId)],
    bias: NodeId,
    ones: NodeId,
    activate: bool,
) -> Result<NodeId, DiffError> {
    // inputs: (source rows, row offset, row count, weight node)
    let mut acc: Option<NodeId> = None;
    for &(src, offset, rows, w) in inputs {
        let sliced = tape.slice(src, 0, offset, rows)?;
        let w_t = tape.transpose(w)?;
        let term = tape.matmul(sliced, w_t)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => tape.add(prev, term)?,
        });
    }
    let bias_tile = tape.matmul(ones, bias)?;
    let pre = tape.add(acc.expect("at least one input"), bias_tile)?;
    Ok(if activate { tape.silu(pre) } else { pre })
}

/// Tape evaluation over a chunk of consecutive windows; mirrors
/// [`eval_chunk`] exactly (same arithmetic, recorded on the tape).
pub fn tape_forward_chunk<T: Scalar>(
    tape: &mut Tape<T>,
    net: &SequenceNet<T>,
    nodes: &SeqNetNodes,
    frames_norm: &Tensor<T>,
    ticks: usize,
) -> Result<NodeId, DiffError> {
    let need = ticks + WINDOW_LEN - 1;
    assert_eq!(frames_norm.shape(), &[need, 3 * net.n()]);
    let frames = tape.constant(frames_norm.clone());
    match net.arch() {
        SeqArch::Tcn => {
            let p = &nodes.params;
            let rows1 = need - KERNEL + 1;
            let ones1 = tape.constant(Tensor::filled(vec![rows1, 1], T::one()).expect("ones"));
            let c1 = tape_affine(
                tape,
                &[
                    (frames, 0, rows1, p[0]),
                    (frames, 1, rows1, p[1]),
                    (frames, 2, rows1, p[2]),
                ],
                p[3],
                ones1,
                true,
            )?;
            let rows2 = need - 2 * (KERNEL - 1);
            let ones2 = tape.constant(Tensor::filled(vec![rows2, 1], T::one()).expect("ones"));
            let c2 = tape_affine(
                tape,
                &[
                    (c1, 0, rows2, p[4]),
                    (c1, 1, rows2, p[5]),
                    (c1, 2, rows2, p[6]),
                ],
                p[7],
                ones2,
                true,
            )?;
            let first = tape.slice(c2, 0, 0, ticks)?;
            let second = tape.slice(c2, 0, 1, ticks)?;
            let concat = tape.concat(&[first, second], 1)?;
            let ones_t = tape.constant(Tensor::filled(vec![ticks, 1], T::one()).expect("ones"));
            tape_affine(tape, &[(concat, 0, ticks, p[8])], p[9], ones_t, false)
        }
        SeqArch::Mlp => {
            let p = &nodes.params;
            let w = 3 * net.n();
            let flat_w = WINDOW_LEN * w;
            let mut flat = Tensor::zeros(vec![ticks, flat_w]);
            for t in 0..ticks {
                flat.data_mut()[t * flat_w..(t + 1) * flat_w]
                    .copy_from_slice(&frames_norm.data()[t * w..(t + WINDOW_LEN) * w]);
            }
            let flat = tape.constant(flat);
            let ones = tape.constant(Tensor::filled(vec![ticks, 1], T::one()).expect("ones"));
            let h1 = tape_affine(tape, &[(flat, 0, ticks, p[0])], p[1], ones, true)?;
            let h2 = tape_affine(tape, &[(h1, 0, ticks, p[2])], p[3], ones, true)?;
            tape_affine(tape, &[(h2, 0, ticks, p[4])], p[5], ones, false)
        }
    }
}

//! Wengert tape: reverse-mode differentiation via operation recording.
//!
//! The forward pass records primitive operations into a linear tape; the
//! backward pass replays them in reverse, accumulating vector-Jacobian
//! products into per-node adjoints. One tape per training step; tapes are
//! single-threaded and independent of each other.

use crate::scalar::{sigmoid, silu, silu_deriv, softplus, Scalar};

use super::tensor::{DiffError, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Primitive operation kinds accepted by [`Tape::primitive`].
#[derive(Debug, Clone, Copy)]
pub enum OpKind<T> {
    Add,
    Subtract,
    Multiply,
    Matmul,
    Sum { axis: Option<usize> },
    Mean,
    Square,
    Softplus,
    Sigmoid,
    Silu,
    MaxWithZero,
    Clamp { lo: T, hi: T },
    Concatenate { axis: usize },
    Slice { axis: usize, start: usize, len: usize },
    Transpose,
}

/// A recorded operation with resolved layout information.
#[derive(Debug, Clone)]
enum Op {
    Add { a: usize, b: usize },
    Sub { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Matmul { a: usize, b: usize, dims: MatmulDims },
    Sum { input: usize, axis: Option<usize> },
    Mean { input: usize },
    Square { input: usize },
    Softplus { input: usize },
    Sigmoid { input: usize },
    Silu { input: usize },
    Relu { input: usize },
    Clamp { input: usize },
    Concat { inputs: Vec<usize>, axis: usize },
    Slice { input: usize, axis: usize, start: usize, len: usize },
    Transpose { input: usize },
}

#[derive(Debug, Clone, Copy)]
struct MatmulDims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    a_batched: bool,
    b_batched: bool,
}

/// Reverse-mode tape over dense tensors.
pub struct Tape<T> {
    values: Vec<Tensor<T>>,
    /// Op that produced each node; `None` for leaves.
    producers: Vec<Option<Op>>,
    /// Per-node adjoints, populated by [`Tape::backward`].
    grads: Vec<Option<Vec<T>>>,
    /// Clamp bounds, parallel to nodes that were produced by `Clamp`.
    clamp_bounds: Vec<Option<(T, T)>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            values: Vec::new(),
            producers: Vec::new(),
            grads: Vec::new(),
            clamp_bounds: Vec::new(),
        }
    }

    fn push(&mut self, value: Tensor<T>, op: Option<Op>) -> NodeId {
        self.values.push(value);
        self.producers.push(op);
        self.grads.push(None);
        self.clamp_bounds.push(None);
        NodeId(self.values.len() - 1)
    }

    /// Record a leaf whose gradient will be requested (a parameter or input).
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, None)
    }

    /// Record a leaf that only carries data. Adjoints still accumulate into
    /// it, but callers typically never read them.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, None)
    }

    /// Convenience: record a constant scalar.
    pub fn constant_scalar(&mut self, v: T) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.grads[id.0].as_deref()
    }

    /// Gradient for a leaf, zeros if no adjoint flowed to it.
    pub fn grad_or_zeros(&self, id: NodeId) -> Vec<T> {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => vec![T::zero(); self.values[id.0].numel()],
        }
    }

    /// Zero every adjoint so another backward pass can run.
    pub fn reset_adjoints(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }

    // ── op builders ─────────────────────────────────────────────────

    fn elementwise_shapes(
        op: &'static str,
        a: &[usize],
        b: &[usize],
    ) -> Result<Vec<usize>, DiffError> {
        let an: usize = a.iter().product();
        let bn: usize = b.iter().product();
        if a == b {
            Ok(a.to_vec())
        } else if an == 1 {
            Ok(b.to_vec())
        } else if bn == 1 {
            Ok(a.to_vec())
        } else {
            Err(DiffError::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            })
        }
    }

    fn binary(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(T, T) -> T,
        make: impl Fn(usize, usize) -> Op,
    ) -> Result<NodeId, DiffError> {
        let shape = Self::elementwise_shapes(op_name, self.values[a.0].shape(), self.values[b.0].shape())?;
        let (av, bv) = (self.values[a.0].data(), self.values[b.0].data());
        let data: Vec<T> = if av.len() == bv.len() {
            av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect()
        } else if av.len() == 1 {
            let x = av[0];
            bv.iter().map(|&y| f(x, y)).collect()
        } else {
            let y = bv[0];
            av.iter().map(|&x| f(x, y)).collect()
        };
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Some(make(a.0, b.0))))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary("subtract", a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        self.binary("multiply", a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    /// Multiply by a compile-time constant scalar.
    pub fn scale(&mut self, a: NodeId, c: T) -> Result<NodeId, DiffError> {
        let cn = self.constant_scalar(c);
        self.mul(a, cn)
    }

    fn unary(
        &mut self,
        input: NodeId,
        f: impl Fn(T) -> T,
        make: impl Fn(usize) -> Op,
    ) -> NodeId {
        let value = self.values[input.0].map(f);
        self.push(value, Some(make(input.0)))
    }

    pub fn square(&mut self, input: NodeId) -> NodeId {
        self.unary(input, |x| x * x, |input| Op::Square { input })
    }

    pub fn softplus(&mut self, input: NodeId) -> NodeId {
        self.unary(input, softplus, |input| Op::Softplus { input })
    }

    pub fn sigmoid(&mut self, input: NodeId) -> NodeId {
        self.unary(input, sigmoid, |input| Op::Sigmoid { input })
    }

    pub fn silu(&mut self, input: NodeId) -> NodeId {
        self.unary(input, silu, |input| Op::Silu { input })
    }

    /// `max(x, 0)` elementwise. The subgradient at exactly 0 is 0.
    pub fn relu(&mut self, input: NodeId) -> NodeId {
        self.unary(input, |x| x.max(T::zero()), |input| Op::Relu { input })
    }

    pub fn clamp(&mut self, input: NodeId, lo: T, hi: T) -> Result<NodeId, DiffError> {
        if lo > hi {
            return Err(DiffError::InvalidArg {
                op: "clamp",
                what: format!("lo {lo} > hi {hi}"),
            });
        }
        let id = self.unary(input, |x| x.max(lo).min(hi), |input| Op::Clamp { input });
        self.clamp_bounds[id.0] = Some((lo, hi));
        Ok(id)
    }

    /// Sum over all elements (`axis = None`) or along one axis. Summing an
    /// axis keeps it with extent 1 so results concatenate naturally.
    pub fn sum(&mut self, input: NodeId, axis: Option<usize>) -> Result<NodeId, DiffError> {
        let t = &self.values[input.0];
        let value = match axis {
            None => Tensor::scalar(t.data().iter().copied().sum()),
            Some(ax) => {
                let (outer, len, inner) = axis_strides(t.shape(), ax, "sum")?;
                let mut shape = t.shape().to_vec();
                shape[ax] = 1;
                let mut data = vec![T::zero(); outer * inner];
                for o in 0..outer {
                    for j in 0..len {
                        let base = (o * len + j) * inner;
                        for i in 0..inner {
                            data[o * inner + i] += t.data()[base + i];
                        }
                    }
                }
                Tensor::new(shape, data)?
            }
        };
        Ok(self.push(value, Some(Op::Sum { input: input.0, axis })))
    }

    /// Arithmetic mean over all elements.
    pub fn mean(&mut self, input: NodeId) -> NodeId {
        let t = &self.values[input.0];
        let n = T::from_f64(t.numel() as f64);
        let value = Tensor::scalar(t.data().iter().copied().sum::<T>() / n);
        self.push(value, Some(Op::Mean { input: input.0 }))
    }

    pub fn concat(&mut self, inputs: &[NodeId], axis: usize) -> Result<NodeId, DiffError> {
        if inputs.is_empty() {
            return Err(DiffError::InvalidArg {
                op: "concatenate",
                what: "no inputs".into(),
            });
        }
        let first = self.values[inputs[0].0].shape().to_vec();
        if axis >= first.len() {
            return Err(DiffError::InvalidArg {
                op: "concatenate",
                what: format!("axis {axis} out of range for rank {}", first.len()),
            });
        }
        let mut total_axis = 0usize;
        for id in inputs {
            let s = self.values[id.0].shape();
            if s.len() != first.len()
                || s.iter()
                    .enumerate()
                    .any(|(d, &e)| d != axis && e != first[d])
            {
                return Err(DiffError::ShapeMismatch {
                    op: "concatenate",
                    lhs: first.clone(),
                    rhs: s.to_vec(),
                });
            }
            total_axis += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = total_axis;
        let (outer, _, inner) = axis_strides(&shape, axis, "concatenate")?;
        let mut data = vec![T::zero(); outer * total_axis * inner];
        let mut offset = 0usize;
        for id in inputs {
            let t = &self.values[id.0];
            let len = t.shape()[axis];
            for o in 0..outer {
                for j in 0..len {
                    let src = (o * len + j) * inner;
                    let dst = (o * total_axis + offset + j) * inner;
                    data[dst..dst + inner].copy_from_slice(&t.data()[src..src + inner]);
                }
            }
            offset += len;
        }
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            value,
            Some(Op::Concat {
                inputs: inputs.iter().map(|i| i.0).collect(),
                axis,
            }),
        ))
    }

    pub fn slice(
        &mut self,
        input: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<NodeId, DiffError> {
        let t = &self.values[input.0];
        let (outer, axis_len, inner) = axis_strides(t.shape(), axis, "slice")?;
        if start + len > axis_len {
            return Err(DiffError::InvalidArg {
                op: "slice",
                what: format!("range {start}..{} exceeds axis extent {axis_len}", start + len),
            });
        }
        let mut shape = t.shape().to_vec();
        shape[axis] = len;
        let mut data = vec![T::zero(); outer * len * inner];
        for o in 0..outer {
            for j in 0..len {
                let src = (o * axis_len + start + j) * inner;
                let dst = (o * len + j) * inner;
                data[dst..dst + inner].copy_from_slice(&t.data()[src..src + inner]);
            }
        }
        let value = Tensor::new(shape, data)?;
        Ok(self.push(
            value,
            Some(Op::Slice {
                input: input.0,
                axis,
                start,
                len,
            }),
        ))
    }

    /// Swap the last two axes (batched over any leading axes).
    pub fn transpose(&mut self, input: NodeId) -> Result<NodeId, DiffError> {
        let t = &self.values[input.0];
        let value = transpose_tensor(t)?;
        Ok(self.push(value, Some(Op::Transpose { input: input.0 })))
    }

    /// Matrix product. Supported layouts: `[m,k]@[k,n]`, `[B,m,k]@[B,k,n]`,
    /// and either operand rank-2 broadcast across the other's batch.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, DiffError> {
        let dims = resolve_matmul(self.values[a.0].shape(), self.values[b.0].shape())?;
        let out_rank3 =
            self.values[a.0].shape().len() == 3 || self.values[b.0].shape().len() == 3;
        let mut out = vec![T::zero(); dims.batch * dims.m * dims.n];
        let (av, bv) = (self.values[a.0].data(), self.values[b.0].data());
        for bt in 0..dims.batch {
            let ao = if dims.a_batched { bt * dims.m * dims.k } else { 0 };
            let bo = if dims.b_batched { bt * dims.k * dims.n } else { 0 };
            matmul_nn(
                &av[ao..ao + dims.m * dims.k],
                &bv[bo..bo + dims.k * dims.n],
                &mut out[bt * dims.m * dims.n..(bt + 1) * dims.m * dims.n],
                dims.m,
                dims.k,
                dims.n,
            );
        }
        let shape = if out_rank3 {
            vec![dims.batch, dims.m, dims.n]
        } else {
            vec![dims.m, dims.n]
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Some(Op::Matmul { a: a.0, b: b.0, dims })))
    }

    /// Uniform entry point over the primitive set.
    pub fn primitive(&mut self, kind: OpKind<T>, inputs: &[NodeId]) -> Result<NodeId, DiffError> {
        let need = |n: usize| -> Result<(), DiffError> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(DiffError::InvalidArg {
                    op: "primitive",
                    what: format!("expected {n} inputs, got {}", inputs.len()),
                })
            }
        };
        match kind {
            OpKind::Add => {
                need(2)?;
                self.add(inputs[0], inputs[1])
            }
            OpKind::Subtract => {
                need(2)?;
                self.sub(inputs[0], inputs[1])
            }
            OpKind::Multiply => {
                need(2)?;
                self.mul(inputs[0], inputs[1])
            }
            OpKind::Matmul => {
                need(2)?;
                self.matmul(inputs[0], inputs[1])
            }
            OpKind::Sum { axis } => {
                need(1)?;
                self.sum(inputs[0], axis)
            }
            OpKind::Mean => {
                need(1)?;
                Ok(self.mean(inputs[0]))
            }
            OpKind::Square => {
                need(1)?;
                Ok(self.square(inputs[0]))
            }
            OpKind::Softplus => {
                need(1)?;
                Ok(self.softplus(inputs[0]))
            }
            OpKind::Sigmoid => {
                need(1)?;
                Ok(self.sigmoid(inputs[0]))
            }
            OpKind::Silu => {
                need(1)?;
                Ok(self.silu(inputs[0]))
            }
            OpKind::MaxWithZero => {
                need(1)?;
                Ok(self.relu(inputs[0]))
            }
            OpKind::Clamp { lo, hi } => {
                need(1)?;
                self.clamp(inputs[0], lo, hi)
            }
            OpKind::Concatenate { axis } => self.concat(inputs, axis),
            OpKind::Slice { axis, start, len } => {
                need(1)?;
                self.slice(inputs[0], axis, start, len)
            }
            OpKind::Transpose => {
                need(1)?;
                self.transpose(inputs[0])
            }
        }
    }

    // ── backward ────────────────────────────────────────────────────

    /// Reverse sweep from a scalar output. Adjoints accumulate; call
    /// [`Tape::reset_adjoints`] before running a second pass.
    pub fn backward(&mut self, out: NodeId) -> Result<(), DiffError> {
        if self.values[out.0].numel() != 1 {
            return Err(DiffError::NonScalarBackward {
                shape: self.values[out.0].shape().to_vec(),
            });
        }
        if self.grads[out.0].is_none() {
            self.grads[out.0] = Some(vec![T::one()]);
        }
        for id in (0..self.values.len()).rev() {
            let Some(op) = self.producers[id].clone() else {
                continue;
            };
            let Some(g_out) = self.grads[id].take() else {
                continue;
            };
            self.backward_op(id, &op, &g_out);
            self.grads[id] = Some(g_out);
        }
        Ok(())
    }

    /// Move the contribution in on first touch, add on later touches.
    fn accum(&mut self, id: usize, contrib: Vec<T>) {
        debug_assert_eq!(contrib.len(), self.values[id].numel());
        match &mut self.grads[id] {
            Some(slot) => {
                for (dst, c) in slot.iter_mut().zip(contrib) {
                    *dst += c;
                }
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    /// Accumulate a contribution where the op broadcast a scalar operand.
    fn accum_elementwise(&mut self, id: usize, contrib: Vec<T>) {
        if self.values[id].numel() == 1 && contrib.len() > 1 {
            let total: T = contrib.iter().copied().sum();
            self.accum(id, vec![total]);
        } else {
            self.accum(id, contrib);
        }
    }

    fn backward_op(&mut self, out: usize, op: &Op, g: &[T]) {
        match *op {
            Op::Add { a, b } => {
                self.accum_elementwise(a, g.to_vec());
                self.accum_elementwise(b, g.to_vec());
            }
            Op::Sub { a, b } => {
                self.accum_elementwise(a, g.to_vec());
                let neg: Vec<T> = g.iter().map(|&v| -v).collect();
                self.accum_elementwise(b, neg);
            }
            Op::Mul { a, b } => {
                let (av, bv) = (self.values[a].data(), self.values[b].data());
                let da: Vec<T> = if bv.len() == 1 {
                    g.iter().map(|&gi| gi * bv[0]).collect()
                } else {
                    g.iter().zip(bv).map(|(&gi, &y)| gi * y).collect()
                };
                let db: Vec<T> = if av.len() == 1 {
                    g.iter().map(|&gi| gi * av[0]).collect()
                } else {
                    g.iter().zip(av).map(|(&gi, &x)| gi * x).collect()
                };
                self.accum_elementwise(a, da);
                self.accum_elementwise(b, db);
            }
            Op::Matmul { a, b, dims } => {
                let MatmulDims {
                    batch,
                    m,
                    k,
                    n,
                    a_batched,
                    b_batched,
                } = dims;
                let mut da = vec![T::zero(); self.values[a].numel()];
                let mut db = vec![T::zero(); self.values[b].numel()];
                let (av, bv) = (self.values[a].data(), self.values[b].data());
                for bt in 0..batch {
                    let go = bt * m * n;
                    let ao = if a_batched { bt * m * k } else { 0 };
                    let bo = if b_batched { bt * k * n } else { 0 };
                    // dA += dOut @ B^T
                    matmul_nt(
                        &g[go..go + m * n],
                        &bv[bo..bo + k * n],
                        &mut da[ao..ao + m * k],
                        m,
                        n,
                        k,
                    );
                    // dB += A^T @ dOut
                    matmul_tn(
                        &av[ao..ao + m * k],
                        &g[go..go + m * n],
                        &mut db[bo..bo + k * n],
                        m,
                        k,
                        n,
                    );
                }
                self.accum(a, da);
                self.accum(b, db);
            }
            Op::Sum { input, axis } => match axis {
                None => {
                    let numel = self.values[input].numel();
                    self.accum(input, vec![g[0]; numel]);
                }
                Some(ax) => {
                    let shape = self.values[input].shape().to_vec();
                    let (outer, len, inner) = axis_strides(&shape, ax, "sum").expect("checked");
                    let mut contrib = vec![T::zero(); outer * len * inner];
                    for o in 0..outer {
                        for j in 0..len {
                            let dst = (o * len + j) * inner;
                            for i in 0..inner {
                                contrib[dst + i] = g[o * inner + i];
                            }
                        }
                    }
                    self.accum(input, contrib);
                }
            },
            Op::Mean { input } => {
                let numel = self.values[input].numel();
                let gi = g[0] / T::from_f64(numel as f64);
                self.accum(input, vec![gi; numel]);
            }
            Op::Square { input } => {
                let two = T::from_f64(2.0);
                let contrib: Vec<T> = self.values[input]
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| two * x * gi)
                    .collect();
                self.accum(input, contrib);
            }
            Op::Softplus { input } => {
                let contrib: Vec<T> = self.values[input]
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| sigmoid(x) * gi)
                    .collect();
                self.accum(input, contrib);
            }
            Op::Sigmoid { input } => {
                let contrib: Vec<T> = self.values[out]
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&y, &gi)| y * (T::one() - y) * gi)
                    .collect();
                self.accum(input, contrib);
            }
            Op::Silu { input } => {
                let contrib: Vec<T> = self.values[input]
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| silu_deriv(x) * gi)
                    .collect();
                self.accum(input, contrib);
            }
            Op::Relu { input } => {
                let contrib: Vec<T> = self.values[input]
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| if x > T::zero() { gi } else { T::zero() })
                    .collect();
                self.accum(input, contrib);
            }
            Op::Clamp { input } => {
                let (lo, hi) = self.clamp_bounds[out].expect("clamp node has bounds");
                let contrib: Vec<T> = self.values[input]
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&x, &gi)| if x > lo && x < hi { gi } else { T::zero() })
                    .collect();
                self.accum(input, contrib);
            }
            Op::Concat { ref inputs, axis } => {
                let out_shape = self.values[out].shape().to_vec();
                let (outer, total, inner) = axis_strides(&out_shape, axis, "concatenate").expect("checked");
                let mut offset = 0usize;
                for &inp in inputs {
                    let len = self.values[inp].shape()[axis];
                    let mut contrib = vec![T::zero(); outer * len * inner];
                    for o in 0..outer {
                        for j in 0..len {
                            let src = (o * total + offset + j) * inner;
                            let dst = (o * len + j) * inner;
                            contrib[dst..dst + inner].copy_from_slice(&g[src..src + inner]);
                        }
                    }
                    self.accum(inp, contrib);
                    offset += len;
                }
            }
            Op::Slice {
                input,
                axis,
                start,
                len,
            } => {
                let in_shape = self.values[input].shape().to_vec();
                let (outer, axis_len, inner) = axis_strides(&in_shape, axis, "slice").expect("checked");
                let mut contrib = vec![T::zero(); self.values[input].numel()];
                for o in 0..outer {
                    for j in 0..len {
                        let dst = (o * axis_len + start + j) * inner;
                        let src = (o * len + j) * inner;
                        contrib[dst..dst + inner].copy_from_slice(&g[src..src + inner]);
                    }
                }
                self.accum(input, contrib);
            }
            Op::Transpose { input } => {
                let out_shape = self.values[out].shape().to_vec();
                let g_tensor = Tensor::new(out_shape, g.to_vec()).expect("grad matches out shape");
                let back = transpose_tensor(&g_tensor).expect("transpose back");
                self.accum(input, back.into_data());
            }
        }
    }
}

fn axis_strides(shape: &[usize], axis: usize, op: &'static str) -> Result<(usize, usize, usize), DiffError> {
    if axis >= shape.len() {
        return Err(DiffError::InvalidArg {
            op,
            what: format!("axis {axis} out of range for rank {}", shape.len()),
        });
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

fn transpose_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Tensor<T>, DiffError> {
    let rank = t.shape().len();
    if rank < 2 {
        return Err(DiffError::InvalidArg {
            op: "transpose",
            what: format!("rank {rank} tensor has no trailing matrix axes"),
        });
    }
    let r = t.shape()[rank - 2];
    let c = t.shape()[rank - 1];
    let batch: usize = t.shape()[..rank - 2].iter().product();
    let mut shape = t.shape().to_vec();
    shape[rank - 2] = c;
    shape[rank - 1] = r;
    let mut data = vec![T::zero(); t.numel()];
    for bt in 0..batch {
        let base = bt * r * c;
        for i in 0..r {
            for j in 0..c {
                data[base + j * r + i] = t.data()[base + i * c + j];
            }
        }
    }
    Tensor::new(shape, data)
}

fn resolve_matmul(a: &[usize], b: &[usize]) -> Result<MatmulDims, DiffError> {
    let err = || DiffError::ShapeMismatch {
        op: "matmul",
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    };
    match (a.len(), b.len()) {
        (2, 2) => {
            if a[1] != b[0] {
                return Err(err());
            }
            Ok(MatmulDims {
                batch: 1,
                m: a[0],
                k: a[1],
                n: b[1],
                a_batched: false,
                b_batched: false,
            })
        }
        (3, 3) => {
            if a[0] != b[0] || a[2] != b[1] {
                return Err(err());
            }
            Ok(MatmulDims {
                batch: a[0],
                m: a[1],
                k: a[2],
                n: b[2],
                a_batched: true,
                b_batched: true,
            })
        }
        (3, 2) => {
            if a[2] != b[0] {
                return Err(err());
            }
            Ok(MatmulDims {
                batch: a[0],
                m: a[1],
                k: a[2],
                n: b[1],
                a_batched: true,
                b_batched: false,
            })
        }
        (2, 3) => {
            if a[1] != b[1] {
                return Err(err());
            }
            Ok(MatmulDims {
                batch: b[0],
                m: a[0],
                k: a[1],
                n: b[2],
                a_batched: false,
                b_batched: true,
            })
        }
        _ => Err(err()),
    }
}

/// `out += a @ b` for row-major `a: m×k`, `b: k×n`.
fn matmul_nn<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let out_row = &mut out[i * n..(i + 1) * n];
        // Two columns of `a` per pass halve the passes over `out`.
        let mut kk = 0;
        while kk + 1 < k {
            let a0 = a_row[kk];
            let a1 = a_row[kk + 1];
            let b0 = &b[kk * n..(kk + 1) * n];
            let b1 = &b[(kk + 1) * n..(kk + 2) * n];
            for ((o, &x0), &x1) in out_row.iter_mut().zip(b0).zip(b1) {
                *o += a0 * x0 + a1 * x1;
            }
            kk += 2;
        }
        if kk < k {
            let a0 = a_row[kk];
            let b0 = &b[kk * n..(kk + 1) * n];
            for (o, &x0) in out_row.iter_mut().zip(b0) {
                *o += a0 * x0;
            }
        }
    }
}

/// `out += a @ b^T` for `a: m×n`, `b: k×n` producing `m×k`.
fn matmul_nt<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let a_row = &a[i * n..(i + 1) * n];
        for j in 0..k {
            let b_row = &b[j * n..(j + 1) * n];
            let mut acc = T::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc += x * y;
            }
            out[i * k + j] += acc;
        }
    }
}

/// `out += a^T @ b` for `a: m×k`, `b: m×n` producing `k×n`.
fn matmul_tn<T: Scalar>(a: &[T], b: &[T], out: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &aip) in a_row.iter().enumerate() {
            let out_row = &mut out[p * n..(p + 1) * n];
            for (o, &bij) in out_row.iter_mut().zip(b_row) {
                *o += aip * bij;
            }
        }
    }
}

//! Spline-parameterized network layers.
//!
//! Each layer maps `in_dim` features to `out_dim` outputs as
//! `out_j = Σ_i base_w[j,i]·silu(x_i) + spline_w[j,i]·Σ_m coef[j,i,m]·B_m(x_i)`,
//! with inputs clamped into the grid range so the map is constant outside it.

use rand::Rng;

use crate::diffcore::{DiffError, NodeId, Tape, Tensor};
use crate::scalar::{lit, silu, silu_deriv, Scalar};

use super::grid::{KanError, SplineGrid};
use super::norm::FeatureNormalizer;

#[derive(Debug, Clone, PartialEq)]
pub struct KanLayer<T> {
    in_dim: usize,
    out_dim: usize,
    grid: SplineGrid<T>,
    /// Per-input spline coefficients, each `[out_dim, basis_count]`.
    coef: Vec<Tensor<T>>,
    /// `[out_dim, in_dim]`
    base_w: Tensor<T>,
    /// `[out_dim, in_dim]`
    spline_w: Tensor<T>,
}

impl<T: Scalar> KanLayer<T> {
    pub fn zeros(in_dim: usize, out_dim: usize, grid: SplineGrid<T>) -> Self {
        let nb = grid.basis_count();
        Self {
            in_dim,
            out_dim,
            grid,
            coef: (0..in_dim).map(|_| Tensor::zeros(vec![out_dim, nb])).collect(),
            base_w: Tensor::zeros(vec![out_dim, in_dim]),
            spline_w: Tensor::zeros(vec![out_dim, in_dim]),
        }
    }

    /// Uniform init: coefficients and base weights small, spline mix active.
    pub fn init<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        grid: SplineGrid<T>,
        rng: &mut R,
    ) -> Self {
        let nb = grid.basis_count();
        let coef_a = 0.1 / (in_dim as f64).sqrt();
        let w_a = 0.5 / (in_dim as f64).sqrt();
        let mut uniform = |a: f64| lit::<T>(rng.gen_range(-a..a));
        let coef = (0..in_dim)
            .map(|_| {
                let data: Vec<T> = (0..out_dim * nb).map(|_| uniform(coef_a)).collect();
                Tensor::new(vec![out_dim, nb], data).expect("finite init")
            })
            .collect();
        let base_w = Tensor::new(
            vec![out_dim, in_dim],
            (0..out_dim * in_dim).map(|_| uniform(w_a)).collect(),
        )
        .expect("finite init");
        let spline_w = Tensor::new(
            vec![out_dim, in_dim],
            (0..out_dim * in_dim).map(|_| uniform(w_a)).collect(),
        )
        .expect("finite init");
        Self {
            in_dim,
            out_dim,
            grid,
            coef,
            base_w,
            spline_w,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn grid(&self) -> &SplineGrid<T> {
        &self.grid
    }

    pub fn coef(&self) -> &[Tensor<T>] {
        &self.coef
    }

    pub fn coef_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.coef
    }

    pub fn base_w(&self) -> &Tensor<T> {
        &self.base_w
    }

    pub fn base_w_mut(&mut self) -> &mut Tensor<T> {
        &mut self.base_w
    }

    pub fn spline_w(&self) -> &Tensor<T> {
        &self.spline_w
    }

    pub fn spline_w_mut(&mut self) -> &mut Tensor<T> {
        &mut self.spline_w
    }

    /// Simultaneous mutable access to all parameter tensors.
    pub fn split_params_mut(&mut self) -> (&mut [Tensor<T>], (&mut Tensor<T>, &mut Tensor<T>)) {
        (&mut self.coef, (&mut self.base_w, &mut self.spline_w))
    }

    fn check_width(&self, got: usize) -> Result<(), KanError> {
        if got != self.in_dim {
            return Err(KanError::DimensionMismatch {
                expected: self.in_dim,
                got,
            });
        }
        Ok(())
    }

    /// Evaluate at one input vector (entries clamped into the grid range).
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, KanError> {
        self.check_width(x.len())?;
        let nb = self.grid.basis_count();
        let mut out = vec![T::zero(); self.out_dim];
        let mut phi = vec![T::zero(); nb];
        let mut scratch = vec![T::zero(); nb + self.grid.degree()];
        for i in 0..self.in_dim {
            let xc = x[i].max(self.grid.lo()).min(self.grid.hi());
            self.grid.basis_into(xc, &mut phi, &mut scratch);
            let s = silu(xc);
            let coef = self.coef[i].data();
            for j in 0..self.out_dim {
                let mut spline = T::zero();
                for m in 0..nb {
                    spline += coef[j * nb + m] * phi[m];
                }
                out[j] += self.base_w.at2(j, i) * s + self.spline_w.at2(j, i) * spline;
            }
        }
        Ok(out)
    }

    /// Evaluate a batch of rows (`[rows, in_dim]` → `[rows, out_dim]`).
    pub fn forward_batch(&self, batch: &Tensor<T>) -> Result<Tensor<T>, KanError> {
        if batch.shape().len() != 2 {
            return Err(KanError::DimensionMismatch {
                expected: self.in_dim,
                got: 0,
            });
        }
        self.check_width(batch.shape()[1])?;
        let rows = batch.shape()[0];
        let mut out = Vec::with_capacity(rows * self.out_dim);
        for r in 0..rows {
            let row = &batch.data()[r * self.in_dim..(r + 1) * self.in_dim];
            out.extend(self.forward(row)?);
        }
        Tensor::new(vec![rows, self.out_dim], out)
            .map_err(|e| KanError::NonFinite(e.to_string()))
    }

    /// Analytic Jacobian `∂out/∂x` at one input (`[out_dim, in_dim]`).
    /// Columns for inputs outside the grid range are zero (clamped region).
    pub fn input_jacobian(&self, x: &[T]) -> Result<Tensor<T>, KanError> {
        self.check_width(x.len())?;
        let nb = self.grid.basis_count();
        let mut jac = Tensor::zeros(vec![self.out_dim, self.in_dim]);
        let mut dphi = vec![T::zero(); nb];
        let mut scratch = vec![T::zero(); nb + self.grid.degree()];
        for i in 0..self.in_dim {
            if x[i] < self.grid.lo() || x[i] > self.grid.hi() {
                continue;
            }
            self.grid.basis_derivative_into(x[i], &mut dphi, &mut scratch);
            let ds = silu_deriv(x[i]);
            let coef = self.coef[i].data();
            for j in 0..self.out_dim {
                let mut spline = T::zero();
                for m in 0..nb {
                    spline += coef[j * nb + m] * dphi[m];
                }
                jac.data_mut()[j * self.in_dim + i] =
                    self.base_w.at2(j, i) * ds + self.spline_w.at2(j, i) * spline;
            }
        }
        Ok(jac)
    }
}

/// A stack of layers applied in order.
#[derive(Debug, Clone, PartialEq)]
pub struct KanStack<T> {
    layers: Vec<KanLayer<T>>,
}

impl<T: Scalar> KanStack<T> {
    pub fn new(layers: Vec<KanLayer<T>>) -> Self {
        assert!(!layers.is_empty(), "stack needs at least one layer");
        Self { layers }
    }

    pub fn layers(&self) -> &[KanLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [KanLayer<T>] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, KanError> {
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    /// Chain-rule Jacobian of the whole stack at `x`.
    pub fn input_jacobian(&self, x: &[T]) -> Result<Tensor<T>, KanError> {
        let mut cur = x.to_vec();
        let mut jac: Option<Tensor<T>> = None;
        for layer in &self.layers {
            let local = layer.input_jacobian(&cur)?;
            jac = Some(match jac {
                None => local,
                Some(prev) => matmul2(&local, &prev),
            });
            cur = layer.forward(&cur)?;
        }
        Ok(jac.expect("non-empty stack"))
    }
}

fn matmul2<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    debug_assert_eq!(k, b.shape()[0]);
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        for p in 0..k {
            let aip = a.data()[i * k + p];
            for j in 0..n {
                out.data_mut()[i * n + j] += aip * b.data()[p * n + j];
            }
        }
    }
    out
}

// ── tape-side evaluation ────────────────────────────────────────────────

/// Tape handles for one layer's parameters, registered in a fixed order.
pub struct KanLayerNodes {
    pub coef: Vec<NodeId>,
    pub base_w: NodeId,
    pub spline_w: NodeId,
}

impl KanLayerNodes {
    pub fn register<T: Scalar>(tape: &mut Tape<T>, layer: &KanLayer<T>) -> Self {
        Self {
            coef: layer.coef().iter().map(|c| tape.input(c.clone())).collect(),
            base_w: tape.input(layer.base_w().clone()),
            spline_w: tape.input(layer.spline_w().clone()),
        }
    }
}

/// Precomputed per-feature design data for a batch of raw feature rows.
///
/// Spline bases and activations of the (normalized, clamped) inputs are
/// constants with respect to the parameters, so the layer's output — and its
/// derivative along each raw input — is built from matrix products of these
/// constants against the parameter tensors.
pub struct KanDesign<T> {
    pub rows: usize,
    /// Basis values per feature: `[rows, basis_count]`.
    pub phi: Vec<Tensor<T>>,
    /// Basis derivatives per feature, scaled by d(normalized)/d(raw).
    pub dphi: Vec<Tensor<T>>,
    /// `silu` of the clamped input, one column per feature: `[rows, 1]`.
    pub silu_col: Vec<Tensor<T>>,
    /// `silu'` scaled by d(normalized)/d(raw), zero outside the grid range.
    pub dsilu_col: Vec<Tensor<T>>,
}

impl<T: Scalar> KanDesign<T> {
    /// Build from raw feature rows (`[rows, width]`). When a normalizer is
    /// given, features are normalized first and derivative entries carry the
    /// normalization scale; otherwise features are used as-is with scale 1.
    pub fn build(
        grid: &SplineGrid<T>,
        normalizer: Option<&FeatureNormalizer<T>>,
        raw: &Tensor<T>,
    ) -> Self {
        let rows = raw.shape()[0];
        let width = raw.shape()[1];
        let nb = grid.basis_count();
        let mut phi = vec![Tensor::zeros(vec![rows, nb]); width];
        let mut dphi = vec![Tensor::zeros(vec![rows, nb]); width];
        let mut silu_col = vec![Tensor::zeros(vec![rows, 1]); width];
        let mut dsilu_col = vec![Tensor::zeros(vec![rows, 1]); width];
        let mut scratch = vec![T::zero(); nb + grid.degree()];
        let mut buf = vec![T::zero(); nb];
        for i in 0..width {
            for r in 0..rows {
                let raw_v = raw.data()[r * width + i];
                let (xn, scale) = match normalizer {
                    Some(n) => (n.normalize(i, raw_v), n.scale(i)),
                    None => (raw_v, T::one()),
                };
                let xc = xn.max(grid.lo()).min(grid.hi());
                grid.basis_into(xc, &mut buf, &mut scratch);
                phi[i].data_mut()[r * nb..(r + 1) * nb].copy_from_slice(&buf);
                silu_col[i].data_mut()[r] = silu(xc);
                if xn >= grid.lo() && xn <= grid.hi() {
                    grid.basis_derivative_into(xn, &mut buf, &mut scratch);
                    for m in 0..nb {
                        dphi[i].data_mut()[r * nb + m] = buf[m] * scale;
                    }
                    dsilu_col[i].data_mut()[r] = silu_deriv(xn) * scale;
                }
            }
        }
        Self {
            rows,
            phi,
            dphi,
            silu_col,
            dsilu_col,
        }
    }
}

/// Tape forward pass over a design batch: returns a `[rows, out_dim]` node.
pub fn tape_forward<T: Scalar>(
    tape: &mut Tape<T>,
    layer: &KanLayer<T>,
    nodes: &KanLayerNodes,
    design: &KanDesign<T>,
    ones: NodeId,
) -> Result<NodeId, DiffError> {
    let mut acc: Option<NodeId> = None;
    for i in 0..layer.in_dim() {
        let phi = tape.constant(design.phi[i].clone());
        let coef_t = tape.transpose(nodes.coef[i])?;
        let spline = tape.matmul(phi, coef_t)?;
        let sw_col = tape.slice(nodes.spline_w, 1, i, 1)?;
        let sw_row = tape.transpose(sw_col)?;
        let sw_tile = tape.matmul(ones, sw_row)?;
        let spline_term = tape.mul(spline, sw_tile)?;
        let silu_c = tape.constant(design.silu_col[i].clone());
        let bw_col = tape.slice(nodes.base_w, 1, i, 1)?;
        let bw_row = tape.transpose(bw_col)?;
        let base_term = tape.matmul(silu_c, bw_row)?;
        let term = tape.add(spline_term, base_term)?;
        acc = Some(match acc {
            None => term,
            Some(prev) => tape.add(prev, term)?,
        });
    }
    Ok(acc.expect("layer has at least one input"))
}

/// Tape value of `∂out/∂raw_k` over a design batch (`[rows, out_dim]`).
pub fn tape_input_derivative<T: Scalar>(
    tape: &mut Tape<T>,
    nodes: &KanLayerNodes,
    design: &KanDesign<T>,
    ones: NodeId,
    k: usize,
) -> Result<NodeId, DiffError> {
    let dphi = tape.constant(design.dphi[k].clone());
    let coef_t = tape.transpose(nodes.coef[k])?;
    let spline = tape.matmul(dphi, coef_t)?;
    let sw_col = tape.slice(nodes.spline_w, 1, k, 1)?;
    let sw_row = tape.transpose(sw_col)?;
    let sw_tile = tape.matmul(ones, sw_row)?;
    let spline_term = tape.mul(spline, sw_tile)?;
    let dsilu = tape.constant(design.dsilu_col[k].clone());
    let bw_col = tape.slice(nodes.base_w, 1, k, 1)?;
    let bw_row = tape.transpose(bw_col)?;
    let base_term = tape.matmul(dsilu, bw_row)?;
    tape.add(spline_term, base_term)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::finite_difference_check;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn test_layer(in_dim: usize, out_dim: usize, seed: u64) -> KanLayer<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        KanLayer::init(in_dim, out_dim, SplineGrid::default_unit(), &mut rng)
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let layer = KanLayer::<f64>::zeros(3, 2, SplineGrid::default_unit());
        let out = layer.forward(&[0.3, -0.5, 0.9]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn spline_weights_zero_reduces_to_silu_mix() {
        let mut layer = test_layer(3, 2, 7);
        for v in layer.spline_w_mut().data_mut() {
            *v = 0.0;
        }
        let x = [0.4, -0.2, 0.8];
        let out = layer.forward(&x).unwrap();
        for j in 0..2 {
            let expected: f64 = (0..3).map(|i| layer.base_w().at2(j, i) * silu(x[i])).sum();
            assert!((out[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let layer = test_layer(3, 2, 7);
        assert!(matches!(
            layer.forward(&[1.0, 2.0]),
            Err(KanError::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let layer = test_layer(4, 3, 11);
        let x = vec![0.35, -0.62, 0.11, 0.83];
        let jac = layer.input_jacobian(&x).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut hi_x = x.clone();
            hi_x[i] += h;
            let mut lo_x = x.clone();
            lo_x[i] -= h;
            let hi = layer.forward(&hi_x).unwrap();
            let lo = layer.forward(&lo_x).unwrap();
            for j in 0..3 {
                let fd = (hi[j] - lo[j]) / (2.0 * h);
                assert!(
                    (jac.at2(j, i) - fd).abs() < 1e-5,
                    "j={j} i={i} analytic={} fd={fd}",
                    jac.at2(j, i)
                );
            }
        }
    }

    #[test]
    fn constant_layer_has_zero_jacobian() {
        let mut layer = KanLayer::<f64>::zeros(2, 2, SplineGrid::default_unit());
        // Equal spline coefficients make each spline constant (partition of
        // unity); base weights stay zero.
        for c in layer.coef_mut() {
            for v in c.data_mut() {
                *v = 3.5;
            }
        }
        for v in layer.spline_w_mut().data_mut() {
            *v = 1.0;
        }
        let jac = layer.input_jacobian(&[0.2, -0.7]).unwrap();
        for v in jac.data() {
            assert!(v.abs() < 1e-12, "{v}");
        }
        let out = layer.forward(&[0.2, -0.7]).unwrap();
        assert!((out[0] - 7.0).abs() < 1e-12);
    }

    #[test]
    fn forward_is_constant_outside_grid_range() {
        let layer = test_layer(2, 2, 3);
        let at_hi = layer.forward(&[1.0, 0.0]).unwrap();
        for delta in [0.01, 0.5, 3.0] {
            let beyond = layer.forward(&[1.0 + delta, 0.0]).unwrap();
            assert_eq!(at_hi, beyond, "delta={delta}");
        }
    }

    #[test]
    fn identity_fit_layer_has_unit_jacobian() {
        // Least-squares fit of the spline coefficients to f(x) = x; cubic
        // splines reproduce linear functions exactly on the grid range.
        let grid = SplineGrid::<f64>::default_unit();
        let nb = grid.basis_count();
        let samples: Vec<f64> = (0..200).map(|j| -1.0 + 2.0 * j as f64 / 199.0).collect();
        let mut ata = vec![0.0f64; nb * nb];
        let mut atb = vec![0.0f64; nb];
        for &x in &samples {
            let b = grid.basis(x);
            for p in 0..nb {
                atb[p] += b[p] * x;
                for q in 0..nb {
                    ata[p * nb + q] += b[p] * b[q];
                }
            }
        }
        // Plain Gaussian elimination with partial pivoting.
        let mut a = ata;
        let mut rhs = atb;
        for col in 0..nb {
            let piv = (col..nb)
                .max_by(|&r1, &r2| {
                    a[r1 * nb + col]
                        .abs()
                        .partial_cmp(&a[r2 * nb + col].abs())
                        .unwrap()
                })
                .unwrap();
            for j in 0..nb {
                a.swap(col * nb + j, piv * nb + j);
            }
            rhs.swap(col, piv);
            let d = a[col * nb + col];
            for r in col + 1..nb {
                let f = a[r * nb + col] / d;
                for j in col..nb {
                    a[r * nb + j] -= f * a[col * nb + j];
                }
                rhs[r] -= f * rhs[col];
            }
        }
        let mut c = vec![0.0f64; nb];
        for r in (0..nb).rev() {
            let mut acc = rhs[r];
            for j in r + 1..nb {
                acc -= a[r * nb + j] * c[j];
            }
            c[r] = acc / a[r * nb + r];
        }

        let mut layer = KanLayer::<f64>::zeros(1, 1, grid);
        layer.coef_mut()[0].data_mut().copy_from_slice(&c);
        layer.spline_w_mut().data_mut()[0] = 1.0;

        for &x in &[-0.9, -0.4, 0.0, 0.33, 0.8] {
            let out = layer.forward(&[x]).unwrap();
            assert!((out[0] - x).abs() < 1e-9, "fit value at {x}: {}", out[0]);
            let jac = layer.input_jacobian(&[x]).unwrap();
            assert!((jac.data()[0] - 1.0).abs() < 1e-7, "jacobian at {x}: {}", jac.data()[0]);
        }
    }

    #[test]
    fn stack_jacobian_matches_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let grid = SplineGrid::default_unit();
        let stack = KanStack::new(vec![
            KanLayer::init(3, 4, grid.clone(), &mut rng),
            KanLayer::init(4, 2, grid, &mut rng),
        ]);
        let x: Vec<f64> = vec![0.25, -0.4, 0.6];
        let jac = stack.input_jacobian(&x).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut hi_x = x.clone();
            hi_x[i] += h;
            let mut lo_x = x.clone();
            lo_x[i] -= h;
            let hi = stack.forward(&hi_x).unwrap();
            let lo = stack.forward(&lo_x).unwrap();
            for j in 0..2 {
                let fd = (hi[j] - lo[j]) / (2.0 * h);
                assert!((jac.at2(j, i) - fd).abs() < 1e-5, "j={j} i={i}");
            }
        }
    }

    #[test]
    fn tape_forward_matches_analytic_batch() {
        let layer = test_layer(3, 5, 19);
        let raw = Tensor::new(
            vec![4, 3],
            vec![0.1, -0.9, 0.4, 0.8, 0.2, -0.3, -1.5, 0.0, 2.0, 0.33, 0.66, -0.99],
        )
        .unwrap();
        let analytic = layer.forward_batch(&raw).unwrap();
        let design = KanDesign::build(layer.grid(), None, &raw);
        let mut tape = Tape::new();
        let ones = tape.constant(Tensor::filled(vec![4, 1], 1.0).unwrap());
        let nodes = KanLayerNodes::register(&mut tape, &layer);
        let out = tape_forward(&mut tape, &layer, &nodes, &design, ones).unwrap();
        for (a, b) in tape.value(out).data().iter().zip(analytic.data()) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn tape_gradient_matches_finite_differences() {
        let layer = test_layer(2, 3, 29);
        let raw = Tensor::new(vec![3, 2], vec![0.3, -0.5, 0.7, 0.1, -0.2, 0.9]).unwrap();
        let design = KanDesign::build(layer.grid(), None, &raw);

        let eval = |l: &KanLayer<f64>| -> (f64, Vec<Vec<f64>>) {
            let mut tape = Tape::new();
            let ones = tape.constant(Tensor::filled(vec![3, 1], 1.0).unwrap());
            let nodes = KanLayerNodes::register(&mut tape, l);
            let out = tape_forward(&mut tape, l, &nodes, &design, ones).unwrap();
            let sq = tape.square(out);
            let loss = tape.mean(sq);
            tape.backward(loss).unwrap();
            let grads = vec![
                tape.grad_or_zeros(nodes.coef[0]),
                tape.grad_or_zeros(nodes.coef[1]),
                tape.grad_or_zeros(nodes.base_w),
                tape.grad_or_zeros(nodes.spline_w),
            ];
            (tape.value(loss).item().unwrap(), grads)
        };

        let (_, grads) = eval(&layer);
        // Check the base-weight gradient coordinate-by-coordinate.
        let base = layer.base_w().clone();
        let analytic = Tensor::new(vec![3, 2], grads[2].clone()).unwrap();
        let report = finite_difference_check(
            |t: &Tensor<f64>| {
                let mut probe = layer.clone();
                *probe.base_w_mut() = t.clone();
                Ok(eval(&probe).0)
            },
            &base,
            &analytic,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9, "{}", report.max_rel_error);

        // And one spline-coefficient tensor.
        let coef0 = layer.coef()[0].clone();
        let analytic = Tensor::new(coef0.shape().to_vec(), grads[0].clone()).unwrap();
        let report = finite_difference_check(
            |t: &Tensor<f64>| {
                let mut probe = layer.clone();
                probe.coef_mut()[0] = t.clone();
                Ok(eval(&probe).0)
            },
            &coef0,
            &analytic,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-9, "{}", report.max_rel_error);
    }

    #[test]
    fn tape_input_derivative_matches_analytic_jacobian() {
        let layer = test_layer(3, 4, 31);
        let raw = Tensor::new(vec![2, 3], vec![0.2, -0.4, 0.6, -0.8, 0.5, 0.05]).unwrap();
        let design = KanDesign::build(layer.grid(), None, &raw);
        let mut tape = Tape::new();
        let ones = tape.constant(Tensor::filled(vec![2, 1], 1.0).unwrap());
        let nodes = KanLayerNodes::register(&mut tape, &layer);
        for k in 0..3 {
            let d = tape_input_derivative(&mut tape, &nodes, &design, ones, k).unwrap();
            for r in 0..2 {
                let row = &raw.data()[r * 3..(r + 1) * 3];
                let jac = layer.input_jacobian(row).unwrap();
                for j in 0..4 {
                    let got = tape.value(d).at2(r, j);
                    assert!((got - jac.at2(j, k)).abs() < 1e-13, "r={r} j={j} k={k}");
                }
            }
        }
    }
}

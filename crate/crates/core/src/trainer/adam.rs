//! Adam optimizer with bias correction, plus global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::scalar::{lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment estimates per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shapes: &[Vec<usize>]) -> Self {
        Self {
            m: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s.clone())).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update: `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`, bias-corrected
    /// step `θ ← θ − lr·m̂ / (√v̂ + ε)`.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<T>],
        grads: &[Tensor<T>],
        cfg: &AdamConfig,
    ) {
        assert_eq!(params.len(), self.m.len(), "parameter count changed");
        assert_eq!(grads.len(), self.m.len(), "gradient count changed");
        self.t += 1;
        let b1 = lit::<T>(cfg.beta1);
        let b2 = lit::<T>(cfg.beta2);
        let lr = lit::<T>(cfg.lr);
        let eps = lit::<T>(cfg.epsilon);
        let one = T::one();
        let bc1 = one - b1.powi(self.t as i32);
        let bc2 = one - b2.powi(self.t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..g.numel() {
                let gi = g.data()[i];
                let mi = b1 * m.data()[i] + (one - b1) * gi;
                let vi = b2 * v.data()[i] + (one - b2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                p.data_mut()[i] = p.data()[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Scale gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<T: Scalar>(grads: &mut [Tensor<T>], max_norm: T) -> T {
    let mut sq = T::zero();
    for g in grads.iter() {
        for &v in g.data() {
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > T::zero() {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(&[vec![2]]);
        let mut p = Tensor::new(vec![2], vec![1.0f64, -2.0]).unwrap();
        // Seed nonzero moments with one real step.
        let g = Tensor::new(vec![2], vec![0.5, -0.5]).unwrap();
        state.step(&mut [&mut p], std::slice::from_ref(&g), &cfg);
        let m_before = state.m[0].data()[0];
        let p_before = p.clone();
        let zero = Tensor::zeros(vec![2]);
        state.step(&mut [&mut p], std::slice::from_ref(&zero), &cfg);
        // Parameters move only microscopically (m̂ shrinks but is nonzero);
        // the first moment decays by exactly β₁.
        assert!((state.m[0].data()[0] - 0.9 * m_before).abs() < 1e-15);
        for i in 0..2 {
            assert!((p.data()[i] - p_before.data()[i]).abs() < cfg.lr * 1.0);
        }
    }

    #[test]
    fn first_step_is_signed_learning_rate() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(&[vec![3]]);
        let mut p = Tensor::new(vec![3], vec![0.0f64, 0.0, 0.0]).unwrap();
        let g = Tensor::new(vec![3], vec![10.0, -0.003, 0.0]).unwrap();
        state.step(&mut [&mut p], std::slice::from_ref(&g), &cfg);
        // Bias-corrected first step ≈ −lr·sign(g) regardless of magnitude.
        assert!((p.data()[0] + cfg.lr).abs() < 1e-6);
        assert!((p.data()[1] - cfg.lr).abs() < 1e-5);
        assert_eq!(p.data()[2], 0.0);
    }

    #[test]
    fn quadratic_converges_like_the_reference_loop() {
        // Reference Adam implementation, written independently as an oracle.
        let (lr, b1, b2, eps) = (0.1f64, 0.9, 0.999, 1e-8);
        let mut x_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut trace = Vec::new();
        for t in 1..=200u32 {
            let g = 2.0 * x_ref;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t as i32));
            let v_hat = v / (1.0 - b2.powi(t as i32));
            x_ref -= lr * m_hat / (v_hat.sqrt() + eps);
            trace.push(x_ref);
        }
        assert!(x_ref.abs() < 0.05, "oracle end point {x_ref}");

        let cfg = AdamConfig {
            lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        };
        let mut state = AdamState::new(&[vec![1]]);
        let mut p = Tensor::new(vec![1], vec![1.0]).unwrap();
        for step in 0..200 {
            let g = Tensor::new(vec![1], vec![2.0 * p.data()[0]]).unwrap();
            state.step(&mut [&mut p], std::slice::from_ref(&g), &cfg);
            assert!(
                (p.data()[0] - trace[step]).abs() < 1e-12,
                "diverged from oracle at step {step}"
            );
        }
        assert!(p.data()[0].abs() < 0.05);
    }

    #[test]
    fn clipping_caps_the_global_norm() {
        let mut grads = vec![
            Tensor::new(vec![2], vec![3.0f64, 4.0]).unwrap(),
            Tensor::new(vec![1], vec![12.0]).unwrap(),
        ];
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 13.0).abs() < 1e-12);
        let mut sq = 0.0f64;
        for g in &grads {
            for v in g.data() {
                sq += v * v;
            }
        }
        assert!((sq.sqrt() - 1.0).abs() < 1e-12);
        // Under the cap nothing changes.
        let mut small = vec![Tensor::new(vec![1], vec![0.5f64]).unwrap()];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0].data()[0], 0.5);
    }
}

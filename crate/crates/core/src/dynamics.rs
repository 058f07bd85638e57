//! Structured inverse-dynamics head: factorized inertia, learned potential,
//! Coriolis terms from inertia derivatives, and damped least-squares contact
//! force recovery with non-negative projection.

use thiserror::Error;

use crate::diffcore::Tensor;
use crate::kan::{FeatureNormalizer, KanError, KanStack};
use crate::linalg::{matvec, transpose};
use crate::scalar::{lit, sigmoid, softplus, Scalar};

#[derive(Debug, Error)]
pub enum DynError {
    #[error("dynamics: dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("dynamics: non-finite output from {head} (entry {index})")]
    NonFinite { head: &'static str, index: usize },
    #[error("dynamics: invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kan(#[from] KanError),
}

/// Number of lower-triangular entries for an `n × n` factor.
pub fn tri_entry_count(n: usize) -> usize {
    n * (n + 1) / 2
}

/// `(row, col)` pairs of the strict lower triangle in layout order.
///
/// The factor-entry layout everywhere in this crate is: the `n` diagonal
/// entries first, then the strict-lower entries row-major.
pub fn strict_lower_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for r in 1..n {
        for c in 0..r {
            pairs.push((r, c));
        }
    }
    pairs
}

/// Build the dense lower-triangular factor from layout-ordered entries.
pub fn lower_triangular_from_entries<T: Scalar>(diag: &[T], offd: &[T], n: usize) -> Tensor<T> {
    debug_assert_eq!(diag.len(), n);
    debug_assert_eq!(offd.len(), n * (n - 1) / 2);
    let mut l = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        l.data_mut()[i * n + i] = diag[i];
    }
    for (e, (r, c)) in strict_lower_pairs(n).into_iter().enumerate() {
        l.data_mut()[r * n + c] = offd[e];
    }
    l
}

/// `L Lᵀ + ε I` for a dense lower-triangular factor.
pub fn spd_from_cholesky<T: Scalar>(l: &Tensor<T>, epsilon: T) -> Tensor<T> {
    let n = l.shape()[0];
    let mut m = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..n {
            let mut acc = T::zero();
            for p in 0..=i.min(j) {
                acc += l.data()[i * n + p] * l.data()[j * n + p];
            }
            m.data_mut()[i * n + j] = acc;
        }
        m.data_mut()[i * n + i] += epsilon;
    }
    m
}

/// Inertia head: a spline stack mapping configuration to factor entries,
/// softplus on the diagonal, and an `ε I` floor.
#[derive(Debug, Clone)]
pub struct InertiaHead<T> {
    n: usize,
    stack: KanStack<T>,
    normalizer: Option<FeatureNormalizer<T>>,
    epsilon: T,
}

impl<T: Scalar> InertiaHead<T> {
    pub fn new(
        n: usize,
        stack: KanStack<T>,
        normalizer: Option<FeatureNormalizer<T>>,
        epsilon: T,
    ) -> Result<Self, DynError> {
        if stack.in_dim() != n {
            return Err(DynError::DimensionMismatch {
                what: "inertia stack input",
                expected: n,
                got: stack.in_dim(),
            });
        }
        if stack.out_dim() != tri_entry_count(n) {
            return Err(DynError::DimensionMismatch {
                what: "inertia stack output",
                expected: tri_entry_count(n),
                got: stack.out_dim(),
            });
        }
        if epsilon <= T::zero() {
            return Err(DynError::InvalidConfig("inertia epsilon must be > 0".into()));
        }
        Ok(Self {
            n,
            stack,
            normalizer,
            epsilon,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn stack(&self) -> &KanStack<T> {
        &self.stack
    }

    pub fn stack_mut(&mut self) -> &mut KanStack<T> {
        &mut self.stack
    }

    pub fn normalizer(&self) -> Option<&FeatureNormalizer<T>> {
        self.normalizer.as_ref()
    }

    fn network_input(&self, q: &[T]) -> Vec<T> {
        match &self.normalizer {
            Some(norm) => norm.normalize_vec(q),
            None => q.to_vec(),
        }
    }

    /// Raw factor entries (pre-softplus diagonal) at `q`.
    pub fn raw_entries(&self, q: &[T]) -> Result<Vec<T>, DynError> {
        self.check_q(q)?;
        let entries = self.stack.forward(&self.network_input(q))?;
        if let Some(index) = entries.iter().position(|v| !v.is_finite()) {
            return Err(DynError::NonFinite {
                head: "inertia factor network",
                index,
            });
        }
        Ok(entries)
    }

    /// Dense lower-triangular factor with softplus-positive diagonal.
    pub fn factor(&self, q: &[T]) -> Result<Tensor<T>, DynError> {
        let entries = self.raw_entries(q)?;
        let diag: Vec<T> = entries[..self.n].iter().map(|&v| softplus(v)).collect();
        Ok(lower_triangular_from_entries(
            &diag,
            &entries[self.n..],
            self.n,
        ))
    }

    /// `M(q) = L Lᵀ + ε I`: symmetric with minimum eigenvalue ≥ ε.
    pub fn assemble_inertia(&self, q: &[T]) -> Result<Tensor<T>, DynError> {
        Ok(spd_from_cholesky(&self.factor(q)?, self.epsilon))
    }

    /// `∂L/∂q_k` for every `k`, as dense lower-triangular matrices.
    pub fn factor_gradient(&self, q: &[T]) -> Result<Vec<Tensor<T>>, DynError> {
        self.check_q(q)?;
        let x = self.network_input(q);
        let raw = self.stack.forward(&x)?;
        let jac = self.stack.input_jacobian(&x)?; // [entries, n] wrt normalized input
        let pairs = strict_lower_pairs(self.n);
        let mut grads = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let scale = match &self.normalizer {
                Some(norm) => norm.scale(k),
                None => T::one(),
            };
            let mut dl = Tensor::zeros(vec![self.n, self.n]);
            for i in 0..self.n {
                let chain = sigmoid(raw[i]);
                dl.data_mut()[i * self.n + i] = chain * jac.at2(i, k) * scale;
            }
            for (e, &(r, c)) in pairs.iter().enumerate() {
                dl.data_mut()[r * self.n + c] = jac.at2(self.n + e, k) * scale;
            }
            grads.push(dl);
        }
        Ok(grads)
    }

    /// `∂M/∂q_k = (∂L/∂q_k) Lᵀ + L (∂L/∂q_k)ᵀ` for every `k`.
    pub fn inertia_gradient(&self, q: &[T]) -> Result<Vec<Tensor<T>>, DynError> {
        let l = self.factor(q)?;
        let dls = self.factor_gradient(q)?;
        Ok(dls
            .into_iter()
            .map(|dl| {
                let a = crate::linalg::matmul(&dl, &transpose(&l));
                let b = transpose(&a);
                let n = self.n;
                let mut out = Tensor::zeros(vec![n, n]);
                for i in 0..n * n {
                    out.data_mut()[i] = a.data()[i] + b.data()[i];
                }
                out
            })
            .collect())
    }

    fn check_q(&self, q: &[T]) -> Result<(), DynError> {
        if q.len() != self.n {
            return Err(DynError::DimensionMismatch {
                what: "configuration vector",
                expected: self.n,
                got: q.len(),
            });
        }
        Ok(())
    }
}

/// Coriolis matrix from inertia derivatives via the standard symmetric
/// combination `C_ij = ½ Σ_k (∂M_ij/∂q_k + ∂M_ik/∂q_j − ∂M_jk/∂q_i) q̇_k`,
/// which guarantees that `Ṁ − 2C` is skew-symmetric.
pub fn coriolis_matrix<T: Scalar>(
    head: &InertiaHead<T>,
    q: &[T],
    qd: &[T],
) -> Result<Tensor<T>, DynError> {
    if qd.len() != head.n() {
        return Err(DynError::DimensionMismatch {
            what: "velocity vector",
            expected: head.n(),
            got: qd.len(),
        });
    }
    let dm = head.inertia_gradient(q)?;
    Ok(coriolis_from_inertia_gradient(&dm, qd))
}

/// Same combination starting from precomputed `∂M/∂q_k` matrices.
pub fn coriolis_from_inertia_gradient<T: Scalar>(dm: &[Tensor<T>], qd: &[T]) -> Tensor<T> {
    let n = qd.len();
    let half = lit::<T>(0.5);
    // A = Σ_k qd_k ∂M/∂q_k  (= Ṁ along qd); B's column j is (∂M/∂q_j) qd.
    let mut a: Tensor<T> = Tensor::zeros(vec![n, n]);
    let mut b: Tensor<T> = Tensor::zeros(vec![n, n]);
    for k in 0..n {
        let dk = &dm[k];
        for i in 0..n * n {
            a.data_mut()[i] += qd[k] * dk.data()[i];
        }
        let col = matvec(dk, qd);
        for i in 0..n {
            b.data_mut()[i * n + k] = col[i];
        }
    }
    let mut c = Tensor::zeros(vec![n, n]);
    for i in 0..n {
        for j in 0..n {
            c.data_mut()[i * n + j] =
                half * (a.at2(i, j) + b.at2(i, j) - b.at2(j, i));
        }
    }
    c
}

/// Potential head: a spline stack mapping configuration to a scalar.
#[derive(Debug, Clone)]
pub struct PotentialHead<T> {
    n: usize,
    stack: KanStack<T>,
    normalizer: Option<FeatureNormalizer<T>>,
}

impl<T: Scalar> PotentialHead<T> {
    pub fn new(
        n: usize,
        stack: KanStack<T>,
        normalizer: Option<FeatureNormalizer<T>>,
    ) -> Result<Self, DynError> {
        if stack.in_dim() != n {
            return Err(DynError::DimensionMismatch {
                what: "potential stack input",
                expected: n,
                got: stack.in_dim(),
            });
        }
        if stack.out_dim() != 1 {
            return Err(DynError::DimensionMismatch {
                what: "potential stack output",
                expected: 1,
                got: stack.out_dim(),
            });
        }
        Ok(Self {
            n,
            stack,
            normalizer,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stack(&self) -> &KanStack<T> {
        &self.stack
    }

    pub fn stack_mut(&mut self) -> &mut KanStack<T> {
        &mut self.stack
    }

    pub fn normalizer(&self) -> Option<&FeatureNormalizer<T>> {
        self.normalizer.as_ref()
    }

    pub fn potential(&self, q: &[T]) -> Result<T, DynError> {
        if q.len() != self.n {
            return Err(DynError::DimensionMismatch {
                what: "configuration vector",
                expected: self.n,
                got: q.len(),
            });
        }
        let x = match &self.normalizer {
            Some(norm) => norm.normalize_vec(q),
            None => q.to_vec(),
        };
        let out = self.stack.forward(&x)?;
        if !out[0].is_finite() {
            return Err(DynError::NonFinite {
                head: "potential network",
                index: 0,
            });
        }
        Ok(out[0])
    }

    /// Gravity as the gradient of the potential, `G(q) = ∇_q V(q)`.
    pub fn gravity_vector(&self, q: &[T]) -> Result<Vec<T>, DynError> {
        if q.len() != self.n {
            return Err(DynError::DimensionMismatch {
                what: "configuration vector",
                expected: self.n,
                got: q.len(),
            });
        }
        let x = match &self.normalizer {
            Some(norm) => norm.normalize_vec(q),
            None => q.to_vec(),
        };
        let jac = self.stack.input_jacobian(&x)?; // [1, n]
        let mut g = Vec::with_capacity(self.n);
        for k in 0..self.n {
            let scale = match &self.normalizer {
                Some(norm) => norm.scale(k),
                None => T::one(),
            };
            g.push(jac.at2(0, k) * scale);
        }
        Ok(g)
    }
}

/// Bilateral normal contact Jacobian: exactly two rows mapping joint
/// velocities to the feet's vertical velocities.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactJacobian<T> {
    matrix: Tensor<T>,
}

impl<T: Scalar> ContactJacobian<T> {
    pub fn new(matrix: Tensor<T>) -> Result<Self, DynError> {
        if matrix.shape().len() != 2 || matrix.shape()[0] != 2 {
            return Err(DynError::DimensionMismatch {
                what: "contact jacobian rows",
                expected: 2,
                got: matrix.shape().first().copied().unwrap_or(0),
            });
        }
        Ok(Self { matrix })
    }

    pub fn from_rows(left: &[T], right: &[T]) -> Result<Self, DynError> {
        if left.len() != right.len() {
            return Err(DynError::DimensionMismatch {
                what: "contact jacobian columns",
                expected: left.len(),
                got: right.len(),
            });
        }
        let mut data = left.to_vec();
        data.extend_from_slice(right);
        let matrix = Tensor::new(vec![2, left.len()], data)
            .map_err(|_| DynError::InvalidConfig("non-finite contact jacobian".into()))?;
        Self::new(matrix)
    }

    pub fn n(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn matrix(&self) -> &Tensor<T> {
        &self.matrix
    }

    pub fn row(&self, foot: usize) -> &[T] {
        let n = self.n();
        &self.matrix.data()[foot * n..(foot + 1) * n]
    }
}

/// Damping configuration for the regularized pseudoinverse solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DlsConfig<T> {
    lambda: T,
}

impl<T: Scalar> DlsConfig<T> {
    pub fn new(lambda: T) -> Result<Self, DynError> {
        if !(lambda > T::zero()) {
            return Err(DynError::InvalidConfig(format!(
                "dls damping must be > 0, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }
}

impl<T: Scalar> Default for DlsConfig<T> {
    fn default() -> Self {
        Self {
            lambda: lit(0.05),
        }
    }
}

/// `τ_c = M q̈ + C q̇ + G − τ_eff`.
pub fn contact_generalized_force<T: Scalar>(
    m: &Tensor<T>,
    c: &Tensor<T>,
    g: &[T],
    qdd: &[T],
    qd: &[T],
    tau_eff: &[T],
) -> Result<Vec<T>, DynError> {
    let n = g.len();
    for (what, len) in [
        ("inertia matrix", m.shape()[0]),
        ("coriolis matrix", c.shape()[0]),
        ("acceleration", qdd.len()),
        ("velocity", qd.len()),
        ("effective actuation", tau_eff.len()),
    ] {
        if len != n {
            return Err(DynError::DimensionMismatch {
                what,
                expected: n,
                got: len,
            });
        }
    }
    let m_qdd = matvec(m, qdd);
    let c_qd = matvec(c, qd);
    Ok((0..n)
        .map(|i| m_qdd[i] + c_qd[i] + g[i] - tau_eff[i])
        .collect())
}

/// Damped least-squares force recovery:
/// `f_raw = (J Jᵀ + λ² I)⁻¹ J τ_c`, a 2×2 solve that stays finite for any
/// contact Jacobian, including rank-deficient single-foot contact.
pub fn dls_solve<T: Scalar>(
    jacobian: &ContactJacobian<T>,
    tau_c: &[T],
    cfg: &DlsConfig<T>,
) -> Result<[T; 2], DynError> {
    if tau_c.len() != jacobian.n() {
        return Err(DynError::DimensionMismatch {
            what: "contact torque",
            expected: jacobian.n(),
            got: tau_c.len(),
        });
    }
    let (rows, rhs) = {
        let l = jacobian.row(0);
        let r = jacobian.row(1);
        let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>();
        let l2 = cfg.lambda * cfg.lambda;
        (
            [dot(l, l) + l2, dot(l, r), dot(r, r) + l2],
            [dot(l, tau_c), dot(r, tau_c)],
        )
    };
    let (a, b, d) = (rows[0], rows[1], rows[2]);
    let det = a * d - b * b;
    Ok([
        (d * rhs[0] - b * rhs[1]) / det,
        (a * rhs[1] - b * rhs[0]) / det,
    ])
}

/// Projection onto the non-negative orthant (idempotent).
pub fn project_nonneg<T: Scalar>(f_raw: [T; 2]) -> [T; 2] {
    [f_raw[0].max(T::zero()), f_raw[1].max(T::zero())]
}

/// Precomputed `(J Jᵀ + λ² I)⁻¹ J`: the constant linear map from `τ_c` to the
/// raw force. Used by the training graph where `J` is data.
pub fn dls_projection_matrix<T: Scalar>(
    jacobian: &ContactJacobian<T>,
    cfg: &DlsConfig<T>,
) -> Tensor<T> {
    let n = jacobian.n();
    let l = jacobian.row(0);
    let r = jacobian.row(1);
    let dot = |a: &[T], b: &[T]| a.iter().zip(b).map(|(&x, &y)| x * y).sum::<T>();
    let l2 = cfg.lambda * cfg.lambda;
    let (a, b, d) = (dot(l, l) + l2, dot(l, r), dot(r, r) + l2);
    let det = a * d - b * b;
    let (i00, i01, i11) = (d / det, -b / det, a / det);
    let mut p = Tensor::zeros(vec![2, n]);
    for j in 0..n {
        p.data_mut()[j] = i00 * l[j] + i01 * r[j];
        p.data_mut()[n + j] = i01 * l[j] + i11 * r[j];
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::{KanLayer, SplineGrid};
    use crate::linalg::sym_eigenvalues;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_inertia_head(n: usize, seed: u64) -> InertiaHead<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let layer = KanLayer::init(n, tri_entry_count(n), SplineGrid::default_unit(), &mut rng);
        InertiaHead::new(n, KanStack::new(vec![layer]), None, 1e-3).unwrap()
    }

    fn random_potential_head(n: usize, seed: u64) -> PotentialHead<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let layer = KanLayer::init(n, 1, SplineGrid::default_unit(), &mut rng);
        PotentialHead::new(n, KanStack::new(vec![layer]), None).unwrap()
    }

    #[test]
    fn identity_factor_gives_identity_plus_floor() {
        let n = 2;
        let l = lower_triangular_from_entries(&[1.0f64, 1.0], &[0.0], n);
        let m = spd_from_cholesky(&l, 1e-3);
        assert!((m.at2(0, 0) - 1.001).abs() < 1e-15);
        assert!((m.at2(1, 1) - 1.001).abs() < 1e-15);
        assert_eq!(m.at2(0, 1), 0.0);
    }

    #[test]
    fn worked_two_by_two_factor_product() {
        // L = [[1,0],[2,1]] -> L Lᵀ + εI = [[1+ε, 2], [2, 5+ε]]
        let l = lower_triangular_from_entries(&[1.0f64, 1.0], &[2.0], 2);
        let eps = 1e-3;
        let m = spd_from_cholesky(&l, eps);
        assert!((m.at2(0, 0) - (1.0 + eps)).abs() < 1e-15);
        assert!((m.at2(0, 1) - 2.0).abs() < 1e-15);
        assert!((m.at2(1, 0) - 2.0).abs() < 1e-15);
        assert!((m.at2(1, 1) - (5.0 + eps)).abs() < 1e-15);
    }

    #[test]
    fn inertia_is_exactly_symmetric_with_eigenvalue_floor() {
        let head = random_inertia_head(4, 5);
        let mut rng = ChaCha20Rng::seed_from_u64(99);
        for _ in 0..200 {
            let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = head.assemble_inertia(&q).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(m.at2(i, j), m.at2(j, i), "exact symmetry");
                }
            }
            let eig = sym_eigenvalues(&m);
            assert!(eig[0] >= head.epsilon() - 1e-12, "min eig {}", eig[0]);
        }
    }

    #[test]
    fn inertia_gradient_matches_finite_differences() {
        let head = random_inertia_head(3, 17);
        let q = vec![0.3, -0.5, 0.7];
        let grads = head.inertia_gradient(&q).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut q_hi = q.clone();
            q_hi[k] += h;
            let mut q_lo = q.clone();
            q_lo[k] -= h;
            let m_hi = head.assemble_inertia(&q_hi).unwrap();
            let m_lo = head.assemble_inertia(&q_lo).unwrap();
            for i in 0..9 {
                let fd = (m_hi.data()[i] - m_lo.data()[i]) / (2.0 * h);
                assert!(
                    (grads[k].data()[i] - fd).abs() < 1e-6,
                    "k={k} entry={i}: {} vs fd {}",
                    grads[k].data()[i],
                    fd
                );
            }
        }
    }

    #[test]
    fn gravity_matches_finite_differences_of_potential() {
        let head = random_potential_head(4, 23);
        let q = vec![0.2, -0.6, 0.1, 0.8];
        let g = head.gravity_vector(&q).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            let mut q_hi = q.clone();
            q_hi[k] += h;
            let mut q_lo = q.clone();
            q_lo[k] -= h;
            let fd = (head.potential(&q_hi).unwrap() - head.potential(&q_lo).unwrap()) / (2.0 * h);
            assert!((g[k] - fd).abs() < 1e-5, "k={k}: {} vs {}", g[k], fd);
        }
    }

    #[test]
    fn constant_potential_has_zero_gravity() {
        let head = PotentialHead::new(
            3,
            KanStack::new(vec![KanLayer::<f64>::zeros(3, 1, SplineGrid::default_unit())]),
            None,
        )
        .unwrap();
        let g = head.gravity_vector(&[0.4, -0.1, 0.9]).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn gravity_field_is_curl_free() {
        // ∂G_i/∂q_j computed by finite differences of the gravity vector must
        // be symmetric: the field is a gradient by construction.
        let head = random_potential_head(3, 31);
        let q = vec![0.15, -0.35, 0.55];
        let h = 1e-5;
        let mut hess = [[0.0f64; 3]; 3];
        for j in 0..3 {
            let mut q_hi = q.clone();
            q_hi[j] += h;
            let mut q_lo = q.clone();
            q_lo[j] -= h;
            let g_hi = head.gravity_vector(&q_hi).unwrap();
            let g_lo = head.gravity_vector(&q_lo).unwrap();
            for i in 0..3 {
                hess[i][j] = (g_hi[i] - g_lo[i]) / (2.0 * h);
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (hess[i][j] - hess[j][i]).abs() < 1e-5,
                    "hessian asymmetry at ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn constant_inertia_network_gives_zero_coriolis() {
        let head = InertiaHead::new(
            2,
            KanStack::new(vec![KanLayer::<f64>::zeros(2, 3, SplineGrid::default_unit())]),
            None,
            1e-3,
        )
        .unwrap();
        let c = coriolis_matrix(&head, &[0.3, -0.4], &[1.0, 2.0]).unwrap();
        for v in c.data() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn zero_velocity_gives_zero_coriolis() {
        let head = random_inertia_head(3, 41);
        let c = coriolis_matrix(&head, &[0.1, 0.2, -0.3], &[0.0, 0.0, 0.0]).unwrap();
        for v in c.data() {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn skew_symmetry_of_mdot_minus_two_c() {
        let head = random_inertia_head(4, 53);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..50 {
            let q: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.9..0.9)).collect();
            let qd: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dm = head.inertia_gradient(&q).unwrap();
            let c = coriolis_from_inertia_gradient(&dm, &qd);
            // Ṁ along qd
            let mut mdot: Tensor<f64> = Tensor::zeros(vec![4, 4]);
            for k in 0..4 {
                for i in 0..16 {
                    mdot.data_mut()[i] += qd[k] * dm[k].data()[i];
                }
            }
            let mut quad = 0.0f64;
            for i in 0..4 {
                for j in 0..4 {
                    quad += x[i] * (mdot.at2(i, j) - 2.0 * c.at2(i, j)) * x[j];
                }
            }
            let xn: f64 = x.iter().map(|v| v * v).sum();
            let qdn: f64 = qd.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(
                quad.abs() <= 1e-8 * xn * (1.0 + qdn),
                "quad={quad} bound={}",
                1e-8 * xn * (1.0 + qdn)
            );
        }
    }

    #[test]
    fn statics_reduce_to_gravity() {
        let n = 3;
        let m = Tensor::zeros(vec![n, n]);
        let c = Tensor::zeros(vec![n, n]);
        let g = vec![1.0, -2.0, 0.5];
        let zero = vec![0.0; n];
        let tau_c = contact_generalized_force(&m, &c, &g, &zero, &zero, &zero).unwrap();
        assert_eq!(tau_c, g);
    }

    #[test]
    fn consistent_actuation_gives_zero_contact_force() {
        let head = random_inertia_head(3, 61);
        let pot = random_potential_head(3, 67);
        let q = vec![0.2, -0.1, 0.4];
        let qd = vec![1.0, -0.5, 0.2];
        let qdd = vec![0.3, 0.8, -1.1];
        let m = head.assemble_inertia(&q).unwrap();
        let c = coriolis_matrix(&head, &q, &qd).unwrap();
        let g = pot.gravity_vector(&q).unwrap();
        let m_qdd = matvec(&m, &qdd);
        let c_qd = matvec(&c, &qd);
        let tau_eff: Vec<f64> = (0..3).map(|i| m_qdd[i] + c_qd[i] + g[i]).collect();
        let tau_c = contact_generalized_force(&m, &c, &g, &qdd, &qd, &tau_eff).unwrap();
        for v in tau_c {
            assert!(v.abs() < 1e-14);
        }
    }

    #[test]
    fn dls_identity_jacobian_with_tiny_damping_recovers_input() {
        let j = ContactJacobian::from_rows(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap();
        let cfg = DlsConfig::new(1e-9).unwrap();
        let f = dls_solve(&j, &[3.0, -4.0], &cfg).unwrap();
        assert!((f[0] - 3.0).abs() < 1e-9);
        assert!((f[1] + 4.0).abs() < 1e-9);
    }

    #[test]
    fn dls_identity_jacobian_with_unit_damping_halves_input() {
        let j = ContactJacobian::from_rows(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap();
        let cfg = DlsConfig::new(1.0).unwrap();
        let f = dls_solve(&j, &[3.0, -4.0], &cfg).unwrap();
        assert!((f[0] - 1.5).abs() < 1e-12);
        assert!((f[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_row_stays_finite_and_vanishes_with_growing_damping() {
        let j = ContactJacobian::from_rows(&[0.0f64, 0.0, 0.0], &[0.5, -1.0, 2.0]).unwrap();
        let tau = vec![1.0, 2.0, -0.5];
        let mut prev = f64::INFINITY;
        for lambda in [1e-6, 1e-2, 1.0, 10.0] {
            let f = dls_solve(&j, &tau, &DlsConfig::new(lambda).unwrap()).unwrap();
            assert!(f[0].is_finite() && f[1].is_finite());
            assert!(f[0].abs() <= prev + 1e-12);
            prev = f[0].abs();
        }
        let f = dls_solve(&j, &tau, &DlsConfig::new(1e4).unwrap()).unwrap();
        assert!(f[1].abs() < 1e-6);
    }

    #[test]
    fn projection_examples_and_idempotence() {
        assert_eq!(project_nonneg([3.0f64, -4.0]), [3.0, 0.0]);
        assert_eq!(project_nonneg([0.0f64, 0.0]), [0.0, 0.0]);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for _ in 0..100 {
            let f = [rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0)];
            let once = project_nonneg(f);
            assert_eq!(project_nonneg(once), once);
        }
    }

    #[test]
    fn dls_projection_matrix_matches_solve() {
        let mut rng = ChaCha20Rng::seed_from_u64(71);
        for _ in 0..20 {
            let n = 5;
            let l: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let tau: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let j = ContactJacobian::from_rows(&l, &r).unwrap();
            let cfg = DlsConfig::new(0.05).unwrap();
            let direct = dls_solve(&j, &tau, &cfg).unwrap();
            let p = dls_projection_matrix(&j, &cfg);
            let via = matvec(&p, &tau);
            assert!((direct[0] - via[0]).abs() < 1e-12);
            assert!((direct[1] - via[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_must_be_positive() {
        assert!(DlsConfig::new(0.0f64).is_err());
        assert!(DlsConfig::new(-1.0f64).is_err());
    }
}

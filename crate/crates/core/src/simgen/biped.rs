//! Planar five-link biped with closed-form Lagrangian quantities.
//!
//! Generalized coordinates (n = 7):
//! `[x, z, pitch, hip_left, knee_left, hip_right, knee_right]`.
//! The torso floats in the sagittal plane; each leg is a thigh-shank chain
//! hanging from a common hip point below the torso center of mass.

use thiserror::Error;

use crate::diffcore::Tensor;
use crate::dynamics::{coriolis_from_inertia_gradient, ContactJacobian};
use crate::linalg::cholesky_solve;
use crate::scalar::{lit, Scalar};

use super::dual::{AutoDiffable, Dual, SimScalar};

/// Joint dimension of the planar biped.
pub const BIPED_N: usize = 7;

const X: usize = 0;
const Z: usize = 1;
const PITCH: usize = 2;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simgen: invalid model: {0}")]
    InvalidModel(String),
    #[error("simgen: dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("simgen: {0}")]
    Numeric(String),
}

/// Which leg a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    fn joint_indices(self) -> (usize, usize) {
        match self {
            Side::Left => (3, 4),
            Side::Right => (5, 6),
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

/// Physical parameters of the planar biped.
#[derive(Debug, Clone, PartialEq)]
pub struct BipedModel<T> {
    pub torso_mass: T,
    pub torso_inertia: T,
    /// Hip point sits this far below the torso center of mass.
    pub hip_offset: T,
    pub thigh_mass: T,
    pub thigh_inertia: T,
    pub thigh_len: T,
    pub shank_mass: T,
    pub shank_inertia: T,
    pub shank_len: T,
    pub gravity: T,
}

impl<T: Scalar> Default for BipedModel<T> {
    fn default() -> Self {
        Self {
            torso_mass: lit(10.0),
            torso_inertia: lit(0.4),
            hip_offset: lit(0.25),
            thigh_mass: lit(2.0),
            thigh_inertia: lit(2.0 * 0.45 * 0.45 / 12.0),
            thigh_len: lit(0.45),
            shank_mass: lit(1.0),
            shank_inertia: lit(1.0 * 0.45 * 0.45 / 12.0),
            shank_len: lit(0.45),
            gravity: lit(9.81),
        }
    }
}

impl<T: SimScalar> BipedModel<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("torso_mass", self.torso_mass),
            ("torso_inertia", self.torso_inertia),
            ("hip_offset", self.hip_offset),
            ("thigh_mass", self.thigh_mass),
            ("thigh_inertia", self.thigh_inertia),
            ("thigh_len", self.thigh_len),
            ("shank_mass", self.shank_mass),
            ("shank_inertia", self.shank_inertia),
            ("shank_len", self.shank_len),
            ("gravity", self.gravity),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) {
                return Err(SimError::InvalidModel(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        BIPED_N
    }

    pub fn total_mass(&self) -> T {
        self.torso_mass
            + (self.thigh_mass + self.shank_mass) * T::from_f64(2.0)
    }

    /// Standing height: torso center over feet with straight legs.
    pub fn stand_height(&self) -> T {
        self.hip_offset + self.thigh_len + self.shank_len
    }

    fn check_q(&self, q: &[T]) -> Result<(), SimError> {
        if q.len() != BIPED_N {
            return Err(SimError::DimensionMismatch {
                expected: BIPED_N,
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Mass matrix assembled from per-link Jacobians, generic over plain or
    /// dual arithmetic so configuration derivatives are exact.
    fn mass_matrix_generic<U: AutoDiffable<T>>(&self, q: &[U; BIPED_N]) -> [[U; BIPED_N]; BIPED_N] {
        let zero = U::lift(T::zero());
        let one = U::lift(T::one());
        let half = T::from_f64(0.5);
        let c = U::lift(self.hip_offset);
        let l1 = U::lift(self.thigh_len);
        let l1h = U::lift(self.thigh_len * half);
        let l2h = U::lift(self.shank_len * half);

        let mut m = [[zero; BIPED_N]; BIPED_N];
        let mut add_link = |mass: T, inertia: T, jv: &[[U; BIPED_N]; 2], jw: &[U; BIPED_N]| {
            let mass = U::lift(mass);
            let inertia = U::lift(inertia);
            for a in 0..BIPED_N {
                for b in 0..=a {
                    let lin = jv[0][a] * jv[0][b] + jv[1][a] * jv[1][b];
                    let ang = jw[a] * jw[b];
                    let add = mass * lin + inertia * ang;
                    m[a][b] = m[a][b] + add;
                    if a != b {
                        m[b][a] = m[b][a] + add;
                    }
                }
            }
        };

        // Torso: translation only along (x, z), rotation about pitch.
        {
            let mut jv = [[zero; BIPED_N]; 2];
            jv[0][X] = one;
            jv[1][Z] = one;
            let mut jw = [zero; BIPED_N];
            jw[PITCH] = one;
            add_link(self.torso_mass, self.torso_inertia, &jv, &jw);
        }

        let theta = q[PITCH];
        let (sin_t, cos_t) = (theta.ad_sin(), theta.ad_cos());
        // Hip point offset below the torso COM: d(p_hip)/dθ = (c cosθ, c sinθ).
        let hip_dx = c * cos_t;
        let hip_dz = c * sin_t;

        for side in Side::BOTH {
            let (hip, knee) = side.joint_indices();
            let a1 = theta + q[hip];
            let a2 = theta + q[hip] + q[knee];
            // Link direction d(α) = (sin α, −cos α); d'(α) = (cos α, sin α).
            let (d1x, d1z) = (a1.ad_cos(), a1.ad_sin());
            let (d2x, d2z) = (a2.ad_cos(), a2.ad_sin());

            // Thigh COM = p_hip + (l1/2) d(a1), angle a1.
            {
                let mut jv = [[zero; BIPED_N]; 2];
                jv[0][X] = one;
                jv[1][Z] = one;
                jv[0][PITCH] = hip_dx + l1h * d1x;
                jv[1][PITCH] = hip_dz + l1h * d1z;
                jv[0][hip] = l1h * d1x;
                jv[1][hip] = l1h * d1z;
                let mut jw = [zero; BIPED_N];
                jw[PITCH] = one;
                jw[hip] = one;
                add_link(self.thigh_mass, self.thigh_inertia, &jv, &jw);
            }

            // Shank COM = p_hip + l1 d(a1) + (l2/2) d(a2), angle a2.
            {
                let mut jv = [[zero; BIPED_N]; 2];
                jv[0][X] = one;
                jv[1][Z] = one;
                jv[0][PITCH] = hip_dx + l1 * d1x + l2h * d2x;
                jv[1][PITCH] = hip_dz + l1 * d1z + l2h * d2z;
                jv[0][hip] = l1 * d1x + l2h * d2x;
                jv[1][hip] = l1 * d1z + l2h * d2z;
                jv[0][knee] = l2h * d2x;
                jv[1][knee] = l2h * d2z;
                let mut jw = [zero; BIPED_N];
                jw[PITCH] = one;
                jw[hip] = one;
                jw[knee] = one;
                add_link(self.shank_mass, self.shank_inertia, &jv, &jw);
            }
        }
        m
    }

    /// `M(q)`: symmetric positive definite for every configuration.
    pub fn mass_matrix(&self, q: &[T]) -> Result<Tensor<T>, SimError> {
        self.check_q(q)?;
        let mut qa = [T::zero(); BIPED_N];
        qa.copy_from_slice(q);
        let m = self.mass_matrix_generic(&qa);
        let mut out = Tensor::zeros(vec![BIPED_N, BIPED_N]);
        for a in 0..BIPED_N {
            for b in 0..BIPED_N {
                out.data_mut()[a * BIPED_N + b] = m[a][b];
            }
        }
        Ok(out)
    }

    /// Exact `∂M/∂q_k` for every `k`, via one dual-number pass per coordinate.
    pub fn mass_matrix_gradient(&self, q: &[T]) -> Result<Vec<Tensor<T>>, SimError> {
        self.check_q(q)?;
        let mut grads = Vec::with_capacity(BIPED_N);
        for k in 0..BIPED_N {
            let mut qa = [Dual::constant(T::zero()); BIPED_N];
            for (i, slot) in qa.iter_mut().enumerate() {
                *slot = if i == k {
                    Dual::variable(q[i])
                } else {
                    Dual::constant(q[i])
                };
            }
            let m = self.mass_matrix_generic(&qa);
            let mut out = Tensor::zeros(vec![BIPED_N, BIPED_N]);
            for a in 0..BIPED_N {
                for b in 0..BIPED_N {
                    out.data_mut()[a * BIPED_N + b] = m[a][b].du;
                }
            }
            grads.push(out);
        }
        Ok(grads)
    }

    /// Coriolis matrix from the Christoffel combination of `∂M/∂q`.
    pub fn coriolis_matrix(&self, q: &[T], qd: &[T]) -> Result<Tensor<T>, SimError> {
        self.check_q(q)?;
        self.check_q(qd)?;
        let dm = self.mass_matrix_gradient(q)?;
        Ok(coriolis_from_inertia_gradient(&dm, qd))
    }

    /// Gravitational potential `V(q) = g Σ m_i z_i(q)`.
    pub fn potential(&self, q: &[T]) -> Result<T, SimError> {
        self.check_q(q)?;
        let half = T::from_f64(0.5);
        let (z, theta) = (q[Z], q[PITCH]);
        let hip_z = z - self.hip_offset * theta.cos();
        let mut v = self.torso_mass * z;
        for side in Side::BOTH {
            let (hip, knee) = side.joint_indices();
            let a1 = theta + q[hip];
            let a2 = a1 + q[knee];
            let thigh_z = hip_z - self.thigh_len * half * a1.cos();
            let shank_z = hip_z - self.thigh_len * a1.cos() - self.shank_len * half * a2.cos();
            v += self.thigh_mass * thigh_z + self.shank_mass * shank_z;
        }
        Ok(v * self.gravity)
    }

    /// Gravity vector `G(q) = ∂V/∂q`, closed form.
    pub fn gravity(&self, q: &[T]) -> Result<Vec<T>, SimError> {
        self.check_q(q)?;
        let half = T::from_f64(0.5);
        let theta = q[PITCH];
        let sin_t = theta.sin();
        let mut g = vec![T::zero(); BIPED_N];
        g[Z] = self.total_mass();
        // Leg masses hang from the hip point: its height varies with pitch.
        let leg_mass = (self.thigh_mass + self.shank_mass) * T::from_f64(2.0);
        g[PITCH] = leg_mass * self.hip_offset * sin_t;
        for side in Side::BOTH {
            let (hip, knee) = side.joint_indices();
            let a1 = theta + q[hip];
            let a2 = a1 + q[knee];
            let s1 = a1.sin();
            let s2 = a2.sin();
            let thigh_term = self.thigh_mass * self.thigh_len * half * s1;
            let shank_term = self.shank_mass * (self.thigh_len * s1 + self.shank_len * half * s2);
            let knee_term = self.shank_mass * self.shank_len * half * s2;
            g[PITCH] += thigh_term + shank_term;
            g[hip] = thigh_term + shank_term;
            g[knee] = knee_term;
        }
        for v in g.iter_mut() {
            *v *= self.gravity;
        }
        Ok(g)
    }

    /// Vertical position of a foot point.
    pub fn foot_height(&self, q: &[T], side: Side) -> Result<T, SimError> {
        self.check_q(q)?;
        let (hip, knee) = side.joint_indices();
        let theta = q[PITCH];
        let a1 = theta + q[hip];
        let a2 = a1 + q[knee];
        Ok(q[Z] - self.hip_offset * theta.cos() - self.thigh_len * a1.cos() - self.shank_len * a2.cos())
    }

    /// Row of the normal contact Jacobian: `∂(foot z)/∂q`.
    pub fn foot_height_jacobian(&self, q: &[T], side: Side) -> Result<Vec<T>, SimError> {
        self.check_q(q)?;
        let (hip, knee) = side.joint_indices();
        let theta = q[PITCH];
        let a1 = theta + q[hip];
        let a2 = a1 + q[knee];
        let s_t = theta.sin();
        let s1 = a1.sin();
        let s2 = a2.sin();
        let mut row = vec![T::zero(); BIPED_N];
        row[Z] = T::one();
        row[PITCH] = self.hip_offset * s_t + self.thigh_len * s1 + self.shank_len * s2;
        row[hip] = self.thigh_len * s1 + self.shank_len * s2;
        row[knee] = self.shank_len * s2;
        Ok(row)
    }

    /// Bilateral normal contact Jacobian (left row, then right row).
    pub fn contact_jacobian(&self, q: &[T]) -> Result<ContactJacobian<T>, SimError> {
        let left = self.foot_height_jacobian(q, Side::Left)?;
        let right = self.foot_height_jacobian(q, Side::Right)?;
        ContactJacobian::from_rows(&left, &right)
            .map_err(|e| SimError::Numeric(e.to_string()))
    }

    /// Total mechanical energy `½ q̇ᵀ M q̇ + V`.
    pub fn energy(&self, q: &[T], qd: &[T]) -> Result<T, SimError> {
        self.check_q(qd)?;
        let m = self.mass_matrix(q)?;
        let mut kin = T::zero();
        for i in 0..BIPED_N {
            for j in 0..BIPED_N {
                kin += qd[i] * m.at2(i, j) * qd[j];
            }
        }
        Ok(kin * T::from_f64(0.5) + self.potential(q)?)
    }

    /// Forward acceleration under generalized force `tau` with no contact:
    /// `q̈ = M⁻¹ (τ − C q̇ − G)`.
    pub fn forward_acceleration(&self, q: &[T], qd: &[T], tau: &[T]) -> Result<Vec<T>, SimError> {
        let m = self.mass_matrix(q)?;
        let c = self.coriolis_matrix(q, qd)?;
        let g = self.gravity(q)?;
        let c_qd = crate::linalg::matvec(&c, qd);
        let rhs: Vec<T> = (0..BIPED_N)
            .map(|i| tau[i] - c_qd[i] - g[i])
            .collect();
        cholesky_solve(&m, &rhs)
            .ok_or_else(|| SimError::Numeric("mass matrix lost positive definiteness".into()))
    }

    /// Contact-free rollout with the implicit-midpoint rule (symplectic).
    ///
    /// Returns the sequence of `(q, q̇)` states including the initial one.
    /// Used by the energy-conservation oracle; data generation itself
    /// prescribes trajectories and never integrates.
    pub fn rollout_midpoint(
        &self,
        q0: &[T],
        qd0: &[T],
        dt: T,
        steps: usize,
    ) -> Result<Vec<(Vec<T>, Vec<T>)>, SimError> {
        self.check_q(q0)?;
        self.check_q(qd0)?;
        let zero_tau = vec![T::zero(); BIPED_N];
        let half = T::from_f64(0.5);
        let tol = T::from_f64(1e-13);
        let mut states = Vec::with_capacity(steps + 1);
        states.push((q0.to_vec(), qd0.to_vec()));
        let mut q = q0.to_vec();
        let mut qd = qd0.to_vec();
        for _ in 0..steps {
            let mut q_mid = q.clone();
            let mut qd_mid = qd.clone();
            // Fixed-point iteration on the midpoint state.
            for _iter in 0..64 {
                let acc = self.forward_acceleration(&q_mid, &qd_mid, &zero_tau)?;
                let mut delta = T::zero();
                for i in 0..BIPED_N {
                    let nq = q[i] + dt * half * qd_mid[i];
                    let nqd = qd[i] + dt * half * acc[i];
                    delta = delta.max((nq - q_mid[i]).abs()).max((nqd - qd_mid[i]).abs());
                    q_mid[i] = nq;
                    qd_mid[i] = nqd;
                }
                if delta < tol {
                    break;
                }
            }
            let two = T::from_f64(2.0);
            for i in 0..BIPED_N {
                q[i] = two * q_mid[i] - q[i];
                qd[i] = two * qd_mid[i] - qd[i];
            }
            states.push((q.clone(), qd.clone()));
        }
        Ok(states)
    }
}

//! Spring-damper normal contact and footwear presets.

use crate::dynamics::ContactJacobian;
use crate::scalar::{lit, Scalar};

use super::biped::{BipedModel, Side, SimError};
use super::dual::SimScalar;

/// Unilateral spring-damper contact along the vertical axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactParams<T> {
    /// N/m
    pub stiffness: T,
    /// N·s/m
    pub damping: T,
    /// Ground plane height (m).
    pub ground_height: T,
}

impl<T: Scalar> ContactParams<T> {
    pub fn new(stiffness: T, damping: T, ground_height: T) -> Result<Self, SimError> {
        if !(stiffness > T::zero()) {
            return Err(SimError::InvalidModel(format!(
                "contact stiffness must be > 0, got {stiffness}"
            )));
        }
        if damping < T::zero() {
            return Err(SimError::InvalidModel(format!(
                "contact damping must be >= 0, got {damping}"
            )));
        }
        Ok(Self {
            stiffness,
            damping,
            ground_height,
        })
    }
}

impl<T: Scalar> Default for ContactParams<T> {
    fn default() -> Self {
        Self {
            stiffness: lit(2e4),
            damping: lit(200.0),
            ground_height: T::zero(),
        }
    }
}

/// A footwear preset: contact properties, the base-height compensation for
/// sole thickness, and the extra standing compression of a compliant sole.
#[derive(Debug, Clone, PartialEq)]
pub struct FootwearPreset<T> {
    pub name: String,
    pub contact: ContactParams<T>,
    /// Sole thickness: the base trajectory rises by this much and the
    /// contact surface for the foot point sits at the same height.
    pub base_lift: T,
    /// Additional dip of the gait relative to the contact surface; softer
    /// soles compress further under the same weight.
    pub extra_depth: T,
}

impl<T: Scalar> FootwearPreset<T> {
    pub fn by_name(name: &str) -> Result<Self, SimError> {
        let mk = |name: &str, k: f64, d: f64, lift: f64, depth: f64| -> Result<FootwearPreset<T>, SimError> {
            Ok(FootwearPreset {
                name: name.to_string(),
                contact: ContactParams::new(lit(k), lit(d), lit(lift))?,
                base_lift: lit(lift),
                extra_depth: lit(depth),
            })
        };
        // Depth offsets keep peak forces at a similar scale across the
        // stiffness range (soft soles compress further under load); the
        // distinct sole thicknesses keep the height-to-force map
        // single-valued across presets.
        match name {
            "barefoot" => mk("barefoot", 2e4, 200.0, 0.0, 0.0),
            "cushioned" => mk("cushioned", 8e3, 600.0, 0.02, 0.015),
            "stiff-heel" => mk("stiff-heel", 6e4, 50.0, 0.05, -0.006),
            other => Err(SimError::InvalidModel(format!(
                "unknown footwear preset '{other}' (expected barefoot, cushioned, or stiff-heel)"
            ))),
        }
    }

    pub fn default_names() -> [&'static str; 3] {
        ["barefoot", "cushioned", "stiff-heel"]
    }
}

/// Ground-truth vertical contact forces and the normal contact Jacobian.
///
/// Per foot, with penetration `δ = max(0, ground − p_z)`: the force is
/// `max(0, k·δ − d·ṗ_z)` while penetrating, else zero. Damping can cancel the
/// spring force on a fast upward foot but never drives it negative.
pub fn contact_force<T: SimScalar>(
    model: &BipedModel<T>,
    params: &ContactParams<T>,
    q: &[T],
    qd: &[T],
) -> Result<([T; 2], ContactJacobian<T>), SimError> {
    let jac = model.contact_jacobian(q)?;
    let mut f = [T::zero(); 2];
    for side in Side::BOTH {
        let i = side.index();
        let pz = model.foot_height(q, side)?;
        let depth = (params.ground_height - pz).max(T::zero());
        if depth > T::zero() {
            let row = jac.row(i);
            let pz_dot: T = row.iter().zip(qd).map(|(&j, &v)| j * v).sum();
            f[i] = (params.stiffness * depth - params.damping * pz_dot).max(T::zero());
        }
    }
    Ok((f, jac))
}

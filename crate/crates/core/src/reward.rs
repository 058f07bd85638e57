//! Impact-aware reward terms and the position-increment PD law, consumable
//! by an external policy-optimization loop with the frozen force predictor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{lit, Scalar};

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("reward: dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("reward: invalid gains: {0}")]
    InvalidGains(String),
}

/// Diagonal PD gains; every entry must be positive.
#[derive(Debug, Clone, PartialEq)]
pub struct PdGains<T> {
    kp: Vec<T>,
    kd: Vec<T>,
}

impl<T: Scalar> PdGains<T> {
    pub fn new(kp: Vec<T>, kd: Vec<T>) -> Result<Self, RewardError> {
        if kp.len() != kd.len() {
            return Err(RewardError::DimensionMismatch {
                expected: kp.len(),
                got: kd.len(),
            });
        }
        if kp.iter().chain(&kd).any(|v| !(*v > T::zero())) {
            return Err(RewardError::InvalidGains(
                "diagonal gains must be positive".into(),
            ));
        }
        Ok(Self { kp, kd })
    }

    /// Uniform gains across `n` joints; defaults are `K_p = 100 I`,
    /// `K_d = 2 I`.
    pub fn uniform(n: usize, kp: T, kd: T) -> Result<Self, RewardError> {
        Self::new(vec![kp; n], vec![kd; n])
    }

    pub fn default_for(n: usize) -> Self {
        Self::uniform(n, lit(100.0), lit(2.0)).expect("defaults are positive")
    }

    pub fn n(&self) -> usize {
        self.kp.len()
    }
}

/// PD torque for a position-increment action:
/// `q_des = q_cur + Δq`, `τ_cmd = K_p (q_des − q_cur) − K_d q̇_cur`.
/// The position terms cancel to `K_p Δq`; `q_cur` stays in the signature to
/// mirror the two-line law.
pub fn pd_torque<T: Scalar>(
    delta_q: &[T],
    q_cur: &[T],
    qd_cur: &[T],
    gains: &PdGains<T>,
) -> Result<Vec<T>, RewardError> {
    let n = gains.n();
    for got in [delta_q.len(), q_cur.len(), qd_cur.len()] {
        if got != n {
            return Err(RewardError::DimensionMismatch { expected: n, got });
        }
    }
    Ok((0..n)
        .map(|i| {
            let q_des = q_cur[i] + delta_q[i];
            gains.kp[i] * (q_des - q_cur[i]) - gains.kd[i] * qd_cur[i]
        })
        .collect())
}

/// Impact penalty from the predicted per-foot normal force:
/// `−α (f_L² + f_R²)`; never positive, strictly decreasing in each `|f|`.
pub fn impact_reward<T: Scalar>(f_z: [T; 2], alpha: T) -> T {
    -alpha * (f_z[0] * f_z[0] + f_z[1] * f_z[1])
}

/// Scalar reward terms of one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTerms<T> {
    pub task: T,
    pub bonus: T,
    pub impact: T,
}

/// `r = r_task + r_bonus + r_impact`.
pub fn total_reward<T: Scalar>(terms: &RewardTerms<T>) -> T {
    terms.task + terms.bonus + terms.impact
}

/// Piecewise-constant impact-weight schedule: a list of `(step, α)` pairs;
/// the value holds from its step until the next entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSchedule {
    entries: Vec<(u64, f64)>,
}

impl AlphaSchedule {
    pub fn new(mut entries: Vec<(u64, f64)>) -> Result<Self, RewardError> {
        if entries.is_empty() {
            return Err(RewardError::InvalidGains("empty schedule".into()));
        }
        entries.sort_by_key(|e| e.0);
        if entries[0].0 != 0 {
            return Err(RewardError::InvalidGains(
                "schedule must define a value at step 0".into(),
            ));
        }
        if entries.iter().any(|e| e.1 < 0.0) {
            return Err(RewardError::InvalidGains("alpha must be >= 0".into()));
        }
        Ok(Self { entries })
    }

    pub fn constant(alpha: f64) -> Self {
        Self {
            entries: vec![(0, alpha)],
        }
    }

    pub fn alpha_at(&self, step: u64) -> f64 {
        let mut current = self.entries[0].1;
        for &(s, a) in &self.entries {
            if s <= step {
                current = a;
            } else {
                break;
            }
        }
        current
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn pd_worked_example_and_zero_cases() {
        let gains = PdGains::uniform(3, 100.0, 2.0).unwrap();
        let tau = pd_torque(&[0.0; 3], &[0.1, 0.2, 0.3], &[0.0; 3], &gains).unwrap();
        assert_eq!(tau, vec![0.0; 3]);

        let mut dq = vec![0.0; 3];
        dq[1] = 0.1;
        let tau = pd_torque(&dq, &[0.0; 3], &[0.0; 3], &gains).unwrap();
        assert_eq!(tau, vec![0.0, 10.0, 0.0]);

        let tau = pd_torque(&[0.0; 3], &[0.0; 3], &[1.0, -2.0, 0.5], &gains).unwrap();
        assert_eq!(tau, vec![-2.0, 4.0, -1.0]);
    }

    #[test]
    fn pd_is_jointly_linear_in_action_and_velocity() {
        let gains = PdGains::uniform(2, 55.0, 3.5).unwrap();
        let q = [0.3, -0.2];
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..50 {
            let a: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let va: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let vb: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (ca, cb) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let mixed_dq: Vec<f64> = (0..2).map(|i| ca * a[i] + cb * b[i]).collect();
            let mixed_v: Vec<f64> = (0..2).map(|i| ca * va[i] + cb * vb[i]).collect();
            let mixed = pd_torque(&mixed_dq, &q, &mixed_v, &gains).unwrap();
            let ta = pd_torque(&a, &q, &va, &gains).unwrap();
            let tb = pd_torque(&b, &q, &vb, &gains).unwrap();
            for i in 0..2 {
                assert!((mixed[i] - (ca * ta[i] + cb * tb[i])).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn impact_reward_worked_values() {
        assert_eq!(impact_reward([0.0f64, 0.0], 1e-4), 0.0);
        assert_eq!(impact_reward([123.0f64, 45.0], 0.0), 0.0);
        let r = impact_reward([100.0f64, 50.0], 1e-4);
        assert!((r + 1.25).abs() < 1e-12, "{r}");
    }

    #[test]
    fn impact_reward_is_linear_in_alpha_and_nonpositive() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..100 {
            let f: [f64; 2] = [rng.gen_range(0.0..500.0), rng.gen_range(0.0..500.0)];
            let alpha = rng.gen_range(0.0..1.0);
            let unit = impact_reward(f, 1.0);
            assert!(unit <= 0.0);
            assert!((impact_reward(f, alpha) - alpha * unit).abs() < 1e-12);
        }
    }

    #[test]
    fn total_reward_is_the_exact_sum() {
        let terms = RewardTerms {
            task: 1.0f64,
            bonus: 0.2,
            impact: -0.3,
        };
        assert!((total_reward(&terms) - 0.9).abs() < 1e-15);
        let impact_free = RewardTerms {
            task: 0.75,
            bonus: 0.125,
            impact: 0.0,
        };
        assert_eq!(total_reward(&impact_free), 0.875);
    }

    #[test]
    fn reward_decreases_with_force_magnitude() {
        let alpha = 1e-3;
        let mut prev = f64::INFINITY;
        for f in [0.0, 10.0, 50.0, 200.0, 400.0] {
            let r = total_reward(&RewardTerms {
                task: 1.0,
                bonus: 0.0,
                impact: impact_reward([f, f * 0.5], alpha),
            });
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn schedule_holds_values_between_breakpoints() {
        let sched = AlphaSchedule::new(vec![(0, 1e-5), (1000, 1e-4), (5000, 5e-4)]).unwrap();
        assert_eq!(sched.alpha_at(0), 1e-5);
        assert_eq!(sched.alpha_at(999), 1e-5);
        assert_eq!(sched.alpha_at(1000), 1e-4);
        assert_eq!(sched.alpha_at(10_000), 5e-4);
        assert!(AlphaSchedule::new(vec![(10, 0.1)]).is_err());
        assert!(AlphaSchedule::new(vec![(0, -0.1)]).is_err());
    }
}

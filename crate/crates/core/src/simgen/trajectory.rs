//! Prescribed smooth joint trajectories with analytic derivatives.
//!
//! Each coordinate is a mean plus an optional linear drift plus a band-limited
//! sum of sinusoids, so velocities and accelerations are exact. Phase offsets
//! between the two legs alternate foot-ground proximity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::scalar::{lit, Scalar};

use super::biped::{BipedModel, Side, SimError, BIPED_N};
use super::dual::SimScalar;

/// Planar motion modes. The planar model cannot realize lateral walking or
/// true turning, so the catalogue is forward, backward, and in-place stepping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MotionMode {
    Forward,
    Backward,
    InPlace,
}

impl MotionMode {
    pub const ALL: [MotionMode; 3] = [MotionMode::Forward, MotionMode::Backward, MotionMode::InPlace];

    pub fn name(self) -> &'static str {
        match self {
            MotionMode::Forward => "forward",
            MotionMode::Backward => "backward",
            MotionMode::InPlace => "in-place",
        }
    }
}

impl fmt::Display for MotionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionMode {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(MotionMode::Forward),
            "backward" => Ok(MotionMode::Backward),
            "in-place" => Ok(MotionMode::InPlace),
            other => Err(SimError::InvalidModel(format!(
                "unknown motion mode '{other}' (expected forward, backward, or in-place)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
struct SinusoidSeries<T> {
    mean: T,
    slope: T,
    /// (amplitude, angular frequency, phase)
    terms: Vec<(T, T, T)>,
}

impl<T: Scalar> SinusoidSeries<T> {
    #[cfg(test)]
    fn constant(mean: T) -> Self {
        Self {
            mean,
            slope: T::zero(),
            terms: Vec::new(),
        }
    }

    fn eval(&self, t: T) -> (T, T, T) {
        let mut pos = self.mean + self.slope * t;
        let mut vel = self.slope;
        let mut acc = T::zero();
        for &(a, w, p) in &self.terms {
            let arg = w * t + p;
            pos += a * arg.sin();
            vel += a * w * arg.cos();
            acc -= a * w * w * arg.sin();
        }
        (pos, vel, acc)
    }
}

/// A sampled motion plan for the full configuration vector.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub mode: MotionMode,
    pub duration: T,
    series: Vec<SinusoidSeries<T>>,
}

impl<T: Scalar> Trajectory<T> {
    /// Position, velocity, and acceleration of every coordinate at time `t`.
    pub fn eval(&self, t: T) -> (Vec<T>, Vec<T>, Vec<T>) {
        let mut q = Vec::with_capacity(BIPED_N);
        let mut qd = Vec::with_capacity(BIPED_N);
        let mut qdd = Vec::with_capacity(BIPED_N);
        for s in &self.series {
            let (p, v, a) = s.eval(t);
            q.push(p);
            qd.push(v);
            qdd.push(a);
        }
        (q, qd, qdd)
    }

    /// Shift one coordinate's mean (used to compensate sole thickness).
    pub fn shift_mean(&mut self, coord: usize, delta: T) {
        self.series[coord].mean += delta;
    }
}

/// Draw a smooth trajectory for `mode` lasting `duration` seconds.
///
/// The base height is calibrated against the model's foot kinematics so the
/// feet alternately dip below the ground by roughly `target_penetration`.
/// Identical seeds give bitwise-identical trajectories.
pub fn sample_trajectory<T: SimScalar>(
    model: &BipedModel<T>,
    mode: MotionMode,
    duration: T,
    seed: u64,
) -> Result<Trajectory<T>, SimError> {
    if !(duration > T::zero()) {
        return Err(SimError::InvalidModel(format!(
            "trajectory duration must be > 0, got {duration}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut range = |lo: f64, hi: f64| lit::<T>(rng.gen_range(lo..hi));

    let step_hz = range(0.85, 1.15);
    let w = lit::<T>(2.0 * PI) * step_hz;
    let two_w = w * lit::<T>(2.0);
    // Two incommensurate drift frequencies make every session quasi-periodic,
    // so one session sweeps a band of the configuration space instead of
    // retracing a single closed orbit.
    let slow_w = w * range(0.13, 0.31);
    let fast_w = w * range(1.31, 1.73);

    let forward_speed = match mode {
        MotionMode::Forward => range(0.45, 0.75),
        MotionMode::Backward => -range(0.35, 0.6),
        MotionMode::InPlace => T::zero(),
    };
    let bounce_amp = match mode {
        MotionMode::InPlace => range(0.010, 0.014),
        _ => range(0.008, 0.012),
    };

    let phase_l = range(0.0, 2.0 * PI);
    let phase_r = phase_l + lit::<T>(PI);
    let knee_lag = range(0.35, 0.6) * lit::<T>(PI);
    let hip_amp = match mode {
        MotionMode::InPlace => range(0.08, 0.12),
        _ => range(0.12, 0.18),
    };
    let knee_amp = range(0.12, 0.18);
    let knee_mean = range(0.22, 0.30);

    let mut series = Vec::with_capacity(BIPED_N);
    // x: drift plus a small sway at twice the step rate.
    series.push(SinusoidSeries {
        mean: T::zero(),
        slope: forward_speed,
        terms: vec![(range(0.005, 0.015), two_w, range(0.0, 2.0 * PI))],
    });
    // z: placeholder mean, calibrated below.
    series.push(SinusoidSeries {
        mean: T::zero(),
        slope: T::zero(),
        terms: vec![
            (bounce_amp, two_w, range(0.0, 2.0 * PI)),
            (range(0.002, 0.005), slow_w, range(0.0, 2.0 * PI)),
            (range(0.001, 0.003), fast_w, range(0.0, 2.0 * PI)),
        ],
    });
    // pitch: gentle rocking at the step rate with drift content.
    series.push(SinusoidSeries {
        mean: range(-0.02, 0.02),
        slope: T::zero(),
        terms: vec![
            (range(0.03, 0.06), w, range(0.0, 2.0 * PI)),
            (range(0.008, 0.02), two_w, range(0.0, 2.0 * PI)),
            (range(0.01, 0.025), slow_w, range(0.0, 2.0 * PI)),
        ],
    });
    for phase in [phase_l, phase_r] {
        // hip
        series.push(SinusoidSeries {
            mean: range(-0.03, 0.03),
            slope: T::zero(),
            terms: vec![
                (hip_amp, w, phase),
                (range(0.015, 0.035), two_w, phase + range(0.0, 1.0)),
                (range(0.02, 0.05), slow_w, range(0.0, 2.0 * PI)),
                (range(0.01, 0.025), fast_w, range(0.0, 2.0 * PI)),
            ],
        });
        // knee: flexes once per step, delayed against the hip swing.
        series.push(SinusoidSeries {
            mean: knee_mean,
            slope: T::zero(),
            terms: vec![
                (knee_amp, w, phase + knee_lag),
                (range(0.015, 0.035), two_w, phase + knee_lag + range(0.0, 1.0)),
                (range(0.02, 0.05), slow_w, range(0.0, 2.0 * PI)),
                (range(0.01, 0.025), fast_w, range(0.0, 2.0 * PI)),
            ],
        });
    }
    // Reorder: [x, z, pitch, hipL, kneeL, hipR, kneeR] — already in order.
    let mut traj = Trajectory {
        mode,
        duration,
        series,
    };

    // Calibrate the base height: scan one stride of foot height relative to
    // z = 0 and place the mean so feet bottom out near the target depth.
    let target_penetration = range(0.010, 0.016);
    let stride = T::one() / step_hz * lit::<T>(4.0);
    let samples = 1600usize;
    let mut min_rel = T::infinity();
    for i in 0..samples {
        let t = stride * lit::<T>(i as f64 / samples as f64);
        let (q, _, _) = traj.eval(t);
        for side in Side::BOTH {
            let rel = model.foot_height(&q, side)? - q[1];
            min_rel = min_rel.min(rel);
        }
    }
    traj.series[1].mean = -min_rel - target_penetration;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> BipedModel<f64> {
        BipedModel::default()
    }

    #[test]
    fn velocity_matches_finite_difference_of_position() {
        let traj = sample_trajectory(&model(), MotionMode::Forward, 10.0, 42).unwrap();
        let h = 1e-6;
        for step in 1..50 {
            let t = 0.2 * step as f64;
            let (_, qd, qdd) = traj.eval(t);
            let (q_hi, qd_hi, _) = traj.eval(t + h);
            let (q_lo, qd_lo, _) = traj.eval(t - h);
            for i in 0..BIPED_N {
                let fd_v = (q_hi[i] - q_lo[i]) / (2.0 * h);
                let fd_a = (qd_hi[i] - qd_lo[i]) / (2.0 * h);
                assert!((qd[i] - fd_v).abs() < 1e-6, "i={i} t={t}");
                assert!((qdd[i] - fd_a).abs() < 1e-5, "i={i} t={t}");
            }
        }
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = sample_trajectory(&model(), MotionMode::Backward, 5.0, 7).unwrap();
        let b = sample_trajectory(&model(), MotionMode::Backward, 5.0, 7).unwrap();
        for step in 0..100 {
            let t = 0.05 * step as f64;
            let (qa, qda, qdda) = a.eval(t);
            let (qb, qdb, qddb) = b.eval(t);
            assert_eq!(qa, qb);
            assert_eq!(qda, qdb);
            assert_eq!(qdda, qddb);
        }
    }

    #[test]
    fn zero_amplitude_series_is_static() {
        let s = SinusoidSeries::constant(1.5f64);
        for step in 0..10 {
            let (p, v, a) = s.eval(0.3 * step as f64);
            assert_eq!((p, v, a), (1.5, 0.0, 0.0));
        }
    }

    #[test]
    fn feet_alternate_ground_proximity() {
        let m = model();
        let traj = sample_trajectory(&m, MotionMode::Forward, 10.0, 3).unwrap();
        let mut left_low = 0usize;
        let mut right_low = 0usize;
        let mut both_low = 0usize;
        let ticks = 500;
        for i in 0..ticks {
            let t = 10.0 * i as f64 / ticks as f64;
            let (q, _, _) = traj.eval(t);
            let lz = m.foot_height(&q, Side::Left).unwrap();
            let rz = m.foot_height(&q, Side::Right).unwrap();
            if lz < 0.0 {
                left_low += 1;
            }
            if rz < 0.0 {
                right_low += 1;
            }
            if lz < 0.0 && rz < 0.0 {
                both_low += 1;
            }
        }
        assert!(left_low > ticks / 10, "left contact fraction too small: {left_low}");
        assert!(right_low > ticks / 10, "right contact fraction too small: {right_low}");
        assert!(
            both_low < left_low.min(right_low),
            "legs never alternate: both={both_low} left={left_low} right={right_low}"
        );
    }

    #[test]
    fn unknown_mode_string_is_rejected() {
        assert!("sideways".parse::<MotionMode>().is_err());
        assert_eq!("in-place".parse::<MotionMode>().unwrap(), MotionMode::InPlace);
    }

    #[test]
    fn rejects_nonpositive_duration() {
        assert!(sample_trajectory(&model(), MotionMode::Forward, 0.0, 1).is_err());
    }
}

//! A-weighted sound-pressure-level analysis of audio segments.
//!
//! Frames are weighted in the frequency domain: each frame is transformed,
//! bins outside the 20 Hz – 20 kHz band are zeroed, the standard A-curve is
//! applied per bin, and the weighted RMS pressure is converted to dB re
//! 20 µPa. This frequency-domain weighting choice and the 125 ms / 50%
//! framing are recorded in the report metadata.

use rustfft::num_complex::Complex;
use rustfft::{FftNum, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::scalar::{lit, Scalar};

use super::regression::MetricsError;

/// Reference pressure: 20 µPa.
const P0_PA: f64 = 20e-6;

/// Audible band limits (Hz).
const BAND_LO_HZ: f64 = 20.0;
const BAND_HI_HZ: f64 = 20_000.0;

/// Standard A-weighting gain in dB at frequency `f` (Hz):
/// `20·log10(R_A(f)) + 2.00`, zero at 1 kHz.
pub fn a_weighting_db<T: Scalar>(f: T) -> Result<T, MetricsError> {
    if !(f > T::zero()) {
        return Err(MetricsError::Invalid(format!(
            "a-weighting needs a positive frequency, got {f}"
        )));
    }
    let f2 = f * f;
    let c1 = lit::<T>(20.6 * 20.6);
    let c2 = lit::<T>(107.7 * 107.7);
    let c3 = lit::<T>(737.9 * 737.9);
    let c4 = lit::<T>(12194.0 * 12194.0);
    let num = c4 * f2 * f2;
    let den = (f2 + c1) * ((f2 + c2) * (f2 + c3)).sqrt() * (f2 + c4);
    let ra = num / den;
    Ok(lit::<T>(20.0) * ra.log10() + lit::<T>(2.0))
}

/// Mono audio samples with a calibration constant mapping digital full scale
/// to sound pressure in pascal. The default maps full scale to 1 Pa
/// (94 dB SPL).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSegment<T> {
    rate_hz: f64,
    samples: Vec<T>,
    gain_pa_per_fs: T,
}

impl<T: Scalar> AudioSegment<T> {
    pub fn new(rate_hz: f64, samples: Vec<T>, gain_pa_per_fs: T) -> Result<Self, MetricsError> {
        if !(rate_hz > 0.0) {
            return Err(MetricsError::Invalid(format!(
                "sample rate must be positive, got {rate_hz}"
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::Invalid("non-finite sample".into()));
        }
        if !(gain_pa_per_fs > T::zero()) {
            return Err(MetricsError::Invalid("calibration gain must be positive".into()));
        }
        Ok(Self {
            rate_hz,
            samples,
            gain_pa_per_fs,
        })
    }

    pub fn with_default_calibration(rate_hz: f64, samples: Vec<T>) -> Result<Self, MetricsError> {
        Self::new(rate_hz, samples, T::one())
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Amplitude-scaled copy (for tests and comparisons).
    pub fn scaled(&self, c: T) -> Self {
        Self {
            rate_hz: self.rate_hz,
            samples: self.samples.iter().map(|&v| v * c).collect(),
            gain_pa_per_fs: self.gain_pa_per_fs,
        }
    }
}

/// Framing and averaging options.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplOptions {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Arithmetic mean of per-frame dB values (the default), or the
    /// energy mean `10·log10(mean(10^(SPL/10)))`.
    pub energy_average: bool,
}

impl Default for SplOptions {
    fn default() -> Self {
        Self {
            frame_ms: 125.0,
            hop_ms: 62.5,
            energy_average: false,
        }
    }
}

/// One analyzed frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplFrame<T> {
    pub start_s: f64,
    /// A-weighted level in dBA; `-inf` marks a silent frame.
    pub spl_dba: T,
}

/// Per-frame A-weighted SPL over the segment.
///
/// Frames that extend past the end of the segment are dropped; a silent
/// frame reports the `-inf` sentinel.
pub fn spl_series<T: Scalar + FftNum>(
    seg: &AudioSegment<T>,
    opts: &SplOptions,
) -> Result<Vec<SplFrame<T>>, MetricsError> {
    let frame_len = ((opts.frame_ms / 1000.0) * seg.rate_hz).round() as usize;
    let hop_len = ((opts.hop_ms / 1000.0) * seg.rate_hz).round() as usize;
    if frame_len == 0 || hop_len == 0 {
        return Err(MetricsError::Invalid(
            "frame and hop must be at least one sample".into(),
        ));
    }
    if seg.len() < frame_len {
        return Err(MetricsError::Invalid(format!(
            "segment of {} samples is shorter than one {frame_len}-sample frame",
            seg.len()
        )));
    }
    let mut planner = FftPlanner::<T>::new();
    let fft = planner.plan_fft_forward(frame_len);
    // Per-bin linear weights over the one-sided spectrum.
    let half = frame_len / 2;
    let mut weights = vec![T::zero(); half + 1];
    for (k, w) in weights.iter_mut().enumerate() {
        let f = k as f64 * seg.rate_hz / frame_len as f64;
        if (BAND_LO_HZ..=BAND_HI_HZ).contains(&f) {
            let db = a_weighting_db(lit::<T>(f))?;
            *w = lit::<T>(10.0).powf(db / lit::<T>(20.0));
        }
    }
    let p0 = lit::<T>(P0_PA);
    let mut frames = Vec::new();
    let mut start = 0usize;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); frame_len];
    while start + frame_len <= seg.len() {
        for (slot, &s) in buf.iter_mut().zip(&seg.samples()[start..start + frame_len]) {
            *slot = Complex::new(s * seg.gain_pa_per_fs, T::zero());
        }
        fft.process(&mut buf);
        // Parseval over the one-sided weighted spectrum.
        let mut energy = T::zero();
        for k in 0..=half {
            let mag2 = buf[k].re * buf[k].re + buf[k].im * buf[k].im;
            let w2 = weights[k] * weights[k];
            let mult = if k == 0 || (frame_len % 2 == 0 && k == half) {
                T::one()
            } else {
                lit::<T>(2.0)
            };
            energy += mult * w2 * mag2;
        }
        let n2 = lit::<T>((frame_len * frame_len) as f64);
        let p_rms = (energy / n2).sqrt();
        let spl = if p_rms > T::zero() {
            lit::<T>(20.0) * (p_rms / p0).log10()
        } else {
            T::neg_infinity()
        };
        frames.push(SplFrame {
            start_s: start as f64 / seg.rate_hz,
            spl_dba: spl,
        });
        start += hop_len;
    }
    Ok(frames)
}

/// Mean noise level: average SPL over the segment's finite frames.
pub fn mnl<T: Scalar>(series: &[SplFrame<T>], energy_average: bool) -> Result<T, MetricsError> {
    let finite: Vec<T> = series
        .iter()
        .map(|f| f.spl_dba)
        .filter(|v| v.is_finite())
        .collect();
    if finite.is_empty() {
        return Err(MetricsError::Invalid(
            "all frames are silent; mean level undefined".into(),
        ));
    }
    let n = T::from_f64(finite.len() as f64);
    if energy_average {
        let ten = lit::<T>(10.0);
        let mean_pow = finite.iter().map(|&v| ten.powf(v / ten)).sum::<T>() / n;
        Ok(ten * mean_pow.log10())
    } else {
        Ok(finite.iter().copied().sum::<T>() / n)
    }
}

/// Peak noise level: maximum instantaneous SPL over the segment.
pub fn pnl<T: Scalar>(series: &[SplFrame<T>]) -> Result<T, MetricsError> {
    series
        .iter()
        .map(|f| f.spl_dba)
        .filter(|v| v.is_finite())
        .fold(None, |acc: Option<T>, v| {
            Some(match acc {
                None => v,
                Some(a) => a.max(v),
            })
        })
        .ok_or_else(|| MetricsError::Invalid("all frames are silent; peak level undefined".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(rate: f64, freq: f64, amp: f64, secs: f64) -> Vec<f64> {
        let n = (rate * secs) as usize;
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate).sin())
            .collect()
    }

    #[test]
    fn a_weighting_reference_points() {
        assert!(a_weighting_db(1000.0f64).unwrap().abs() < 0.01);
        assert!((a_weighting_db(100.0f64).unwrap() - (-19.1)).abs() < 0.1);
        assert!((a_weighting_db(20.0f64).unwrap() - (-50.4)).abs() < 0.1);
        assert!(a_weighting_db(0.0f64).is_err());
        assert!(a_weighting_db(-5.0f64).is_err());
    }

    #[test]
    fn reference_tone_at_threshold_pressure_reads_zero_dba() {
        // RMS pressure p0 needs amplitude p0·√2 at full-scale = 1 Pa.
        let amp = P0_PA * 2.0f64.sqrt();
        let seg =
            AudioSegment::with_default_calibration(48_000.0, sine(48_000.0, 1000.0, amp, 0.5))
                .unwrap();
        let frames = spl_series(&seg, &SplOptions::default()).unwrap();
        for f in &frames {
            assert!(f.spl_dba.abs() < 0.1, "frame at {}: {}", f.start_s, f.spl_dba);
        }
    }

    #[test]
    fn tenfold_amplitude_adds_twenty_decibels() {
        let amp = 1e-3;
        let base =
            AudioSegment::with_default_calibration(48_000.0, sine(48_000.0, 1000.0, amp, 0.4))
                .unwrap();
        let loud = base.scaled(10.0);
        let f0 = spl_series(&base, &SplOptions::default()).unwrap();
        let f1 = spl_series(&loud, &SplOptions::default()).unwrap();
        for (a, b) in f0.iter().zip(&f1) {
            assert!((b.spl_dba - a.spl_dba - 20.0).abs() < 1e-9);
        }
    }

    #[test]
    fn low_frequency_tone_is_attenuated_by_the_curve() {
        // A 100 ms frame keeps both tones on exact bins (10 Hz spacing), so
        // the level difference is the A-curve value at 100 Hz.
        let opts = SplOptions {
            frame_ms: 100.0,
            hop_ms: 50.0,
            energy_average: false,
        };
        let amp = 0.01;
        let hi = AudioSegment::with_default_calibration(48_000.0, sine(48_000.0, 1000.0, amp, 0.4))
            .unwrap();
        let lo = AudioSegment::with_default_calibration(48_000.0, sine(48_000.0, 100.0, amp, 0.4))
            .unwrap();
        let m_hi = mnl(&spl_series(&hi, &opts).unwrap(), false).unwrap();
        let m_lo = mnl(&spl_series(&lo, &opts).unwrap(), false).unwrap();
        assert!((m_hi - m_lo - 19.1).abs() < 0.15, "difference {}", m_hi - m_lo);
    }

    #[test]
    fn mean_and_peak_relations() {
        let series = [
            SplFrame { start_s: 0.0, spl_dba: 70.0 },
            SplFrame { start_s: 0.1, spl_dba: 90.0 },
        ];
        assert_eq!(mnl(&series, false).unwrap(), 80.0);
        assert_eq!(pnl(&series).unwrap(), 90.0);
        let constant = [
            SplFrame { start_s: 0.0, spl_dba: 80.0 },
            SplFrame { start_s: 0.1, spl_dba: 80.0 },
            SplFrame { start_s: 0.2, spl_dba: 80.0 },
        ];
        assert_eq!(mnl(&constant, false).unwrap(), 80.0);
        assert_eq!(pnl(&constant).unwrap(), 80.0);
        // Energy averaging weights the louder frame more.
        let e = mnl(&series, true).unwrap();
        assert!(e > 80.0 && e < 90.0);
    }

    #[test]
    fn silent_segment_is_rejected_and_silent_frames_are_sentinels() {
        let seg = AudioSegment::with_default_calibration(48_000.0, vec![0.0; 48_000 / 2]).unwrap();
        let frames = spl_series(&seg, &SplOptions::default()).unwrap();
        assert!(frames.iter().all(|f| f.spl_dba == f64::NEG_INFINITY));
        assert!(mnl(&frames, false).is_err());
        assert!(pnl(&frames).is_err());
    }

    #[test]
    fn segment_shorter_than_one_frame_is_rejected() {
        let seg = AudioSegment::with_default_calibration(48_000.0, vec![0.1; 100]).unwrap();
        assert!(spl_series(&seg, &SplOptions::default()).is_err());
    }

    #[test]
    fn half_amplitude_shifts_mean_and_peak_by_six_db() {
        let seg = AudioSegment::with_default_calibration(
            48_000.0,
            sine(48_000.0, 500.0, 0.05, 0.6),
        )
        .unwrap();
        let half = seg.scaled(0.5);
        let opts = SplOptions::default();
        let m0 = mnl(&spl_series(&seg, &opts).unwrap(), false).unwrap();
        let m1 = mnl(&spl_series(&half, &opts).unwrap(), false).unwrap();
        let p0 = pnl(&spl_series(&seg, &opts).unwrap()).unwrap();
        let p1 = pnl(&spl_series(&half, &opts).unwrap()).unwrap();
        let expected = 20.0 * 0.5f64.log10();
        assert!((m1 - m0 - expected).abs() < 0.05);
        assert!((p1 - p0 - expected).abs() < 0.05);
        assert!(p0 >= m0);
    }
}

//! Prediction-accuracy metrics and A-weighted acoustic analysis.

mod acoustics;
mod regression;
mod wav;

pub use acoustics::{a_weighting_db, mnl, pnl, spl_series, AudioSegment, SplFrame, SplOptions};
pub use regression::{mae, r2, rmse, MetricsError};
pub use wav::{read_wav, write_wav_mono_f32, write_wav_mono_pcm16, WavAudio, WavError};

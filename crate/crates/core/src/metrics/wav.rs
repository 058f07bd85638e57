//! Minimal RIFF/WAVE reader and writer: PCM 16-bit and 32-bit float, mono or
//! stereo (stereo mixes down with equal 0.5/0.5 gains).

use std::fs;
use std::io::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("wav {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("wav {path}: malformed file: {what}")]
    Malformed { path: String, what: String },
    #[error("wav {path}: unsupported encoding: {found} (supported: PCM 16-bit, IEEE float 32-bit)")]
    Unsupported { path: String, found: String },
}

/// Decoded mono audio in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct WavAudio {
    pub rate_hz: u32,
    pub channels: u16,
    /// Mono samples (stereo input mixed down 0.5/0.5).
    pub samples: Vec<f64>,
}

fn u16le(b: &[u8]) -> u16 {
    u16::from_le_bytes([b[0], b[1]])
}

fn u32le(b: &[u8]) -> u32 {
    u32::from_le_bytes([b[0], b[1], b[2], b[3]])
}

pub fn read_wav(path: &Path) -> Result<WavAudio, WavError> {
    let pstr = path.display().to_string();
    let io_err = |source| WavError::Io {
        path: pstr.clone(),
        source,
    };
    let bad = |what: &str| WavError::Malformed {
        path: pstr.clone(),
        what: what.to_string(),
    };
    let bytes = fs::read(path).map_err(io_err)?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(bad("missing RIFF/WAVE header"));
    }
    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32le(&bytes[pos + 4..pos + 8]) as usize;
        let body_end = pos + 8 + size;
        if body_end > bytes.len() {
            return Err(bad("chunk extends past end of file"));
        }
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(bad("fmt chunk too short"));
                }
                fmt = Some((
                    u16le(&body[0..2]),
                    u16le(&body[2..4]),
                    u32le(&body[4..8]),
                    u16le(&body[14..16]),
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_end + (size & 1); // chunks are word-aligned
    }
    let (format, channels, rate, bits) = fmt.ok_or_else(|| bad("missing fmt chunk"))?;
    let data = data.ok_or_else(|| bad("missing data chunk"))?;
    if channels == 0 || channels > 2 {
        return Err(WavError::Unsupported {
            path: pstr,
            found: format!("{channels} channels"),
        });
    }
    let decoded: Vec<f64> = match (format, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect(),
        (3, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        _ => {
            return Err(WavError::Unsupported {
                path: pstr,
                found: format!("format tag {format}, {bits}-bit"),
            })
        }
    };
    let samples = if channels == 2 {
        decoded
            .chunks_exact(2)
            .map(|lr| 0.5 * lr[0] + 0.5 * lr[1])
            .collect()
    } else {
        decoded
    };
    Ok(WavAudio {
        rate_hz: rate,
        channels,
        samples,
    })
}

/// Write mono PCM 16-bit (samples clamped into `[-1, 1]`).
pub fn write_wav_mono_pcm16(path: &Path, rate_hz: u32, samples: &[f64]) -> Result<(), WavError> {
    let pstr = path.display().to_string();
    let io_err = |source| WavError::Io {
        path: pstr.clone(),
        source,
    };
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&rate_hz.to_le_bytes());
    out.extend_from_slice(&(rate_hz * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&out).map_err(io_err)
}

/// Write mono IEEE-float 32-bit.
pub fn write_wav_mono_f32(path: &Path, rate_hz: u32, samples: &[f64]) -> Result<(), WavError> {
    let pstr = path.display().to_string();
    let io_err = |source| WavError::Io {
        path: pstr.clone(),
        source,
    };
    let data_len = samples.len() * 4;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&3u16.to_le_bytes()); // IEEE float
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate_hz.to_le_bytes());
    out.extend_from_slice(&(rate_hz * 4).to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&out).map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn float_roundtrip_is_exact_at_f32_precision() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.01).sin() * 0.3).collect();
        write_wav_mono_f32(&path, 48_000, &samples).unwrap();
        let audio = read_wav(&path).unwrap();
        assert_eq!(audio.rate_hz, 48_000);
        assert_eq!(audio.channels, 1);
        for (a, b) in audio.samples.iter().zip(&samples) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn pcm16_roundtrip_is_exact_at_quantization_precision() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.05).cos() * 0.9).collect();
        write_wav_mono_pcm16(&path, 44_100, &samples).unwrap();
        let audio = read_wav(&path).unwrap();
        for (a, b) in audio.samples.iter().zip(&samples) {
            assert!((a - b).abs() < 2.0 / 32768.0);
        }
    }

    #[test]
    fn unsupported_encoding_names_the_format() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        // Hand-build a 24-bit PCM header.
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&40u32.to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&48_000u32.to_le_bytes());
        out.extend_from_slice(&(48_000u32 * 3).to_le_bytes());
        out.extend_from_slice(&3u16.to_le_bytes());
        out.extend_from_slice(&24u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, out).unwrap();
        let err = read_wav(&path).unwrap_err();
        assert!(err.to_string().contains("24-bit"), "{err}");
    }

    #[test]
    fn stereo_mixes_down_with_half_gains() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("st.wav");
        // Hand-build a stereo PCM16 file with L = 0.5, R = -0.25.
        let l = (0.5f64 * 32767.0) as i16;
        let r = (-0.25f64 * 32767.0) as i16;
        let frames = 10u32;
        let data_len = frames * 4;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&2u16.to_le_bytes());
        out.extend_from_slice(&48_000u32.to_le_bytes());
        out.extend_from_slice(&(48_000u32 * 4).to_le_bytes());
        out.extend_from_slice(&4u16.to_le_bytes());
        out.extend_from_slice(&16u16.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for _ in 0..frames {
            out.extend_from_slice(&l.to_le_bytes());
            out.extend_from_slice(&r.to_le_bytes());
        }
        std::fs::write(&path, out).unwrap();
        let audio = read_wav(&path).unwrap();
        assert_eq!(audio.channels, 2);
        assert_eq!(audio.samples.len(), frames as usize);
        let expected = 0.5 * (l as f64 / 32768.0) + 0.5 * (r as f64 / 32768.0);
        for s in &audio.samples {
            assert!((s - expected).abs() < 1e-12);
        }
    }
}

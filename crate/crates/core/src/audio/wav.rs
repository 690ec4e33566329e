//! Minimal WAV reader/writer: mono PCM 16-bit or IEEE float 32-bit.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WavError {
    #[error("wav: {0}")]
    Malformed(String),
    #[error("wav: unsupported {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavAudio {
    pub sample_rate: u32,
    /// Mono samples in [-1, 1].
    pub samples: Vec<f32>,
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, WavError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| WavError::Malformed("truncated".into()))
}

fn read_u16(bytes: &[u8], at: usize) -> Result<u16, WavError> {
    bytes
        .get(at..at + 2)
        .map(|b| u16::from_le_bytes(b.try_into().unwrap()))
        .ok_or_else(|| WavError::Malformed("truncated".into()))
}

/// Parse a RIFF/WAVE file. Requires exactly one channel and either 16-bit
/// PCM (format 1) or 32-bit IEEE float (format 3) samples.
pub fn parse_wav(bytes: &[u8]) -> Result<WavAudio, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::Malformed("missing RIFF/WAVE header".into()));
    }

    let mut pos = 12usize;
    let mut fmt: Option<(u16, u16, u32, u16)> = None; // format, channels, rate, bits
    let mut data: Option<&[u8]> = None;

    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = read_u32(bytes, pos + 4)? as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| WavError::Malformed("chunk size exceeds file".into()))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(WavError::Malformed("fmt chunk too small".into()));
                }
                fmt = Some((
                    read_u16(body, 0)?,
                    read_u16(body, 2)?,
                    read_u32(body, 4)?,
                    read_u16(body, 14)?,
                ));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned; odd sizes carry a pad byte.
        pos = body_end + (size & 1);
    }

    let (format, channels, sample_rate, bits) =
        fmt.ok_or_else(|| WavError::Malformed("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| WavError::Malformed("missing data chunk".into()))?;

    if channels != 1 {
        return Err(WavError::Unsupported(format!("{channels} channels (need mono)")));
    }
    if sample_rate == 0 {
        return Err(WavError::Malformed("zero sample rate".into()));
    }

    let samples = match (format, bits) {
        (1, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes(c.try_into().unwrap()) as f32 / 32768.0)
            .collect(),
        (3, 32) => {
            let samples: Vec<f32> = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            if samples.iter().any(|v| !v.is_finite()) {
                return Err(WavError::Malformed("non-finite float sample".into()));
            }
            samples
        }
        (f, b) => {
            return Err(WavError::Unsupported(format!(
                "format {f} with {b}-bit samples (need PCM16 or float32)"
            )))
        }
    };

    Ok(WavAudio { sample_rate, samples })
}

/// Encode mono samples as 16-bit PCM WAV.
pub fn encode_wav_16(sample_rate: u32, samples: &[f32]) -> Vec<u8> {
    let data_len = samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&sample_rate.to_le_bytes());
    out.extend_from_slice(&(sample_rate * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

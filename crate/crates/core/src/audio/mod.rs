//! Voice spectrogram features.
//!
//! Lesson audio is cut into one-minute segments, each segment is run
//! through a Hann-windowed STFT (window 1024, overlap 128, 44.1 kHz), and
//! the log-power magnitudes become min-max normalized 8-bit feature maps
//! with low frequencies at the bottom.

pub mod fft;
pub mod wav;

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::fuse::{FeatureMap, Modality};
use crate::imaging;

pub const SAMPLE_RATE: u32 = 44_100;
pub const FFT_SIZE: usize = 1024;
pub const FFT_OVERLAP: usize = 128;
pub const SEGMENT_LEN_S: usize = 60;

#[derive(Debug, Error, PartialEq)]
pub enum AudioError {
    #[error(transparent)]
    Fft(#[from] fft::FftError),
    #[error(transparent)]
    Wav(#[from] wav::WavError),
    #[error("segment too short: {got} samples, need at least {need}")]
    SegmentTooShort { got: usize, need: usize },
    #[error("unsupported sample rate {found} Hz (expected {SAMPLE_RATE})")]
    UnsupportedSampleRate { found: u32 },
    #[error("overlap {overlap} must be smaller than fft size {fft_size}")]
    BadOverlap { overlap: usize, fft_size: usize },
}

/// One one-minute slice of lesson audio, zero-padded to exactly
/// `60 * sample_rate` samples.
#[derive(Debug, Clone)]
pub struct AudioSegment {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub segment_index: usize,
}

impl AudioSegment {
    pub fn expected_len(&self) -> usize {
        SEGMENT_LEN_S * self.sample_rate as usize
    }
}

/// Split lesson audio into `segment_count` one-minute segments, zero-padding
/// past the end of the recording.
pub fn segment_audio(samples: &[f32], sample_rate: u32, segment_count: usize) -> Vec<AudioSegment> {
    let seg_len = SEGMENT_LEN_S * sample_rate as usize;
    (0..segment_count)
        .map(|i| {
            let start = i * seg_len;
            let mut seg = vec![0.0f32; seg_len];
            if start < samples.len() {
                let end = (start + seg_len).min(samples.len());
                seg[..end - start].copy_from_slice(&samples[start..end]);
            }
            AudioSegment { samples: seg, sample_rate, segment_index: i }
        })
        .collect()
}

/// Magnitude spectrogram: `frames` rows of `fft_size/2 + 1` frequency bins.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    /// Row-major `[frame][bin]` magnitudes.
    pub magnitudes: Vec<f64>,
}

/// Number of STFT frames for a signal of `n` samples: one frame per hop,
/// with tail frames zero-padded to the window length.
pub fn frame_count(n: usize, fft_size: usize, overlap: usize) -> usize {
    let hop = fft_size - overlap;
    if n < fft_size {
        0
    } else {
        n / hop
    }
}

/// Short-time Fourier transform with a periodic Hann window.
pub fn stft(seg: &AudioSegment, fft_size: usize, overlap: usize) -> Result<Spectrogram, AudioError> {
    if overlap >= fft_size {
        return Err(AudioError::BadOverlap { overlap, fft_size });
    }
    if !fft_size.is_power_of_two() {
        return Err(AudioError::Fft(fft::FftError::NonPowerOfTwoLength(fft_size)));
    }
    let n = seg.samples.len();
    if n < fft_size {
        return Err(AudioError::SegmentTooShort { got: n, need: fft_size });
    }
    let hop = fft_size - overlap;
    let frames = frame_count(n, fft_size, overlap);
    let bins = fft_size / 2 + 1;

    let window: Vec<f64> = (0..fft_size)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / fft_size as f64).cos()))
        .collect();

    let magnitudes: Vec<f64> = (0..frames)
        .into_par_iter()
        .flat_map_iter(|f| {
            let start = f * hop;
            let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
            for (i, slot) in buf.iter_mut().enumerate() {
                let s = seg.samples.get(start + i).copied().unwrap_or(0.0) as f64;
                *slot = Complex64::new(s * window[i], 0.0);
            }
            let spec = fft::fft_radix2(&buf).expect("power-of-two length");
            spec.into_iter().take(bins).map(|c| c.norm()).collect::<Vec<_>>()
        })
        .collect();

    Ok(Spectrogram { frames, bins, magnitudes })
}

/// Convert a spectrogram into the fixed-size 8-bit feature map: log-power,
/// per-segment min-max to [0, 255], bilinear resize with time on the
/// horizontal axis and low frequencies at the bottom row.
pub fn spectrogram_to_feature_map(
    sp: &Spectrogram,
    lesson_id: &str,
    segment_index: usize,
    h: usize,
    w: usize,
) -> FeatureMap {
    // Log-power, oriented freq (top = highest bin) x time.
    let mut grid = vec![0.0f64; sp.bins * sp.frames];
    for t in 0..sp.frames {
        for b in 0..sp.bins {
            let mag = sp.magnitudes[t * sp.bins + b];
            let p = 10.0 * (mag * mag + 1e-10).log10();
            grid[(sp.bins - 1 - b) * sp.frames + t] = p;
        }
    }
    let lo = grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let data = if hi - lo <= 0.0 {
        vec![0u8; h * w]
    } else {
        for v in grid.iter_mut() {
            *v = (*v - lo) / (hi - lo) * 255.0;
        }
        imaging::resize_bilinear(&grid, sp.bins, sp.frames, h, w)
            .into_iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    };
    FeatureMap {
        modality: Modality::Voice,
        lesson_id: lesson_id.to_string(),
        segment_index,
        h,
        w,
        data,
    }
}

/// Full voice pipeline for one lesson: parse the WAV (must be mono
/// 44.1 kHz), then emit one feature map per segment.
pub fn voice_maps_from_wav(
    bytes: &[u8],
    lesson_id: &str,
    segment_count: usize,
    fft_size: usize,
    overlap: usize,
    map_h: usize,
    map_w: usize,
) -> Result<Vec<FeatureMap>, AudioError> {
    let audio = wav::parse_wav(bytes)?;
    if audio.sample_rate != SAMPLE_RATE {
        return Err(AudioError::UnsupportedSampleRate { found: audio.sample_rate });
    }
    let segments = segment_audio(&audio.samples, audio.sample_rate, segment_count);
    segments
        .iter()
        .map(|seg| {
            let sp = stft(seg, fft_size, overlap)?;
            Ok(spectrogram_to_feature_map(&sp, lesson_id, seg.segment_index, map_h, map_w))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, amp: f64, n: usize, fs: f64) -> Vec<f32> {
        (0..n)
            .map(|i| (amp * (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin()) as f32)
            .collect()
    }

    #[test]
    fn standard_segment_yields_2953_frames() {
        let n = SEGMENT_LEN_S * SAMPLE_RATE as usize;
        assert_eq!(frame_count(n, FFT_SIZE, FFT_OVERLAP), 2953);
    }

    #[test]
    fn silence_gives_zero_magnitudes_and_zero_map() {
        let seg = AudioSegment {
            samples: vec![0.0; FFT_SIZE * 4],
            sample_rate: SAMPLE_RATE,
            segment_index: 0,
        };
        let sp = stft(&seg, FFT_SIZE, FFT_OVERLAP).unwrap();
        assert!(sp.magnitudes.iter().all(|&m| m == 0.0));
        let map = spectrogram_to_feature_map(&sp, "L1", 0, 320, 480);
        assert_eq!((map.h, map.w), (320, 480));
        assert!(map.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn sine_peaks_at_bin_10() {
        // 10 * 44100 / 1024 = 430.66 Hz lands exactly on bin 10.
        let freq = 10.0 * SAMPLE_RATE as f64 / FFT_SIZE as f64;
        let samples = sine(freq, 1.0, FFT_SIZE * 8, SAMPLE_RATE as f64);
        let seg = AudioSegment { samples, sample_rate: SAMPLE_RATE, segment_index: 0 };
        let sp = stft(&seg, FFT_SIZE, FFT_OVERLAP).unwrap();
        for t in 0..sp.frames {
            let row = &sp.magnitudes[t * sp.bins..(t + 1) * sp.bins];
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, 10, "frame {t}");
        }
    }

    #[test]
    fn short_segment_rejected() {
        let seg = AudioSegment { samples: vec![0.0; 100], sample_rate: SAMPLE_RATE, segment_index: 0 };
        assert!(matches!(
            stft(&seg, FFT_SIZE, FFT_OVERLAP),
            Err(AudioError::SegmentTooShort { .. })
        ));
    }

    #[test]
    fn magnitudes_invariant_to_sign_flip() {
        let samples = sine(500.0, 0.8, FFT_SIZE * 4, SAMPLE_RATE as f64);
        let flipped: Vec<f32> = samples.iter().map(|v| -v).collect();
        let a = stft(
            &AudioSegment { samples, sample_rate: SAMPLE_RATE, segment_index: 0 },
            FFT_SIZE,
            FFT_OVERLAP,
        )
        .unwrap();
        let b = stft(
            &AudioSegment { samples: flipped, sample_rate: SAMPLE_RATE, segment_index: 0 },
            FFT_SIZE,
            FFT_OVERLAP,
        )
        .unwrap();
        for (x, y) in a.magnitudes.iter().zip(&b.magnitudes) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn low_tone_brightens_bottom_rows() {
        // Loud low tone + quiet high tone.
        let fs = SAMPLE_RATE as f64;
        let n = FFT_SIZE * 16;
        let low = sine(200.0, 0.9, n, fs);
        let high = sine(8000.0, 0.05, n, fs);
        let samples: Vec<f32> = low.iter().zip(&high).map(|(a, b)| a + b).collect();
        let seg = AudioSegment { samples, sample_rate: SAMPLE_RATE, segment_index: 0 };
        let sp = stft(&seg, FFT_SIZE, FFT_OVERLAP).unwrap();

        // Oracle on the raw spectrogram: energy in the low-frequency third
        // exceeds energy in the high-frequency third.
        let third = sp.bins / 3;
        let (mut low_e, mut high_e) = (0.0, 0.0);
        for t in 0..sp.frames {
            for b in 0..sp.bins {
                let m = sp.magnitudes[t * sp.bins + b];
                if b < third {
                    low_e += m * m;
                } else if b >= 2 * third {
                    high_e += m * m;
                }
            }
        }
        assert!(low_e > high_e);

        let map = spectrogram_to_feature_map(&sp, "L1", 0, 320, 480);
        let rows = map.h / 3;
        let mean_of = |range: std::ops::Range<usize>| -> f64 {
            let mut sum = 0.0;
            let mut count = 0usize;
            for y in range {
                for x in 0..map.w {
                    sum += map.data[y * map.w + x] as f64;
                    count += 1;
                }
            }
            sum / count as f64
        };
        let top = mean_of(0..rows);
        let bottom = mean_of(map.h - rows..map.h);
        assert!(
            bottom > top,
            "low frequencies render at the bottom: bottom {bottom:.1} vs top {top:.1}"
        );
    }

    #[test]
    fn doubling_amplitude_leaves_map_unchanged() {
        // Noise so every bin carries energy well above the log floor.
        let mut state = 42u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f32 / (1u32 << 30) as f32) - 1.0
        };
        let base: Vec<f32> = (0..FFT_SIZE * 6).map(|_| 0.4 * next()).collect();
        let doubled: Vec<f32> = base.iter().map(|v| v * 2.0).collect();
        let map_a = {
            let sp = stft(
                &AudioSegment { samples: base, sample_rate: SAMPLE_RATE, segment_index: 0 },
                FFT_SIZE,
                FFT_OVERLAP,
            )
            .unwrap();
            spectrogram_to_feature_map(&sp, "L", 0, 64, 96)
        };
        let map_b = {
            let sp = stft(
                &AudioSegment { samples: doubled, sample_rate: SAMPLE_RATE, segment_index: 0 },
                FFT_SIZE,
                FFT_OVERLAP,
            )
            .unwrap();
            spectrogram_to_feature_map(&sp, "L", 0, 64, 96)
        };
        for (a, b) in map_a.data.iter().zip(&map_b.data) {
            assert!((*a as i16 - *b as i16).abs() <= 1, "{a} vs {b}");
        }
    }

    #[test]
    fn wrong_sample_rate_rejected() {
        let bytes = wav::encode_wav_16(48000, &vec![0.0; 48000]);
        let err = voice_maps_from_wav(&bytes, "L1", 1, FFT_SIZE, FFT_OVERLAP, 32, 48).unwrap_err();
        assert!(matches!(err, AudioError::UnsupportedSampleRate { found: 48000 }));
    }
}

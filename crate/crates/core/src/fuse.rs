//! Modality feature maps and their fusion into training samples.
//!
//! Feature-level fusion ("feature stacking") packs the three modality maps
//! of one segment into the color channels of a single input: R carries
//! action, G carries slide progression, B carries voice.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

/// Default feature-map height (frequency / vertical axis).
pub const MAP_H: usize = 320;
/// Default feature-map width (time / horizontal axis).
pub const MAP_W: usize = 480;

const FUSE_MAGIC: &[u8; 8] = b"LTRNFUSE";
const FUSE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Action,
    Slide,
    Voice,
}

impl Modality {
    pub fn prefix(self) -> &'static str {
        match self {
            Modality::Action => "action",
            Modality::Slide => "slide",
            Modality::Voice => "voice",
        }
    }

    /// Standard per-segment file name, e.g. `voice_L1_041.png`.
    pub fn file_name(self, lesson_id: &str, segment: usize) -> String {
        format!("{}_{}_{:03}.png", self.prefix(), lesson_id, segment)
    }
}

/// Single-modality 2D intensity map for one one-minute segment.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub modality: Modality,
    pub lesson_id: String,
    pub segment_index: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<u8>,
}

impl FeatureMap {
    pub fn zeros(modality: Modality, lesson_id: &str, segment_index: usize, h: usize, w: usize) -> Self {
        FeatureMap {
            modality,
            lesson_id: lesson_id.to_string(),
            segment_index,
            h,
            w,
            data: vec![0; h * w],
        }
    }

    pub fn from_data(
        modality: Modality,
        lesson_id: &str,
        segment_index: usize,
        h: usize,
        w: usize,
        data: Vec<u8>,
    ) -> Result<Self, FuseError> {
        if data.len() != h * w {
            return Err(FuseError::ShapeMismatch {
                expected: (h, w),
                found: (data.len() / w.max(1), w),
            });
        }
        Ok(FeatureMap { modality, lesson_id: lesson_id.to_string(), segment_index, h, w, data })
    }

    pub fn save_png(&self, dir: &Path) -> Result<std::path::PathBuf, crate::imaging::ImageError> {
        let path = dir.join(self.modality.file_name(&self.lesson_id, self.segment_index));
        crate::imaging::save_gray_png(&path, self.w, self.h, &self.data)?;
        Ok(path)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum FuseError {
    #[error("modality mismatch: maps must share lesson and segment ({0})")]
    ModalityMismatch(String),
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: (usize, usize), found: (usize, usize) },
    #[error("label {0} outside [0, 1]")]
    LabelOutOfRange(f64),
    #[error("fused store: {0}")]
    BadStore(String),
    #[error("io: {0}")]
    Io(String),
}

/// One fused training sample: three channel planes stored as 8-bit
/// intensities plus the scalar label. The model consumes the planes scaled
/// to [0, 1] via [`FusedSample::to_input`].
#[derive(Debug, Clone, PartialEq)]
pub struct FusedSample {
    pub lesson_id: String,
    pub segment_index: usize,
    pub h: usize,
    pub w: usize,
    /// Channel planes in R, G, B order = action, slide, voice.
    pub channels: [Vec<u8>; 3],
    pub label: f64,
}

impl FusedSample {
    /// Channel-major float tensor, intensities divided by 255.
    pub fn to_input(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(3 * self.h * self.w);
        for ch in &self.channels {
            out.extend(ch.iter().map(|&v| v as f32 / 255.0));
        }
        out
    }
}

/// Stack one segment's action, slide, and voice maps into a fused sample.
pub fn fuse_feature_level(
    action: &FeatureMap,
    slide: &FeatureMap,
    voice: &FeatureMap,
    label: f64,
) -> Result<FusedSample, FuseError> {
    for (map, want) in [
        (action, Modality::Action),
        (slide, Modality::Slide),
        (voice, Modality::Voice),
    ] {
        if map.modality != want {
            return Err(FuseError::ModalityMismatch(format!(
                "expected {want:?} map, found {:?}",
                map.modality
            )));
        }
    }
    let same_segment = action.lesson_id == slide.lesson_id
        && action.lesson_id == voice.lesson_id
        && action.segment_index == slide.segment_index
        && action.segment_index == voice.segment_index;
    if !same_segment {
        return Err(FuseError::ModalityMismatch(format!(
            "action {}#{}, slide {}#{}, voice {}#{}",
            action.lesson_id,
            action.segment_index,
            slide.lesson_id,
            slide.segment_index,
            voice.lesson_id,
            voice.segment_index
        )));
    }
    for map in [slide, voice] {
        if map.h != action.h || map.w != action.w {
            return Err(FuseError::ShapeMismatch {
                expected: (action.h, action.w),
                found: (map.h, map.w),
            });
        }
    }
    if !(0.0..=1.0).contains(&label) {
        return Err(FuseError::LabelOutOfRange(label));
    }
    Ok(FusedSample {
        lesson_id: action.lesson_id.clone(),
        segment_index: action.segment_index,
        h: action.h,
        w: action.w,
        channels: [action.data.clone(), slide.data.clone(), voice.data.clone()],
        label,
    })
}

/// Serialize one lesson's fused samples into the binary store format:
/// magic, version, lesson id, map shape, then per-sample segment index,
/// label, and the three channel planes.
pub fn write_fused_store(path: &Path, samples: &[FusedSample]) -> Result<(), FuseError> {
    if samples.is_empty() {
        return Err(FuseError::BadStore("no samples to write".into()));
    }
    let (h, w) = (samples[0].h, samples[0].w);
    let lesson = samples[0].lesson_id.as_bytes();
    for s in samples {
        if s.h != h || s.w != w {
            return Err(FuseError::ShapeMismatch { expected: (h, w), found: (s.h, s.w) });
        }
        if s.lesson_id.as_bytes() != lesson {
            return Err(FuseError::BadStore("mixed lessons in one store".into()));
        }
    }
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| FuseError::Io(format!("{}: {e}", path.display())))?,
    );
    let io = |e: std::io::Error| FuseError::Io(e.to_string());
    f.write_all(FUSE_MAGIC).map_err(io)?;
    f.write_all(&FUSE_VERSION.to_le_bytes()).map_err(io)?;
    f.write_all(&(lesson.len() as u32).to_le_bytes()).map_err(io)?;
    f.write_all(lesson).map_err(io)?;
    f.write_all(&(samples.len() as u32).to_le_bytes()).map_err(io)?;
    f.write_all(&(h as u32).to_le_bytes()).map_err(io)?;
    f.write_all(&(w as u32).to_le_bytes()).map_err(io)?;
    for s in samples {
        f.write_all(&(s.segment_index as u32).to_le_bytes()).map_err(io)?;
        f.write_all(&s.label.to_le_bytes()).map_err(io)?;
        for ch in &s.channels {
            f.write_all(ch).map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_fused_store(path: &Path) -> Result<Vec<FusedSample>, FuseError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| FuseError::Io(format!("{}: {e}", path.display())))?;
    decode_fused_store(&bytes)
}

/// Decode a fused store from raw bytes, validating every length field.
pub fn decode_fused_store(bytes: &[u8]) -> Result<Vec<FusedSample>, FuseError> {
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], FuseError> {
        let end = pos
            .checked_add(n)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| FuseError::BadStore("truncated".into()))?;
        let out = &bytes[*pos..end];
        *pos = end;
        Ok(out)
    };
    let take_u32 = |pos: &mut usize| -> Result<u32, FuseError> {
        Ok(u32::from_le_bytes(take(pos, 4)?.try_into().unwrap()))
    };

    if take(&mut pos, 8)? != FUSE_MAGIC {
        return Err(FuseError::BadStore("bad magic".into()));
    }
    let version = take_u32(&mut pos)?;
    if version != FUSE_VERSION {
        return Err(FuseError::BadStore(format!("unsupported version {version}")));
    }
    let id_len = take_u32(&mut pos)? as usize;
    if id_len > 4096 {
        return Err(FuseError::BadStore("lesson id too long".into()));
    }
    let lesson_id = String::from_utf8(take(&mut pos, id_len)?.to_vec())
        .map_err(|_| FuseError::BadStore("lesson id not utf-8".into()))?;
    let count = take_u32(&mut pos)? as usize;
    let h = take_u32(&mut pos)? as usize;
    let w = take_u32(&mut pos)? as usize;
    let plane = h
        .checked_mul(w)
        .filter(|&p| p > 0 && p <= 1 << 24)
        .ok_or_else(|| FuseError::BadStore("implausible map shape".into()))?;
    let per_sample = 4 + 8 + 3 * plane;
    if count.checked_mul(per_sample).map_or(true, |need| pos + need != bytes.len()) {
        return Err(FuseError::BadStore("size does not match sample count".into()));
    }

    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        let segment_index = take_u32(&mut pos)? as usize;
        let label = f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        if !label.is_finite() || !(0.0..=1.0).contains(&label) {
            return Err(FuseError::BadStore(format!("label {label} out of range")));
        }
        let mut channels: [Vec<u8>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        for ch in &mut channels {
            *ch = take(&mut pos, plane)?.to_vec();
        }
        samples.push(FusedSample {
            lesson_id: lesson_id.clone(),
            segment_index,
            h,
            w,
            channels,
            label,
        });
    }
    Ok(samples)
}

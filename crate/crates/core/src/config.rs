//! Pipeline configuration: a single TOML file with sections, every default
//! pinned to the protocol value the toolkit is built around.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::MaskSpec;
use crate::eval::CvMode;
use crate::labeling::CountMode;
use crate::model::{Architecture, Fusion, TrainConfig};
use crate::smoothing::Smoother;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    BadToml(String),
    #[error("config io: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub logs: PathBuf,
    pub audio_dir: PathBuf,
    pub frames_dir: PathBuf,
    pub pose_dir: PathBuf,
    pub slides_dir: PathBuf,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            logs: "data/access_log.csv".into(),
            audio_dir: "data/audio".into(),
            frames_dir: "data/frames".into(),
            pose_dir: "data/pose".into(),
            slides_dir: "data/slides".into(),
            out_dir: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Records shorter than this many seconds are dropped.
    pub min_record_s: f64,
    /// A viewer must exceed this total (seconds) per lesson.
    pub min_total_s: f64,
    /// Minimum record/segment overlap that counts as an access.
    pub min_overlap_s: f64,
    /// High-attention zone boundary.
    pub hi: f64,
    /// Low-attention zone boundary.
    pub lo: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds { min_record_s: 60.0, min_total_s: 300.0, min_overlap_s: 1.0, hi: 0.5, lo: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub fft_size: usize,
    pub overlap: usize,
    pub lk_window: usize,
    pub lk_max_iters: usize,
    pub lk_eps: f64,
    pub lk_min_eig: f64,
    pub frame_stride: usize,
    pub pose_min_confidence: f64,
    pub max_track_points: usize,
    pub map_h: usize,
    pub map_w: usize,
    pub count_mode: CountMode,
    pub mask: MaskSpec,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            fft_size: 1024,
            overlap: 128,
            lk_window: 15,
            lk_max_iters: 10,
            lk_eps: 0.01,
            lk_min_eig: 1e-4,
            frame_stride: 6,
            pose_min_confidence: 0.3,
            max_track_points: 50,
            map_h: 320,
            map_w: 480,
            count_mode: CountMode::Events,
            mask: MaskSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LessonParams {
    pub segment_count: usize,
    pub segment_len_s: f64,
}

impl Default for LessonParams {
    fn default() -> Self {
        LessonParams { segment_count: 95, segment_len_s: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelChoice {
    pub architecture: Architecture,
    pub fusion: Fusion,
}

impl Default for ModelChoice {
    fn default() -> Self {
        ModelChoice { architecture: Architecture::MiniPlain, fusion: Fusion::FeatureLevel }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub mode: CvMode,
    pub smoother: Smoother,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams { mode: CvMode::Sevenfold, smoother: Smoother::Ma }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub thresholds: Thresholds,
    pub features: FeatureParams,
    pub lesson: LessonParams,
    pub model: ModelChoice,
    pub train: TrainConfig,
    pub eval: EvalParams,
}

impl PipelineConfig {
    pub fn from_toml(bytes: &[u8]) -> Result<Self, ConfigError> {
        let text =
            std::str::from_utf8(bytes).map_err(|_| ConfigError::BadToml("not utf-8".into()))?;
        toml::from_str(text).map_err(|e| ConfigError::BadToml(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let bytes =
            std::fs::read(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&bytes)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Resolved configuration as a JSON value, embedded in reports.
    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

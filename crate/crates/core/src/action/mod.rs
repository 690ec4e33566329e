//! Instructor-action features.
//!
//! Frames arrive as an indexed directory of grayscale images plus a JSON
//! manifest; pose keypoints (when available) arrive as JSON Lines. Student
//! seating areas are masked out, tracking points are seeded from pose or a
//! corner detector, tracked with Lucas-Kanade flow at a configurable frame
//! stride, and the trajectories are rendered into per-segment maps.

pub mod corners;
pub mod flow;
pub mod render;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuse::{FeatureMap, Modality};

pub use flow::{lucas_kanade, Flow, LkParams};
pub use render::render_action_map;

pub const POSE_MIN_CONFIDENCE: f64 = 0.3;
pub const MAX_TRACK_POINTS: usize = 50;
pub const FRAME_STRIDE: usize = 6;

/// One grayscale video frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub w: usize,
    pub h: usize,
    pub data: Vec<u8>,
    pub timestamp_s: f64,
}

/// Rectangles (in pixels) to exclude from tracking, e.g. the students'
/// seating area.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    #[serde(default)]
    pub rects: Vec<MaskRect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Pose keypoints for one sampled frame: `(x, y, confidence)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseKeypoints {
    pub t: f64,
    pub points: Vec<(f64, f64, f64)>,
}

/// Per-step tracking outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Tracked,
    Lost,
    Degenerate,
}

/// One point's trajectory through a segment: `(t, x, y)` positions plus
/// the outcome of each attempted step.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub point_id: usize,
    pub positions: Vec<(f64, f64, f64)>,
    pub statuses: Vec<StepStatus>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ActionError {
    #[error("no trackable points (flat frame and no pose)")]
    NoTrackablePoints,
    #[error("frame manifest: {0}")]
    Manifest(String),
    #[error("pose input: {0}")]
    Pose(String),
    #[error("frame image: {0}")]
    Image(String),
    #[error("frame size {found:?} differs from first frame {expected:?}")]
    FrameShape { expected: (usize, usize), found: (usize, usize) },
}

/// Zero out the mask rectangles (clipped to the frame bounds).
pub fn apply_mask(frame: &Frame, mask: &MaskSpec) -> Frame {
    let mut out = frame.clone();
    for r in &mask.rects {
        let x1 = r.x.min(frame.w);
        let y1 = r.y.min(frame.h);
        let x2 = r.x.saturating_add(r.w).min(frame.w);
        let y2 = r.y.saturating_add(r.h).min(frame.h);
        for y in y1..y2 {
            out.data[y * frame.w + x1..y * frame.w + x2].fill(0);
        }
    }
    out
}

/// Choose tracking seeds: confident in-bounds pose keypoints when pose is
/// available, otherwise corner detection on the (masked) frame.
pub fn seed_points(
    pose: Option<&PoseKeypoints>,
    frame: &Frame,
    min_confidence: f64,
    max_points: usize,
) -> Result<Vec<(f64, f64)>, ActionError> {
    let picked: Vec<(f64, f64)> = match pose {
        Some(p) => p
            .points
            .iter()
            .filter(|&&(x, y, c)| {
                c >= min_confidence && x >= 0.0 && y >= 0.0 && x < frame.w as f64 && y < frame.h as f64
            })
            .map(|&(x, y, _)| (x, y))
            .take(max_points)
            .collect(),
        None => corners::shi_tomasi(
            frame,
            max_points,
            corners::CORNER_QUALITY,
            corners::CORNER_MIN_DISTANCE,
        ),
    };
    if picked.is_empty() {
        Err(ActionError::NoTrackablePoints)
    } else {
        Ok(picked)
    }
}

/// Track seed points through a segment's sampled frames. Lost and
/// degenerate points stop accumulating positions but keep their history.
pub fn track_segment(frames: &[Frame], seeds: &[(f64, f64)], params: &LkParams) -> Vec<Track> {
    let mut tracks: Vec<Track> = seeds
        .iter()
        .enumerate()
        .map(|(id, &(x, y))| Track {
            point_id: id,
            positions: vec![(frames.first().map_or(0.0, |f| f.timestamp_s), x, y)],
            statuses: Vec::new(),
        })
        .collect();
    let mut alive: Vec<usize> = (0..tracks.len()).collect();

    for pair in frames.windows(2) {
        if alive.is_empty() {
            break;
        }
        let points: Vec<(f64, f64)> = alive
            .iter()
            .map(|&i| {
                let &(_, x, y) = tracks[i].positions.last().unwrap();
                (x, y)
            })
            .collect();
        let flows = lucas_kanade(&pair[0], &pair[1], &points, params);
        let mut survivors = Vec::with_capacity(alive.len());
        for (&track_idx, fl) in alive.iter().zip(&flows) {
            let track = &mut tracks[track_idx];
            track.statuses.push(fl.status);
            if fl.status == StepStatus::Tracked {
                let &(_, x, y) = track.positions.last().unwrap();
                track.positions.push((pair[1].timestamp_s, x + fl.dx, y + fl.dy));
                survivors.push(track_idx);
            }
        }
        alive = survivors;
    }
    tracks
}

/// Produce the action map for one segment from its sampled frames.
/// Segments with nothing to track yield an all-zero map.
pub fn extract_segment_map(
    frames: &[Frame],
    pose: Option<&PoseKeypoints>,
    mask: &MaskSpec,
    params: &LkParams,
    lesson_id: &str,
    segment_index: usize,
    map_h: usize,
    map_w: usize,
) -> Result<FeatureMap, ActionError> {
    let Some(first) = frames.first() else {
        return Ok(FeatureMap::zeros(Modality::Action, lesson_id, segment_index, map_h, map_w));
    };
    for f in frames {
        if (f.w, f.h) != (first.w, first.h) {
            return Err(ActionError::FrameShape {
                expected: (first.w, first.h),
                found: (f.w, f.h),
            });
        }
    }
    let masked: Vec<Frame> = frames.iter().map(|f| apply_mask(f, mask)).collect();
    let seeds = match seed_points(pose, &masked[0], POSE_MIN_CONFIDENCE, MAX_TRACK_POINTS) {
        Ok(s) => s,
        Err(ActionError::NoTrackablePoints) => {
            return Ok(FeatureMap::zeros(Modality::Action, lesson_id, segment_index, map_h, map_w))
        }
        Err(e) => return Err(e),
    };
    let tracks = track_segment(&masked, &seeds, params);
    Ok(render_action_map(&tracks, first.w, first.h, lesson_id, segment_index, map_h, map_w))
}

/// Frame directory manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    /// Frames per second of the source video.
    pub fps: f64,
    /// File name template containing `{index}` or zero-padded `{index:0N}`.
    pub pattern: String,
    /// Total number of frames on disk.
    pub count: usize,
}

impl FrameManifest {
    /// Expand the file pattern for a frame index.
    pub fn frame_name(&self, index: usize) -> Result<String, ActionError> {
        expand_pattern(&self.pattern, index)
    }
}

pub fn parse_frame_manifest(bytes: &[u8]) -> Result<FrameManifest, ActionError> {
    let manifest: FrameManifest =
        serde_json::from_slice(bytes).map_err(|e| ActionError::Manifest(e.to_string()))?;
    if !manifest.fps.is_finite() || manifest.fps <= 0.0 || manifest.fps > 1000.0 {
        return Err(ActionError::Manifest(format!("implausible fps {}", manifest.fps)));
    }
    if manifest.count > 100_000_000 {
        return Err(ActionError::Manifest(format!("implausible count {}", manifest.count)));
    }
    expand_pattern(&manifest.pattern, 0)?;
    Ok(manifest)
}

fn expand_pattern(pattern: &str, index: usize) -> Result<String, ActionError> {
    let start = pattern
        .find("{index")
        .ok_or_else(|| ActionError::Manifest("pattern must contain {index}".into()))?;
    let end = pattern[start..]
        .find('}')
        .map(|e| start + e)
        .ok_or_else(|| ActionError::Manifest("unclosed {index in pattern".into()))?;
    let spec = &pattern[start + 6..end];
    let rendered = if spec.is_empty() {
        index.to_string()
    } else if let Some(width) = spec.strip_prefix(":0").and_then(|w| w.parse::<usize>().ok()) {
        if width == 0 || width > 12 {
            return Err(ActionError::Manifest(format!("bad pad width in `{pattern}`")));
        }
        format!("{index:0width$}")
    } else {
        return Err(ActionError::Manifest(format!("bad index spec `{{index{spec}}}`")));
    };
    Ok(format!("{}{}{}", &pattern[..start], rendered, &pattern[end + 1..]))
}

/// Parse pose keypoints from JSON Lines: one object per sampled frame,
/// `{"t": seconds, "points": [[x, y, c], ...]}`.
pub fn parse_pose_jsonl(bytes: &[u8]) -> Result<Vec<PoseKeypoints>, ActionError> {
    #[derive(Deserialize)]
    struct Line {
        t: f64,
        points: Vec<[f64; 3]>,
    }
    let text =
        std::str::from_utf8(bytes).map_err(|_| ActionError::Pose("not utf-8".into()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(line)
            .map_err(|e| ActionError::Pose(format!("line {}: {e}", i + 1)))?;
        if !parsed.t.is_finite() {
            return Err(ActionError::Pose(format!("line {}: non-finite t", i + 1)));
        }
        for p in &parsed.points {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(ActionError::Pose(format!("line {}: non-finite point", i + 1)));
            }
            if !(0.0..=1.0).contains(&p[2]) {
                return Err(ActionError::Pose(format!(
                    "line {}: confidence {} outside [0, 1]",
                    i + 1,
                    p[2]
                )));
            }
        }
        out.push(PoseKeypoints {
            t: parsed.t,
            points: parsed.points.iter().map(|p| (p[0], p[1], p[2])).collect(),
        });
    }
    Ok(out)
}

/// Serialize pose keypoints to JSON Lines (fixture output).
pub fn pose_jsonl(poses: &[PoseKeypoints]) -> String {
    let mut out = String::new();
    for p in poses {
        let points: Vec<[f64; 3]> = p.points.iter().map(|&(x, y, c)| [x, y, c]).collect();
        let line = serde_json::json!({ "t": p.t, "points": points });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

/// Pose sample closest in time to `t`, if any.
pub fn nearest_pose<'a>(poses: &'a [PoseKeypoints], t: f64) -> Option<&'a PoseKeypoints> {
    poses.iter().min_by(|a, b| {
        (a.t - t).abs().total_cmp(&(b.t - t).abs())
    })
}

/// Options for the per-lesson action extraction pipeline.
#[derive(Debug, Clone)]
pub struct ActionOptions {
    pub lk: LkParams,
    pub mask: MaskSpec,
    pub frame_stride: usize,
    pub segment_count: usize,
    pub segment_len_s: f64,
    pub map_h: usize,
    pub map_w: usize,
}

/// Extract one map per segment from a frame directory. Frames for each
/// segment are sampled at `frame_stride`; segments past the end of the
/// recording come out all zero.
pub fn action_maps_from_manifest(
    frames_dir: &Path,
    manifest: &FrameManifest,
    poses: &[PoseKeypoints],
    lesson_id: &str,
    opts: &ActionOptions,
) -> Result<Vec<FeatureMap>, ActionError> {
    let frames_per_segment = (manifest.fps * opts.segment_len_s).round() as usize;
    (0..opts.segment_count)
        .into_par_iter()
        .map(|seg| {
            let begin = seg * frames_per_segment;
            let end = ((seg + 1) * frames_per_segment).min(manifest.count);
            let mut frames = Vec::new();
            if begin < end {
                for idx in (begin..end).step_by(opts.frame_stride.max(1)) {
                    let path = frames_dir.join(manifest.frame_name(idx)?);
                    let (w, h, data) = crate::imaging::load_gray_png(&path)
                        .map_err(|e| ActionError::Image(e.to_string()))?;
                    frames.push(Frame {
                        w,
                        h,
                        data,
                        timestamp_s: idx as f64 / manifest.fps,
                    });
                }
            }
            let seg_start = seg as f64 * opts.segment_len_s;
            let pose = nearest_pose(poses, seg_start);
            extract_segment_map(
                &frames,
                pose,
                &opts.mask,
                &opts.lk,
                lesson_id,
                seg,
                opts.map_h,
                opts.map_w,
            )
        })
        .collect()
}

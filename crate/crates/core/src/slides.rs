//! Slide-progression features from a timestamped page-event stream.
//!
//! A lesson's slide events are reduced to net forward page movement per
//! 5-minute block, expanded to 1-minute resolution, smoothed, normalized
//! by the lesson maximum, and finally rendered as constant-intensity maps.

use std::fmt::Write as _;

use thiserror::Error;

use crate::fuse::{FeatureMap, Modality};
use crate::smoothing;

pub const LESSON_LEN_MIN: usize = 95;
pub const BLOCK_MIN: usize = 5;
/// 95 minutes / 5-minute blocks.
pub const BLOCK_COUNT: usize = LESSON_LEN_MIN / BLOCK_MIN;

pub const SLIDE_CSV_HEADER: &str = "timestamp_s,page";

/// One observed slide page at a point in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlideEvent {
    pub timestamp_s: f64,
    pub page: u32,
}

/// All stages of the slide-progression series for one lesson.
#[derive(Debug, Clone, PartialEq)]
pub struct SlideSeries {
    /// Net forward movement per 5-minute block (clamped at zero).
    pub p_raw: Vec<f64>,
    /// Block values repeated to 1-minute resolution.
    pub p_1min: Vec<f64>,
    /// Moving average (window 5, shrinking edges) of `p_1min`.
    pub p_smooth: Vec<f64>,
    /// `p_smooth` divided by its lesson-wise maximum.
    pub p_norm: Vec<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SlideError {
    #[error("slide csv: {0}")]
    BadCsv(String),
    #[error("normalized value {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("expected {expected} block values, got {got}")]
    BadBlockCount { expected: usize, got: usize },
}

/// Parse slide events from CSV (`timestamp_s,page`). Timestamps must be
/// non-decreasing and pages positive.
pub fn parse_slide_events(bytes: &[u8]) -> Result<Vec<SlideEvent>, SlideError> {
    let text = std::str::from_utf8(bytes).map_err(|_| SlideError::BadCsv("not utf-8".into()))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r') == SLIDE_CSV_HEADER => {}
        Some((_, h)) => return Err(SlideError::BadCsv(format!("bad header `{h}`"))),
        None => return Err(SlideError::BadCsv("empty file".into())),
    }
    let mut events = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (idx, raw) in lines {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let (t_str, p_str) = line
            .split_once(',')
            .ok_or_else(|| SlideError::BadCsv(format!("line {line_no}: expected 2 columns")))?;
        if p_str.contains(',') {
            return Err(SlideError::BadCsv(format!("line {line_no}: expected 2 columns")));
        }
        let timestamp_s: f64 = t_str
            .parse()
            .map_err(|_| SlideError::BadCsv(format!("line {line_no}: bad timestamp `{t_str}`")))?;
        let page: u32 = p_str
            .parse()
            .map_err(|_| SlideError::BadCsv(format!("line {line_no}: bad page `{p_str}`")))?;
        if !timestamp_s.is_finite() || timestamp_s < 0.0 {
            return Err(SlideError::BadCsv(format!(
                "line {line_no}: timestamp must be finite and non-negative"
            )));
        }
        if page == 0 {
            return Err(SlideError::BadCsv(format!("line {line_no}: page must be positive")));
        }
        if timestamp_s < last_t {
            return Err(SlideError::BadCsv(format!(
                "line {line_no}: timestamps must be non-decreasing"
            )));
        }
        last_t = timestamp_s;
        events.push(SlideEvent { timestamp_s, page });
    }
    Ok(events)
}

pub fn slide_events_csv(events: &[SlideEvent]) -> String {
    let mut out = String::from(SLIDE_CSV_HEADER);
    out.push('\n');
    for e in events {
        let _ = writeln!(out, "{},{}", e.timestamp_s, e.page);
    }
    out
}

/// Step 1: net forward movement of the maximum page number between
/// consecutive 5-minute blocks, clamped at zero. The first block has no
/// predecessor and is zero; blocks without events inherit the previous
/// block's maximum.
pub fn net_progression(events: &[SlideEvent], lesson_len_min: usize, block_min: usize) -> Vec<f64> {
    let blocks = lesson_len_min / block_min;
    let block_len_s = block_min as f64 * 60.0;
    let lesson_len_s = lesson_len_min as f64 * 60.0;

    // Maximum page per block, carrying forward through empty blocks.
    let mut maxima: Vec<Option<u32>> = vec![None; blocks];
    for e in events {
        if e.timestamp_s >= lesson_len_s {
            continue;
        }
        let b = ((e.timestamp_s / block_len_s).floor() as usize).min(blocks - 1);
        maxima[b] = Some(maxima[b].map_or(e.page, |m| m.max(e.page)));
    }
    let mut carry: Option<u32> = None;
    for m in maxima.iter_mut() {
        if m.is_none() {
            *m = carry;
        }
        carry = *m;
    }

    let mut p_raw = vec![0.0; blocks];
    for i in 1..blocks {
        if let (Some(cur), Some(prev)) = (maxima[i], maxima[i - 1]) {
            let diff = cur as f64 - prev as f64;
            if diff > 0.0 {
                p_raw[i] = diff;
            }
        }
    }
    p_raw
}

/// Steps 2-4: repeat each block value five times, smooth with the centered
/// window-5 moving average, and normalize by the lesson maximum.
pub fn expand_smooth_normalize(p_raw: &[f64]) -> Result<SlideSeries, SlideError> {
    if p_raw.len() != BLOCK_COUNT {
        return Err(SlideError::BadBlockCount { expected: BLOCK_COUNT, got: p_raw.len() });
    }
    let p_1min: Vec<f64> = p_raw
        .iter()
        .flat_map(|&v| std::iter::repeat(v).take(BLOCK_MIN))
        .collect();
    let p_smooth = smoothing::moving_average(&p_1min, 5).expect("series is never empty");
    let p_norm = crate::labeling::normalize_by_max(&p_smooth);
    Ok(SlideSeries { p_raw: p_raw.to_vec(), p_1min, p_smooth, p_norm })
}

/// Step 5: expand one normalized value into a constant 8-bit map
/// (truncating `p * 255` toward zero).
pub fn slide_matrix(
    p_norm_i: f64,
    lesson_id: &str,
    segment_index: usize,
    h: usize,
    w: usize,
) -> Result<FeatureMap, SlideError> {
    if !p_norm_i.is_finite() || !(0.0..=1.0).contains(&p_norm_i) {
        return Err(SlideError::OutOfRange(p_norm_i));
    }
    let value = (p_norm_i * 255.0) as u8;
    Ok(FeatureMap {
        modality: Modality::Slide,
        lesson_id: lesson_id.to_string(),
        segment_index,
        h,
        w,
        data: vec![value; h * w],
    })
}

/// Full pipeline from events to the per-minute slide series.
pub fn slide_series(events: &[SlideEvent]) -> SlideSeries {
    let p_raw = net_progression(events, LESSON_LEN_MIN, BLOCK_MIN);
    expand_smooth_normalize(&p_raw).expect("net_progression emits the standard block count")
}

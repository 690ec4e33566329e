//! Per-lesson segment-access-frequency labels.
//!
//! Valid, clipped playback records are counted against a fixed one-minute
//! segment grid, smoothed with a centered moving average, and normalized by
//! the lesson-wise maximum into [0, 1].

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::log_ingest::PlaybackRecord;
use crate::smoothing;

/// Standard number of one-minute segments per lesson.
pub const SEGMENTS_PER_LESSON: usize = 95;
/// Smoothing window applied to raw counts.
pub const LABEL_SMOOTH_WINDOW: usize = 5;

/// Fixed one-minute segment grid for one lesson. Segment `i` spans
/// `[segment_length_s * i, segment_length_s * (i + 1))` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentGrid {
    pub lesson_id: String,
    pub segment_count: usize,
    pub segment_length_s: f64,
}

impl SegmentGrid {
    pub fn standard(lesson_id: impl Into<String>) -> Self {
        SegmentGrid {
            lesson_id: lesson_id.into(),
            segment_count: SEGMENTS_PER_LESSON,
            segment_length_s: 60.0,
        }
    }
}

/// How a segment access is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Every qualifying record increments the segment (access events).
    #[default]
    Events,
    /// Each viewer increments a segment at most once.
    DistinctViewers,
}

/// Normalized segment-access-frequency labels for one lesson.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSeries {
    pub lesson_id: String,
    pub raw_counts: Vec<u32>,
    pub smoothed: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl LabelSeries {
    /// True when no segment was ever accessed (all labels zero).
    pub fn is_degenerate(&self) -> bool {
        self.raw_counts.iter().all(|&c| c == 0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LabelError {
    #[error("record for lesson `{found}` passed to grid of lesson `{expected}`")]
    LessonMismatch { expected: String, found: String },
    #[error("label csv: {0}")]
    BadCsv(String),
}

/// Count how many records overlap each segment by at least `min_overlap_s`
/// seconds. One record can hit many segments; under [`CountMode::Events`] a
/// viewer with two records covering a segment counts twice.
pub fn count_segment_accesses(
    records: &[PlaybackRecord],
    grid: &SegmentGrid,
    min_overlap_s: f64,
    mode: CountMode,
) -> Result<Vec<u32>, LabelError> {
    let mut counts = vec![0u32; grid.segment_count];
    let mut seen: Vec<BTreeSet<&str>> = match mode {
        CountMode::Events => Vec::new(),
        CountMode::DistinctViewers => vec![BTreeSet::new(); grid.segment_count],
    };
    let seg_len = grid.segment_length_s;
    for rec in records {
        if rec.lesson_id != grid.lesson_id {
            return Err(LabelError::LessonMismatch {
                expected: grid.lesson_id.clone(),
                found: rec.lesson_id.clone(),
            });
        }
        let first = (rec.start_s / seg_len).floor().max(0.0) as usize;
        let last = (rec.end_s / seg_len).floor() as usize;
        for seg in first..=last.min(grid.segment_count.saturating_sub(1)) {
            let seg_start = seg as f64 * seg_len;
            let seg_end = seg_start + seg_len;
            let overlap = rec.end_s.min(seg_end) - rec.start_s.max(seg_start);
            if overlap >= min_overlap_s {
                match mode {
                    CountMode::Events => counts[seg] += 1,
                    CountMode::DistinctViewers => {
                        if seen[seg].insert(&rec.viewer_id) {
                            counts[seg] += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(counts)
}

/// Full label pipeline for one lesson: count, smooth (centered moving
/// average, window 5, shrinking edges), normalize by the maximum.
pub fn generate_labels(
    records: &[PlaybackRecord],
    grid: &SegmentGrid,
    min_overlap_s: f64,
    mode: CountMode,
) -> Result<LabelSeries, LabelError> {
    let raw_counts = count_segment_accesses(records, grid, min_overlap_s, mode)?;
    let raw_f: Vec<f64> = raw_counts.iter().map(|&c| c as f64).collect();
    let smoothed = smoothing::moving_average(&raw_f, LABEL_SMOOTH_WINDOW)
        .expect("segment grid is never empty");
    let normalized = normalize_by_max(&smoothed);
    Ok(LabelSeries {
        lesson_id: grid.lesson_id.clone(),
        raw_counts,
        smoothed,
        normalized,
    })
}

/// Divide by the maximum; an all-zero (or non-positive) series stays zero.
pub fn normalize_by_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        values.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// Serialize a label series to its CSV form
/// (`segment_index,raw_count,smoothed,normalized`).
pub fn label_csv(series: &LabelSeries) -> String {
    let mut out = String::from("segment_index,raw_count,smoothed,normalized\n");
    for i in 0..series.raw_counts.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            i, series.raw_counts[i], series.smoothed[i], series.normalized[i]
        );
    }
    out
}

/// Parse a label CSV produced by [`label_csv`]. Indices must be contiguous
/// from zero.
pub fn parse_label_csv(lesson_id: &str, bytes: &[u8]) -> Result<LabelSeries, LabelError> {
    let text = std::str::from_utf8(bytes).map_err(|_| LabelError::BadCsv("not utf-8".into()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("segment_index,raw_count,smoothed,normalized") => {}
        other => {
            return Err(LabelError::BadCsv(format!(
                "bad header `{}`",
                other.unwrap_or_default()
            )))
        }
    }
    let mut series = LabelSeries {
        lesson_id: lesson_id.to_string(),
        raw_counts: Vec::new(),
        smoothed: Vec::new(),
        normalized: Vec::new(),
    };
    for (n, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(LabelError::BadCsv(format!("line {}: wrong field count", n + 2)));
        }
        let idx: usize = fields[0]
            .parse()
            .map_err(|_| LabelError::BadCsv(format!("line {}: bad index", n + 2)))?;
        if idx != series.raw_counts.len() {
            return Err(LabelError::BadCsv(format!(
                "line {}: expected index {}, found {idx}",
                n + 2,
                series.raw_counts.len()
            )));
        }
        let raw: u32 = fields[1]
            .parse()
            .map_err(|_| LabelError::BadCsv(format!("line {}: bad raw count", n + 2)))?;
        let smoothed: f64 = fields[2]
            .parse()
            .map_err(|_| LabelError::BadCsv(format!("line {}: bad smoothed", n + 2)))?;
        let normalized: f64 = fields[3]
            .parse()
            .map_err(|_| LabelError::BadCsv(format!("line {}: bad normalized", n + 2)))?;
        if !smoothed.is_finite() || !normalized.is_finite() {
            return Err(LabelError::BadCsv(format!("line {}: non-finite value", n + 2)));
        }
        series.raw_counts.push(raw);
        series.smoothed.push(smoothed);
        series.normalized.push(normalized);
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(v: &str, s: f64, e: f64) -> PlaybackRecord {
        PlaybackRecord {
            viewer_id: v.into(),
            lesson_id: "L1".into(),
            start_s: s,
            end_s: e,
        }
    }

    fn grid() -> SegmentGrid {
        SegmentGrid::standard("L1")
    }

    #[test]
    fn exact_two_segment_coverage() {
        let counts =
            count_segment_accesses(&[rec("a", 0.0, 120.0)], &grid(), 1.0, CountMode::Events)
                .unwrap();
        assert_eq!(counts[0], 1);
        assert_eq!(counts[1], 1);
        assert!(counts[2..].iter().all(|&c| c == 0));
    }

    #[test]
    fn events_count_per_record_not_per_viewer() {
        let recs = vec![rec("a", 0.0, 60.0), rec("a", 30.0, 90.0)];
        let counts = count_segment_accesses(&recs, &grid(), 1.0, CountMode::Events).unwrap();
        assert_eq!(counts[0], 2);
        assert_eq!(counts[1], 1);

        let distinct =
            count_segment_accesses(&recs, &grid(), 1.0, CountMode::DistinctViewers).unwrap();
        assert_eq!(distinct[0], 1);
        assert_eq!(distinct[1], 1);
    }

    #[test]
    fn sub_second_overlap_is_ignored() {
        let counts =
            count_segment_accesses(&[rec("a", 59.5, 125.0)], &grid(), 1.0, CountMode::Events)
                .unwrap();
        assert_eq!(counts[0], 0, "0.5 s overlap is below the 1 s threshold");
        assert_eq!(counts[1], 1);
        assert_eq!(counts[2], 1);
    }

    #[test]
    fn lesson_mismatch_is_an_error() {
        let mut r = rec("a", 0.0, 120.0);
        r.lesson_id = "L2".into();
        let err = count_segment_accesses(&[r], &grid(), 1.0, CountMode::Events).unwrap_err();
        assert!(matches!(err, LabelError::LessonMismatch { .. }));
    }

    #[test]
    fn constant_counts_normalize_to_one() {
        // Every viewer watches the full archive => every segment equal.
        let recs: Vec<PlaybackRecord> = (0..4).map(|i| rec(&format!("v{i}"), 0.0, 5700.0)).collect();
        let labels = generate_labels(&recs, &grid(), 1.0, CountMode::Events).unwrap();
        assert!(labels.normalized.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn impulse_smoothing_peaks_at_edge() {
        // Single access to segment 2 only.
        let recs = vec![rec("a", 120.0, 180.0)];
        let labels = generate_labels(&recs, &grid(), 1.0, CountMode::Events).unwrap();
        assert_eq!(labels.raw_counts[2], 1);
        assert!((labels.smoothed[2] - 0.2).abs() < 1e-12); // window of 5
        assert!((labels.smoothed[0] - 1.0 / 3.0).abs() < 1e-12); // edge window of 3
        // The shrinking edge makes index 0 the normalized peak.
        assert!((labels.normalized[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn label_shape_is_always_95() {
        let labels = generate_labels(&[], &grid(), 1.0, CountMode::Events).unwrap();
        assert_eq!(labels.raw_counts.len(), SEGMENTS_PER_LESSON);
        assert_eq!(labels.normalized.len(), SEGMENTS_PER_LESSON);
        assert!(labels.is_degenerate());
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![rec("a", 0.0, 400.0), rec("b", 300.0, 800.0)];
        let labels = generate_labels(&recs, &grid(), 1.0, CountMode::Events).unwrap();
        let csv = label_csv(&labels);
        let back = parse_label_csv("L1", csv.as_bytes()).unwrap();
        assert_eq!(labels, back);
    }

    #[test]
    fn csv_rejects_gaps() {
        let bad = "segment_index,raw_count,smoothed,normalized\n0,1,1,1\n2,1,1,1\n";
        assert!(parse_label_csv("L1", bad.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn event_conservation(starts in proptest::collection::vec(0.0f64..5500.0, 0..25)) {
            let recs: Vec<PlaybackRecord> = starts
                .iter()
                .enumerate()
                .map(|(i, s)| rec(&format!("v{}", i % 3), *s, s + 130.0))
                .collect();
            let counts = count_segment_accesses(&recs, &grid(), 1.0, CountMode::Events).unwrap();
            let total: u64 = counts.iter().map(|&c| c as u64).sum();
            // Independent per-record recount.
            let mut expect = 0u64;
            for r in &recs {
                for seg in 0..SEGMENTS_PER_LESSON {
                    let s = seg as f64 * 60.0;
                    let overlap = r.end_s.min(s + 60.0) - r.start_s.max(s);
                    if overlap >= 1.0 {
                        expect += 1;
                    }
                }
            }
            prop_assert_eq!(total, expect);
        }

        #[test]
        fn normalization_is_scale_invariant(starts in proptest::collection::vec(0.0f64..5000.0, 1..10), k in 2usize..5) {
            let base: Vec<PlaybackRecord> = starts
                .iter()
                .enumerate()
                .map(|(i, s)| rec(&format!("v{i}"), *s, s + 200.0))
                .collect();
            // k copies of every record scales every raw count by k.
            let mut scaled = Vec::new();
            for _ in 0..k {
                scaled.extend(base.clone());
            }
            let l1 = generate_labels(&base, &grid(), 1.0, CountMode::Events).unwrap();
            let l2 = generate_labels(&scaled, &grid(), 1.0, CountMode::Events).unwrap();
            for (a, b) in l1.normalized.iter().zip(&l2.normalized) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

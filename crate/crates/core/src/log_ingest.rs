//! Playback access-log parsing and validity filtering.
//!
//! Raw logs arrive as CSV with one row per contiguous playback interval.
//! Rows that violate the interval invariants are rejected individually and
//! surface in a rejection summary; filtering then drops records shorter
//! than one minute and viewers whose per-lesson total is five minutes or
//! less.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use thiserror::Error;

/// Seconds below which an individual viewing record is discarded.
pub const MIN_RECORD_S: f64 = 60.0;
/// A viewer must exceed this many seconds of valid viewing per lesson.
pub const MIN_TOTAL_S: f64 = 300.0;
/// Archives are standardized to 95 minutes; records are clipped to this.
pub const ARCHIVE_LEN_S: f64 = 5700.0;

pub const LOG_HEADER: &str = "viewer_id,lesson_id,start_s,end_s";

/// One viewer's contiguous playback interval within one lesson's archive.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaybackRecord {
    pub viewer_id: String,
    pub lesson_id: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl PlaybackRecord {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LogError {
    #[error("log is empty: expected header `{LOG_HEADER}`")]
    Empty,
    #[error("bad header: expected `{LOG_HEADER}`, found `{found}`")]
    BadHeader { found: String },
    #[error("log is not valid UTF-8 at byte {0}")]
    InvalidUtf8(usize),
    #[error("io error: {0}")]
    Io(String),
}

/// Why a data row was rejected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    /// Wrong column count or a non-numeric/non-finite offset.
    MalformedRow(String),
    /// end_s <= start_s.
    InvalidInterval,
    /// start_s < 0.
    NegativeStart,
}

impl RejectReason {
    fn label(&self) -> &'static str {
        match self {
            RejectReason::MalformedRow(_) => "malformed_row",
            RejectReason::InvalidInterval => "invalid_interval",
            RejectReason::NegativeStart => "negative_start",
        }
    }
}

/// A rejected row with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowReject {
    pub line: usize,
    pub reason: RejectReason,
    pub content: String,
}

/// Result of parsing: accepted records in file order plus per-row rejects.
#[derive(Debug, Default, Clone)]
pub struct ParseOutcome {
    pub records: Vec<PlaybackRecord>,
    pub rejects: Vec<RowReject>,
}

impl ParseOutcome {
    /// Structured text report of rejected rows, grouped counts first.
    pub fn rejection_summary(&self) -> String {
        let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
        for r in &self.rejects {
            *counts.entry(r.reason.label()).or_default() += 1;
        }
        let mut out = String::new();
        let _ = writeln!(
            out,
            "accepted_records: {}\nrejected_rows: {}",
            self.records.len(),
            self.rejects.len()
        );
        for (label, n) in &counts {
            let _ = writeln!(out, "  {label}: {n}");
        }
        for r in &self.rejects {
            let _ = writeln!(out, "line {}: {} `{}`", r.line, r.reason.label(), r.content);
        }
        out
    }
}

/// Parse a playback log. Accepted rows become records in file order; rows
/// violating the schema or the interval invariants are collected as
/// rejects with their line numbers rather than aborting the parse.
pub fn parse_playback_log<R: BufRead>(mut source: R) -> Result<ParseOutcome, LogError> {
    let mut buf = Vec::new();
    source
        .read_to_end(&mut buf)
        .map_err(|e| LogError::Io(e.to_string()))?;
    parse_playback_log_bytes(&buf)
}

/// Parse a playback log from raw bytes (the whole file, header included).
pub fn parse_playback_log_bytes(bytes: &[u8]) -> Result<ParseOutcome, LogError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| LogError::InvalidUtf8(e.valid_up_to()))?;
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() => continue,
            Some((_, l)) => break l,
            None => return Err(LogError::Empty),
        }
    };
    if header.trim_end_matches('\r') != LOG_HEADER {
        return Err(LogError::BadHeader {
            found: header.to_string(),
        });
    }

    let mut outcome = ParseOutcome::default();
    for (idx, raw) in lines {
        let line_no = idx + 1; // 1-based, counting the header line
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        match parse_row(line) {
            Ok(rec) => outcome.records.push(rec),
            Err(reason) => outcome.rejects.push(RowReject {
                line: line_no,
                reason,
                content: line.to_string(),
            }),
        }
    }
    Ok(outcome)
}

pub fn parse_playback_log_path(path: &Path) -> Result<ParseOutcome, LogError> {
    let bytes = std::fs::read(path).map_err(|e| LogError::Io(format!("{}: {e}", path.display())))?;
    parse_playback_log_bytes(&bytes)
}

fn parse_row(line: &str) -> Result<PlaybackRecord, RejectReason> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 4 {
        return Err(RejectReason::MalformedRow(format!(
            "expected 4 columns, found {}",
            fields.len()
        )));
    }
    if fields[0].is_empty() || fields[1].is_empty() {
        return Err(RejectReason::MalformedRow("empty id field".into()));
    }
    let start_s: f64 = fields[2]
        .parse()
        .map_err(|_| RejectReason::MalformedRow(format!("bad start_s `{}`", fields[2])))?;
    let end_s: f64 = fields[3]
        .parse()
        .map_err(|_| RejectReason::MalformedRow(format!("bad end_s `{}`", fields[3])))?;
    if !start_s.is_finite() || !end_s.is_finite() {
        return Err(RejectReason::MalformedRow("non-finite offset".into()));
    }
    if start_s < 0.0 {
        return Err(RejectReason::NegativeStart);
    }
    if end_s <= start_s {
        return Err(RejectReason::InvalidInterval);
    }
    Ok(PlaybackRecord {
        viewer_id: fields[0].to_string(),
        lesson_id: fields[1].to_string(),
        start_s,
        end_s,
    })
}

/// Keep records whose duration is at least `min_record_s` (the one-minute
/// mark itself is kept; "shorter than one minute" is strict).
pub fn filter_valid_records(records: &[PlaybackRecord], min_record_s: f64) -> Vec<PlaybackRecord> {
    records
        .iter()
        .filter(|r| r.duration_s() >= min_record_s)
        .cloned()
        .collect()
}

/// Total valid viewing seconds per (viewer, lesson) pair.
pub fn viewer_totals(records: &[PlaybackRecord]) -> BTreeMap<(String, String), f64> {
    let mut totals = BTreeMap::new();
    for r in records {
        *totals
            .entry((r.viewer_id.clone(), r.lesson_id.clone()))
            .or_insert(0.0) += r.duration_s();
    }
    totals
}

/// (viewer, lesson) pairs whose summed valid duration strictly exceeds
/// `min_total_s`. Expects records that already passed
/// [`filter_valid_records`].
pub fn select_valid_viewers(
    records: &[PlaybackRecord],
    min_total_s: f64,
) -> BTreeSet<(String, String)> {
    viewer_totals(records)
        .into_iter()
        .filter(|(_, total)| *total > min_total_s)
        .map(|(pair, _)| pair)
        .collect()
}

/// Clip records to the standardized archive span [0, max_s]; records left
/// empty by clipping are dropped.
pub fn clip_to_archive(records: &[PlaybackRecord], max_s: f64) -> Vec<PlaybackRecord> {
    records
        .iter()
        .filter_map(|r| {
            let start = r.start_s.max(0.0);
            let end = r.end_s.min(max_s);
            (end > start).then(|| PlaybackRecord {
                viewer_id: r.viewer_id.clone(),
                lesson_id: r.lesson_id.clone(),
                start_s: start,
                end_s: end,
            })
        })
        .collect()
}

/// One row of the per-lesson viewing statistics table.
#[derive(Debug, Clone, PartialEq)]
pub struct LessonStat {
    pub lesson_id: String,
    pub valid_viewers: usize,
    pub total_viewing_min: f64,
}

/// Per-lesson valid-viewer counts and total valid viewing time, from
/// records that already passed the record-length filter.
pub fn lesson_stats(filtered: &[PlaybackRecord], min_total_s: f64) -> Vec<LessonStat> {
    let totals = viewer_totals(filtered);
    let mut per_lesson: BTreeMap<String, (usize, f64)> = BTreeMap::new();
    for ((_, lesson), total) in &totals {
        if *total > min_total_s {
            let e = per_lesson.entry(lesson.clone()).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += total;
        }
    }
    per_lesson
        .into_iter()
        .map(|(lesson_id, (viewers, secs))| LessonStat {
            lesson_id,
            valid_viewers: viewers,
            total_viewing_min: secs / 60.0,
        })
        .collect()
}

/// Render the statistics table as CSV with a trailing Average row
/// (averages printed with two decimals).
pub fn stats_report(stats: &[LessonStat]) -> String {
    let mut out = String::from("lesson,valid_viewers,total_viewing_min\n");
    for s in stats {
        let _ = writeln!(
            out,
            "{},{},{}",
            s.lesson_id,
            s.valid_viewers,
            format_minutes(s.total_viewing_min)
        );
    }
    if !stats.is_empty() {
        let n = stats.len() as f64;
        let avg_viewers = stats.iter().map(|s| s.valid_viewers as f64).sum::<f64>() / n;
        let avg_min = stats.iter().map(|s| s.total_viewing_min).sum::<f64>() / n;
        let _ = writeln!(out, "Average,{avg_viewers:.2},{avg_min:.2}");
    }
    out
}

fn format_minutes(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

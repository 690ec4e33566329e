//! Deterministic synthetic datasets: viewing logs that reproduce the
//! published per-lesson statistics, textured frames for flow testing, and
//! learnable-by-construction fused datasets for training sanity checks.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::action::Frame;
use crate::fuse::{FeatureMap, FusedSample, Modality};
use crate::labeling;

/// Per-lesson (valid viewers, total viewing minutes) the log fixture is
/// built to reproduce.
pub const TABLE1_LESSONS: [(&str, usize, u64); 7] = [
    ("Lesson-1", 10, 532),
    ("Lesson-2", 6, 605),
    ("Lesson-3", 11, 647),
    ("Lesson-4", 8, 408),
    ("Lesson-5", 8, 607),
    ("Lesson-6", 9, 643),
    ("Lesson-7", 9, 939),
];

const MAX_RECORD_S: u64 = 3000;

/// Build the playback-log CSV whose valid viewers and totals match
/// [`TABLE1_LESSONS`] exactly. Includes decoy rows that the filters must
/// remove: sub-minute records, viewers at exactly the five-minute boundary,
/// and one invalid interval per lesson.
pub fn table1_log_csv(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from(crate::log_ingest::LOG_HEADER);
    out.push('\n');
    for (lesson, viewers, total_min) in TABLE1_LESSONS {
        let total_s = total_min * 60;
        let base = total_s / viewers as u64;
        let rem = (total_s % viewers as u64) as usize;
        for v in 0..viewers {
            let viewer_total = base + u64::from(v < rem);
            let mut remaining = viewer_total;
            while remaining > 0 {
                let piece = if remaining <= MAX_RECORD_S {
                    remaining
                } else if remaining - MAX_RECORD_S < 60 {
                    remaining - 60
                } else {
                    MAX_RECORD_S
                };
                let start = rng.gen_range(0..=(5700 - piece));
                let _ = writeln!(out, "viewer-{v:02},{lesson},{start},{}", start + piece);
                remaining -= piece;
            }
        }
        // Decoys: all must fall to the validity filters or the parser.
        let _ = writeln!(out, "noise-short,{lesson},0,30");
        let _ = writeln!(out, "noise-boundary,{lesson},0,150");
        let _ = writeln!(out, "noise-boundary,{lesson},200,350");
        let _ = writeln!(out, "noise-inverted,{lesson},500,400");
    }
    out
}

/// Smooth separable texture in [-1, 1], wavelengths 14-40 px, evaluated at
/// coordinates shifted by (`shift_x`, `shift_y`). The same seed with a
/// different shift renders the same pattern translated, so optical-flow
/// ground truth is exact even for fractional shifts.
fn separable_texture(w: usize, h: usize, shift_x: f64, shift_y: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = std::f64::consts::TAU;
    let mut comps = Vec::new();
    let mut amp_total = 0.0;
    for _ in 0..3 {
        let amp: f64 = rng.gen_range(0.5..1.0);
        let fx: f64 = rng.gen_range(1.0 / 40.0..1.0 / 14.0);
        let fy: f64 = rng.gen_range(1.0 / 40.0..1.0 / 14.0);
        let px: f64 = rng.gen_range(0.0..tau);
        let py: f64 = rng.gen_range(0.0..tau);
        amp_total += amp;
        comps.push((amp, fx, fy, px, py));
    }
    let mut out = vec![0.0f64; w * h];
    for &(amp, fx, fy, px, py) in &comps {
        let col: Vec<f64> = (0..w)
            .map(|x| (tau * fx * (x as f64 - shift_x) + px).sin())
            .collect();
        let row: Vec<f64> = (0..h)
            .map(|y| (tau * fy * (y as f64 - shift_y) + py).sin())
            .collect();
        for y in 0..h {
            let r = amp * row[y];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, c) in dst.iter_mut().zip(&col) {
                *d += r * c;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= amp_total;
    }
    out
}

/// Textured synthetic frame with an exactly-known translation.
pub fn textured_frame(w: usize, h: usize, shift_x: f64, shift_y: f64, seed: u64) -> Frame {
    let tex = separable_texture(w, h, shift_x, shift_y, seed);
    Frame {
        w,
        h,
        data: tex
            .iter()
            .map(|&v| (127.5 + 110.0 * v).round().clamp(0.0, 255.0) as u8)
            .collect(),
        timestamp_s: 0.0,
    }
}

fn textured_map_with_mean(
    modality: Modality,
    lesson_id: &str,
    segment: usize,
    h: usize,
    w: usize,
    target_mean: f64,
    seed: u64,
) -> FeatureMap {
    let tex = separable_texture(w, h, 0.0, 0.0, seed);
    let base = target_mean * 255.0;
    let amp = 0.6 * base.min(255.0 - base);
    let data: Vec<u8> = tex
        .iter()
        .map(|&v| (base + amp * v).round().clamp(0.0, 255.0) as u8)
        .collect();
    FeatureMap { modality, lesson_id: lesson_id.to_string(), segment_index: segment, h, w, data }
}

fn map_mean(map: &FeatureMap) -> f64 {
    map.data.iter().map(|&v| v as u64).sum::<u64>() as f64 / (map.data.len() as f64 * 255.0)
}

/// One synthetic lesson whose fused samples carry labels equal to the mean
/// of the R (action) channel.
pub struct OracleLesson {
    pub lesson_id: String,
    pub samples: Vec<FusedSample>,
}

/// The learnability fixture: 7 lessons x `segments` samples. The action
/// channel's mean follows a smooth per-lesson curve; slide and voice
/// channels carry independent distractor signals; the label of every sample
/// equals the actual mean of its action channel.
pub fn oracle_lessons(seed: u64, segments: usize, h: usize, w: usize) -> Vec<OracleLesson> {
    (0..7usize)
        .map(|li| {
            let lesson_id = format!("Lesson-{}", li + 1);
            let freq = 1.5 + 0.35 * li as f64;
            let phase = 1.1 * li as f64;
            let samples = (0..segments)
                .map(|seg| {
                    let pos = seg as f64 / segments as f64;
                    let designed =
                        (0.5 + 0.65 * (std::f64::consts::TAU * freq * pos + phase).sin())
                            .clamp(0.03, 0.97);
                    let tex_seed = seed
                        .wrapping_add(li as u64 * 1_000_003)
                        .wrapping_add(seg as u64 * 7_919);
                    let action = textured_map_with_mean(
                        Modality::Action,
                        &lesson_id,
                        seg,
                        h,
                        w,
                        designed,
                        tex_seed,
                    );
                    // Distractors: slide is a constant plane on an unrelated
                    // curve, voice a texture on another.
                    let slide_level = (0.45 * (0.37 * seg as f64 + li as f64).sin() + 0.5) as f64;
                    let slide = FeatureMap {
                        modality: Modality::Slide,
                        lesson_id: lesson_id.clone(),
                        segment_index: seg,
                        h,
                        w,
                        data: vec![(slide_level * 255.0) as u8; h * w],
                    };
                    let voice_level =
                        0.5 + 0.4 * (std::f64::consts::TAU * 2.3 * pos + 0.7 * li as f64).cos();
                    let voice = textured_map_with_mean(
                        Modality::Voice,
                        &lesson_id,
                        seg,
                        h,
                        w,
                        voice_level,
                        tex_seed ^ 0xABCD_EF01,
                    );
                    let label = map_mean(&action);
                    crate::fuse::fuse_feature_level(&action, &slide, &voice, label)
                        .expect("fixture maps share identity and shape")
                })
                .collect();
            OracleLesson { lesson_id, samples }
        })
        .collect()
}

/// Ten-sample overfit set (single synthetic lesson, labels spread over
/// [0.05, 0.95]).
pub fn tiny_samples(seed: u64, h: usize, w: usize) -> Vec<FusedSample> {
    (0..10usize)
        .map(|seg| {
            let designed = 0.05 + 0.9 * seg as f64 / 9.0;
            let action = textured_map_with_mean(
                Modality::Action,
                "TINY",
                seg,
                h,
                w,
                designed,
                seed.wrapping_add(seg as u64 * 31),
            );
            let slide = FeatureMap {
                modality: Modality::Slide,
                lesson_id: "TINY".into(),
                segment_index: seg,
                h,
                w,
                data: vec![(seg * 20) as u8; h * w],
            };
            let voice = textured_map_with_mean(
                Modality::Voice,
                "TINY",
                seg,
                h,
                w,
                0.5,
                seed.wrapping_add(1000 + seg as u64),
            );
            let label = map_mean(&action);
            crate::fuse::fuse_feature_level(&action, &slide, &voice, label)
                .expect("fixture maps share identity and shape")
        })
        .collect()
}

/// Write fused samples back out as the per-lesson stage artifacts the CLI
/// pipeline consumes: modality PNGs plus a label CSV whose `normalized`
/// column carries the sample labels.
pub fn write_lesson_artifacts(
    out_root: &Path,
    lesson_id: &str,
    samples: &[FusedSample],
) -> std::io::Result<()> {
    let lesson_dir = out_root.join(lesson_id);
    let label_dir = lesson_dir.join("labels");
    std::fs::create_dir_all(&label_dir)?;
    for modality in [Modality::Action, Modality::Slide, Modality::Voice] {
        std::fs::create_dir_all(lesson_dir.join("features").join(modality.prefix()))?;
    }

    let mut label_rows = String::from("segment_index,raw_count,smoothed,normalized\n");
    for s in samples {
        for (ci, modality) in [Modality::Action, Modality::Slide, Modality::Voice]
            .into_iter()
            .enumerate()
        {
            let dir = lesson_dir.join("features").join(modality.prefix());
            let map = FeatureMap {
                modality,
                lesson_id: lesson_id.to_string(),
                segment_index: s.segment_index,
                h: s.h,
                w: s.w,
                data: s.channels[ci].clone(),
            };
            map.save_png(&dir)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
        }
        let _ = writeln!(label_rows, "{},0,{},{}", s.segment_index, s.label, s.label);
    }
    std::fs::write(label_dir.join(format!("labels_{lesson_id}.csv")), label_rows)
}

/// Raw-input demo lesson for exercising the feature extractors end to end:
/// a frame directory with manifest, pose JSONL, a mono 44.1 kHz WAV, and a
/// slide event CSV. Sized for tests (low fps, small frames).
pub fn write_demo_raw_lesson(
    dir: &Path,
    lesson_id: &str,
    segment_count: usize,
    seed: u64,
) -> std::io::Result<()> {
    use crate::action;

    let fps = 0.5; // one frame every 2 s keeps the demo tiny
    let frames_per_seg = (fps * 60.0) as usize;
    let count = frames_per_seg * segment_count;
    let frames_dir = dir.join("frames").join(lesson_id);
    std::fs::create_dir_all(&frames_dir)?;

    let manifest = action::FrameManifest {
        fps,
        pattern: "frame_{index:05}.png".into(),
        count,
    };
    std::fs::write(
        frames_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (fw, fh) = (96usize, 64usize);
    let mut poses = Vec::new();
    for idx in 0..count {
        // The "instructor" drifts horizontally a fraction of a pixel per frame.
        let drift = idx as f64 * 0.8;
        let frame = textured_frame(fw, fh, drift, 0.0, seed ^ 0x51DE);
        let name = manifest.frame_name(idx).expect("pattern is valid");
        crate::imaging::save_gray_png(&frames_dir.join(name), fw, fh, &frame.data)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
        if idx % frames_per_seg == 0 {
            let t = idx as f64 / fps;
            let points: Vec<(f64, f64, f64)> = (0..6)
                .map(|_| {
                    (
                        rng.gen_range(20.0..(fw as f64 - 20.0)),
                        rng.gen_range(16.0..(fh as f64 - 16.0)),
                        rng.gen_range(0.5..1.0),
                    )
                })
                .collect();
            poses.push(action::PoseKeypoints { t, points });
        }
    }
    let pose_dir = dir.join("pose");
    std::fs::create_dir_all(&pose_dir)?;
    std::fs::write(pose_dir.join(format!("{lesson_id}.jsonl")), action::pose_jsonl(&poses))?;

    // Audio: a tone sweeping per segment, mono 16-bit PCM at 44.1 kHz.
    let fs = crate::audio::SAMPLE_RATE;
    let n = segment_count * 60 * fs as usize;
    let samples: Vec<f32> = (0..n)
        .map(|i| {
            let seg = i / (60 * fs as usize);
            let freq = 300.0 + 150.0 * seg as f64;
            (0.5 * (std::f64::consts::TAU * freq * i as f64 / fs as f64).sin()) as f32
        })
        .collect();
    let audio_dir = dir.join("audio");
    std::fs::create_dir_all(&audio_dir)?;
    std::fs::write(
        audio_dir.join(format!("{lesson_id}.wav")),
        crate::audio::wav::encode_wav_16(fs, &samples),
    )?;

    // Slides: one page advance per segment.
    let slides_dir = dir.join("slides");
    std::fs::create_dir_all(&slides_dir)?;
    let events: Vec<crate::slides::SlideEvent> = (0..segment_count)
        .map(|s| crate::slides::SlideEvent {
            timestamp_s: s as f64 * 60.0 + 5.0,
            page: s as u32 + 1,
        })
        .collect();
    std::fs::write(
        slides_dir.join(format!("{lesson_id}.csv")),
        crate::slides::slide_events_csv(&events),
    )?;
    Ok(())
}

/// Expected label series for the table1 fixture, computed through the
/// production pipeline (used by the label stage tests and CLI).
pub fn table1_expected_segments() -> usize {
    TABLE1_LESSONS.len() * labeling::SEGMENTS_PER_LESSON
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::log_ingest;
    use std::collections::BTreeMap;

    #[test]
    fn table1_fixture_matches_published_stats() {
        let csv = table1_log_csv(42);
        let parsed = log_ingest::parse_playback_log_bytes(csv.as_bytes()).unwrap();
        // One inverted-interval decoy per lesson is rejected at parse time.
        assert_eq!(parsed.rejects.len(), 7);

        // Hand summation, independent of the production aggregation: group
        // records by (viewer, lesson), drop sub-minute rows, total, then
        // keep viewers above the five-minute line.
        let mut totals: BTreeMap<(String, String), f64> = BTreeMap::new();
        for r in &parsed.records {
            if r.end_s - r.start_s >= 60.0 {
                *totals.entry((r.viewer_id.clone(), r.lesson_id.clone())).or_default() +=
                    r.end_s - r.start_s;
            }
        }
        let mut by_lesson: BTreeMap<String, (usize, f64)> = BTreeMap::new();
        for ((_, lesson), total) in &totals {
            if *total > 300.0 {
                let e = by_lesson.entry(lesson.clone()).or_default();
                e.0 += 1;
                e.1 += total;
            }
        }
        for (lesson, viewers, minutes) in TABLE1_LESSONS {
            let (v, secs) = by_lesson[lesson];
            assert_eq!(v, viewers, "{lesson} viewer count");
            assert!(
                (secs / 60.0 - minutes as f64).abs() < 1e-9,
                "{lesson} minutes: {} vs {minutes}",
                secs / 60.0
            );
        }
    }

    #[test]
    fn table1_fixture_is_deterministic() {
        assert_eq!(table1_log_csv(42), table1_log_csv(42));
        assert_ne!(table1_log_csv(42), table1_log_csv(43));
    }

    #[test]
    fn records_stay_inside_archive() {
        let csv = table1_log_csv(42);
        let parsed = log_ingest::parse_playback_log_bytes(csv.as_bytes()).unwrap();
        for r in &parsed.records {
            assert!(r.start_s >= 0.0 && r.end_s <= 5700.0);
        }
    }

    #[test]
    fn textured_frames_shift_exactly() {
        let a = textured_frame(32, 32, 0.0, 0.0, 5);
        let b = textured_frame(32, 32, 3.0, 2.0, 5);
        // Integer shift: interior pixels of b equal a shifted by (3, 2).
        for y in 2..30 {
            for x in 3..32 {
                assert_eq!(b.data[y * 32 + x], a.data[(y - 2) * 32 + (x - 3)]);
            }
        }
    }

    #[test]
    fn oracle_labels_equal_action_channel_mean() {
        let lessons = oracle_lessons(42, 8, 24, 36);
        assert_eq!(lessons.len(), 7);
        for lesson in &lessons {
            assert_eq!(lesson.samples.len(), 8);
            for s in &lesson.samples {
                let mean = s.channels[0].iter().map(|&v| v as f64 / 255.0).sum::<f64>()
                    / s.channels[0].len() as f64;
                assert!((s.label - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oracle_labels_span_zones() {
        let lessons = oracle_lessons(42, 95, 16, 24);
        let all: Vec<f64> = lessons
            .iter()
            .flat_map(|l| l.samples.iter().map(|s| s.label))
            .collect();
        assert!(all.iter().any(|&v| v < 0.2), "some labels in the low zone");
        assert!(all.iter().any(|&v| v > 0.5), "some labels in the high zone");
        assert!(all.iter().any(|&v| (0.2..=0.5).contains(&v)), "some labels medium");
    }

    #[test]
    fn tiny_fixture_has_ten_samples() {
        let samples = tiny_samples(42, 16, 24);
        assert_eq!(samples.len(), 10);
        assert!(samples[0].label < samples[9].label);
    }
}

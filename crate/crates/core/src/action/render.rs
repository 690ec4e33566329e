//! Render movement trajectories into a single-channel action map.
//!
//! Each tracked step is drawn as an anti-aliased line whose intensity
//! encodes the step's flow magnitude: 64 + min(191, round(magnitude * 16)),
//! so even static points stay visible at the floor of 64. Overlaps keep
//! the brighter value; background is zero.

use super::Track;
use crate::fuse::{FeatureMap, Modality};
use crate::imaging;

pub const INTENSITY_FLOOR: u8 = 64;
const INTENSITY_SPAN: f64 = 191.0;
const MAGNITUDE_GAIN: f64 = 16.0;

pub fn step_intensity(magnitude_px: f64) -> u8 {
    INTENSITY_FLOOR + (magnitude_px * MAGNITUDE_GAIN).round().min(INTENSITY_SPAN) as u8
}

/// Draw one segment's tracks, scaled from the source frame size to the
/// `h` x `w` map.
pub fn render_action_map(
    tracks: &[Track],
    src_w: usize,
    src_h: usize,
    lesson_id: &str,
    segment_index: usize,
    h: usize,
    w: usize,
) -> FeatureMap {
    let mut map = FeatureMap::zeros(Modality::Action, lesson_id, segment_index, h, w);
    let sx = w as f64 / src_w.max(1) as f64;
    let sy = h as f64 / src_h.max(1) as f64;

    for track in tracks {
        for pair in track.positions.windows(2) {
            let (_, x0, y0) = pair[0];
            let (_, x1, y1) = pair[1];
            let mag = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
            let peak = step_intensity(mag);
            imaging::line_aa(x0 * sx, y0 * sy, x1 * sx, y1 * sy, |px, py, cov| {
                if px >= 0 && py >= 0 && (px as usize) < w && (py as usize) < h {
                    let v = INTENSITY_FLOOR as f64 + cov * (peak - INTENSITY_FLOOR) as f64;
                    let v = v.round() as u8;
                    let slot = &mut map.data[py as usize * w + px as usize];
                    *slot = (*slot).max(v);
                }
            });
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::StepStatus;

    fn track(positions: Vec<(f64, f64, f64)>) -> Track {
        let statuses = vec![StepStatus::Tracked; positions.len()];
        Track { point_id: 0, positions, statuses }
    }

    #[test]
    fn no_tracks_all_zero() {
        let map = render_action_map(&[], 96, 64, "L1", 0, 320, 480);
        assert_eq!((map.h, map.w), (320, 480));
        assert!(map.data.iter().all(|&v| v == 0));
    }

    #[test]
    fn static_track_single_floor_pixel() {
        // Same-size source and map so coordinates pass through unscaled.
        let t = track(vec![(0.0, 10.0, 20.0), (1.0, 10.0, 20.0)]);
        let map = render_action_map(&[t], 480, 320, "L1", 0, 320, 480);
        let lit: Vec<(usize, u8)> = map
            .data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0)
            .map(|(i, &v)| (i, v))
            .collect();
        assert_eq!(lit.len(), 1);
        assert_eq!(lit[0].0, 20 * 480 + 10);
        assert_eq!(lit[0].1, 64);
    }

    #[test]
    fn ten_px_step_renders_224() {
        // Horizontal integer-aligned motion of 10 px per step.
        let t = track(vec![(0.0, 100.0, 50.0), (1.0, 110.0, 50.0)]);
        let map = render_action_map(&[t], 480, 320, "L1", 0, 320, 480);
        assert_eq!(step_intensity(10.0), 224);
        let peak = map.data.iter().cloned().max().unwrap();
        assert_eq!(peak, 224);
        // Full-coverage pixels along the line carry exactly 64 + 160.
        let count_224 = map.data.iter().filter(|&&v| v == 224).count();
        assert!(count_224 >= 10, "expected the line body at 224, got {count_224}");
    }

    #[test]
    fn magnitude_saturates_at_255() {
        assert_eq!(step_intensity(0.0), 64);
        assert_eq!(step_intensity(100.0), 255);
        assert_eq!(step_intensity(11.9375), 255);
    }

    #[test]
    fn intensities_are_zero_or_floor_and_above() {
        // Diagonal sub-pixel motion exercises fractional AA coverage.
        let t = track(vec![(0.0, 20.3, 30.7), (1.0, 27.9, 36.2), (2.0, 35.0, 41.1)]);
        let map = render_action_map(&[t], 96, 64, "L1", 0, 320, 480);
        for &v in &map.data {
            assert!(v == 0 || v >= 64, "value {v} violates the intensity contract");
        }
        assert!(map.data.iter().any(|&v| v >= 64));
    }
}

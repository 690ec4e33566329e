//! Report rendering: attention-zone heatmap strips and predicted-vs-truth
//! line plots, emitted as SVG for deterministic byte-stable output.

use std::fmt::Write as _;

use crate::eval::{discretize3, Zone};

pub const COLOR_LOW: &str = "#4575b4";
pub const COLOR_MEDIUM: &str = "#fee090";
pub const COLOR_HIGH: &str = "#d73027";

fn zone_color(zone: Zone) -> &'static str {
    match zone {
        Zone::Low => COLOR_LOW,
        Zone::Medium => COLOR_MEDIUM,
        Zone::High => COLOR_HIGH,
    }
}

/// One colored cell per segment: a 95-cell strip for a standard lesson.
pub fn zone_strip_svg(values: &[f64], hi: f64, lo: f64) -> String {
    let cell = 10usize;
    let height = 40usize;
    let width = values.len() * cell;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n"
    );
    for (i, zone) in discretize3(values, hi, lo).into_iter().enumerate() {
        let _ = writeln!(
            svg,
            "  <rect x=\"{}\" y=\"0\" width=\"{cell}\" height=\"{height}\" fill=\"{}\"/>",
            i * cell,
            zone_color(zone)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn polyline(series: &[f64], w: f64, h: f64, pad: f64, color: &str) -> String {
    let n = series.len().max(2) as f64;
    let points: Vec<String> = series
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let x = pad + i as f64 / (n - 1.0) * (w - 2.0 * pad);
            let y = h - pad - v.clamp(0.0, 1.0) * (h - 2.0 * pad);
            format!("{x:.2},{y:.2}")
        })
        .collect();
    format!(
        "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        points.join(" ")
    )
}

/// Predicted-vs-truth line plot over the segment axis; both series are
/// expected in [0, 1].
pub fn pred_truth_svg(pred: &[f64], truth: &[f64]) -> String {
    let (w, h, pad) = (760.0, 240.0, 20.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n"
    );
    let _ = writeln!(
        svg,
        "  <rect x=\"0\" y=\"0\" width=\"{w}\" height=\"{h}\" fill=\"white\" stroke=\"#cccccc\"/>"
    );
    // Zone boundary guides.
    for (level, label) in [(0.5, "0.5"), (0.2, "0.2")] {
        let y = h - pad - level * (h - 2.0 * pad);
        let _ = writeln!(
            svg,
            "  <line x1=\"{pad}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\" \
             stroke-dasharray=\"4 3\"/>\n  <text x=\"2\" y=\"{:.2}\" font-size=\"9\" \
             fill=\"#888888\">{label}</text>",
            w - pad,
            y + 3.0
        );
    }
    svg.push_str(&polyline(truth, w, h, pad, "#777777"));
    svg.push_str(&polyline(pred, w, h, pad, "#1f77b4"));
    let _ = writeln!(
        svg,
        "  <text x=\"{pad}\" y=\"12\" font-size=\"10\" fill=\"#1f77b4\">predicted</text>\n  \
         <text x=\"{:.2}\" y=\"12\" font-size=\"10\" fill=\"#777777\">truth</text>",
        pad + 60.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_colors_follow_zones() {
        let mut values = vec![0.1; 47];
        values.extend(vec![0.7; 48]);
        let svg = zone_strip_svg(&values, 0.5, 0.2);
        assert_eq!(svg.matches(COLOR_LOW).count(), 47);
        assert_eq!(svg.matches(COLOR_HIGH).count(), 48);
        assert_eq!(svg.matches(COLOR_MEDIUM).count(), 0);
        // Low cells come first.
        let first_low = svg.find(COLOR_LOW).unwrap();
        let first_high = svg.find(COLOR_HIGH).unwrap();
        assert!(first_low < first_high);
    }

    #[test]
    fn plot_contains_both_series() {
        let svg = pred_truth_svg(&[0.1, 0.5, 0.9], &[0.2, 0.4, 0.8]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("predicted"));
    }

    #[test]
    fn svg_output_is_deterministic() {
        let values = vec![0.3; 10];
        assert_eq!(zone_strip_svg(&values, 0.5, 0.2), zone_strip_svg(&values, 0.5, 0.2));
    }
}

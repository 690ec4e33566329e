//! Shared raster helpers: grayscale PNG IO, bilinear resizing, and
//! anti-aliased line plotting.

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image io: {0}")]
    Io(String),
    #[error("expected {expected} bytes for {w}x{h}, got {got}")]
    BadBuffer { expected: usize, got: usize, w: usize, h: usize },
}

pub fn save_gray_png(path: &Path, w: usize, h: usize, data: &[u8]) -> Result<(), ImageError> {
    if data.len() != w * h {
        return Err(ImageError::BadBuffer { expected: w * h, got: data.len(), w, h });
    }
    image::save_buffer(
        path,
        data,
        w as u32,
        h as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| ImageError::Io(format!("{}: {e}", path.display())))
}

/// Load a grayscale PNG; other color types are converted to luma.
pub fn load_gray_png(path: &Path) -> Result<(usize, usize, Vec<u8>), ImageError> {
    let img = image::open(path)
        .map_err(|e| ImageError::Io(format!("{}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((w, h, img.into_raw()))
}

/// Decode a grayscale PNG from memory (used by loaders and fuzz targets).
pub fn decode_gray_png(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), ImageError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImageError::Io(e.to_string()))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok((w, h, img.into_raw()))
}

/// Bilinear resize of a row-major matrix, corners aligned.
pub fn resize_bilinear(src: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    assert_eq!(src.len(), sh * sw, "source size mismatch");
    assert!(sh > 0 && sw > 0 && dh > 0 && dw > 0);
    let map = |j: usize, dn: usize, sn: usize| -> (usize, usize, f64) {
        if dn <= 1 || sn <= 1 {
            return (0, 0, 0.0);
        }
        let pos = j as f64 * (sn - 1) as f64 / (dn - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(sn - 1);
        (lo, hi, pos - lo as f64)
    };
    let mut out = Vec::with_capacity(dh * dw);
    for y in 0..dh {
        let (y0, y1, fy) = map(y, dh, sh);
        for x in 0..dw {
            let (x0, x1, fx) = map(x, dw, sw);
            let a = src[y0 * sw + x0];
            let b = src[y0 * sw + x1];
            let c = src[y1 * sw + x0];
            let d = src[y1 * sw + x1];
            let top = a + (b - a) * fx;
            let bot = c + (d - c) * fx;
            out.push(top + (bot - top) * fy);
        }
    }
    out
}

/// Xiaolin Wu anti-aliased line. Calls `plot(x, y, coverage)` with coverage
/// in (0, 1]; a zero-length segment plots a single full-coverage point.
pub fn line_aa(x0: f64, y0: f64, x1: f64, y1: f64, mut plot: impl FnMut(i64, i64, f64)) {
    let fpart = |v: f64| v - v.floor();
    let rfpart = |v: f64| 1.0 - fpart(v);

    if (x1 - x0).abs() < 1e-12 && (y1 - y0).abs() < 1e-12 {
        plot(x0.round() as i64, y0.round() as i64, 1.0);
        return;
    }

    let steep = (y1 - y0).abs() > (x1 - x0).abs();
    let (mut x0, mut y0, mut x1, mut y1) = if steep { (y0, x0, y1, x1) } else { (x0, y0, x1, y1) };
    if x0 > x1 {
        std::mem::swap(&mut x0, &mut x1);
        std::mem::swap(&mut y0, &mut y1);
    }
    let dx = x1 - x0;
    let dy = y1 - y0;
    let gradient = if dx == 0.0 { 1.0 } else { dy / dx };

    let mut put = |x: i64, y: i64, c: f64| {
        if c > 0.0 {
            if steep {
                plot(y, x, c.min(1.0));
            } else {
                plot(x, y, c.min(1.0));
            }
        }
    };

    // First endpoint.
    let xend = x0.round();
    let yend = y0 + gradient * (xend - x0);
    let xgap = rfpart(x0 + 0.5);
    let xpxl1 = xend as i64;
    let ypxl1 = yend.floor() as i64;
    put(xpxl1, ypxl1, rfpart(yend) * xgap);
    put(xpxl1, ypxl1 + 1, fpart(yend) * xgap);
    let mut intery = yend + gradient;

    // Second endpoint.
    let xend2 = x1.round();
    let yend2 = y1 + gradient * (xend2 - x1);
    let xgap2 = fpart(x1 + 0.5);
    let xpxl2 = xend2 as i64;
    let ypxl2 = yend2.floor() as i64;
    put(xpxl2, ypxl2, rfpart(yend2) * xgap2);
    put(xpxl2, ypxl2 + 1, fpart(yend2) * xgap2);

    for x in (xpxl1 + 1)..xpxl2 {
        put(x, intery.floor() as i64, rfpart(intery));
        put(x, intery.floor() as i64 + 1, fpart(intery));
        intery += gradient;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_identity() {
        let src = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(resize_bilinear(&src, 2, 2, 2, 2), src);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let src = vec![7.0; 12];
        let out = resize_bilinear(&src, 3, 4, 10, 20);
        assert!(out.iter().all(|&v| (v - 7.0).abs() < 1e-12));
        assert_eq!(out.len(), 200);
    }

    #[test]
    fn resize_preserves_corners() {
        let src = vec![0.0, 10.0, 20.0, 30.0];
        let out = resize_bilinear(&src, 2, 2, 5, 5);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[4], 10.0);
        assert_eq!(out[20], 20.0);
        assert_eq!(out[24], 30.0);
    }

    #[test]
    fn horizontal_aa_line_has_full_coverage() {
        let mut hits = Vec::new();
        line_aa(1.0, 2.0, 5.0, 2.0, |x, y, c| hits.push((x, y, c)));
        // Integer-aligned horizontal line: full coverage on row 2.
        let full: Vec<_> = hits.iter().filter(|(_, y, c)| *y == 2 && *c > 0.99).collect();
        assert_eq!(full.len(), 5);
    }

    #[test]
    fn point_plots_once() {
        let mut hits = Vec::new();
        line_aa(3.0, 3.0, 3.0, 3.0, |x, y, c| hits.push((x, y, c)));
        assert_eq!(hits, vec![(3, 3, 1.0)]);
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let data: Vec<u8> = (0..24).map(|i| (i * 10) as u8).collect();
        save_gray_png(&path, 6, 4, &data).unwrap();
        let (w, h, back) = load_gray_png(&path).unwrap();
        assert_eq!((w, h), (6, 4));
        assert_eq!(back, data);
    }
}

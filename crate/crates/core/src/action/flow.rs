//! Single-level iterative Lucas-Kanade optical flow.

use super::{Frame, StepStatus};

/// Tracker parameters. The 15x15 window and 10-iteration budget suit the
/// slow instructor motion seen at a ~5 Hz sampling stride.
#[derive(Debug, Clone, Copy)]
pub struct LkParams {
    pub window: usize,
    pub max_iters: usize,
    pub eps: f64,
    pub min_eig: f64,
}

impl Default for LkParams {
    fn default() -> Self {
        LkParams { window: 15, max_iters: 10, eps: 0.01, min_eig: 1e-4 }
    }
}

/// Flow estimate for one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flow {
    pub dx: f64,
    pub dy: f64,
    pub status: StepStatus,
}

struct Plane {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Plane {
    fn from_frame(f: &Frame) -> Self {
        Plane {
            w: f.w,
            h: f.h,
            data: f.data.iter().map(|&v| v as f64 / 255.0).collect(),
        }
    }

    /// Bilinear sample with edge clamping.
    fn sample(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.w - 1) as f64);
        let yc = y.clamp(0.0, (self.h - 1) as f64);
        let x0 = xc.floor() as usize;
        let y0 = yc.floor() as usize;
        let x1 = (x0 + 1).min(self.w - 1);
        let y1 = (y0 + 1).min(self.h - 1);
        let fx = xc - x0 as f64;
        let fy = yc - y0 as f64;
        let a = self.data[y0 * self.w + x0];
        let b = self.data[y0 * self.w + x1];
        let c = self.data[y1 * self.w + x0];
        let d = self.data[y1 * self.w + x1];
        let top = a + (b - a) * fx;
        let bot = c + (d - c) * fx;
        top + (bot - top) * fy
    }
}

/// Estimate per-point flow from `prev` to `next`.
///
/// For each point the 2x2 normal equations G d = b are built from the
/// previous frame's spatial gradients (central differences over the window)
/// and iterated on the temporal difference. Points whose structure matrix
/// is near-singular report `Degenerate`; points that drift out of the frame
/// report `Lost`.
pub fn lucas_kanade(
    prev: &Frame,
    next: &Frame,
    points: &[(f64, f64)],
    params: &LkParams,
) -> Vec<Flow> {
    assert_eq!((prev.w, prev.h), (next.w, next.h), "frame sizes must match");
    let p = Plane::from_frame(prev);
    let n = Plane::from_frame(next);
    let half = (params.window / 2) as i64;
    let margin = half as f64 + 1.0;

    points
        .iter()
        .map(|&(px0, py0)| {
            let in_bounds = |x: f64, y: f64| {
                x >= margin && y >= margin && x < p.w as f64 - margin && y < p.h as f64 - margin
            };
            if !in_bounds(px0, py0) {
                return Flow { dx: 0.0, dy: 0.0, status: StepStatus::Lost };
            }

            // Template gradients and structure matrix, fixed per point.
            let win = (params.window * params.window) as usize;
            let mut gx = vec![0.0f64; win];
            let mut gy = vec![0.0f64; win];
            let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
            let mut idx = 0;
            for oy in -half..=half {
                for ox in -half..=half {
                    let x = px0 + ox as f64;
                    let y = py0 + oy as f64;
                    let dx = 0.5 * (p.sample(x + 1.0, y) - p.sample(x - 1.0, y));
                    let dy = 0.5 * (p.sample(x, y + 1.0) - p.sample(x, y - 1.0));
                    gx[idx] = dx;
                    gy[idx] = dy;
                    g11 += dx * dx;
                    g12 += dx * dy;
                    g22 += dy * dy;
                    idx += 1;
                }
            }
            let tr = g11 + g22;
            let lambda_min = 0.5 * (tr - ((g11 - g22) * (g11 - g22) + 4.0 * g12 * g12).sqrt());
            if lambda_min < params.min_eig {
                return Flow { dx: 0.0, dy: 0.0, status: StepStatus::Degenerate };
            }
            let det = g11 * g22 - g12 * g12;

            let (mut dx, mut dy) = (0.0f64, 0.0f64);
            for _ in 0..params.max_iters {
                if !in_bounds(px0 + dx, py0 + dy) {
                    return Flow { dx, dy, status: StepStatus::Lost };
                }
                let (mut b1, mut b2) = (0.0, 0.0);
                let mut idx = 0;
                for oy in -half..=half {
                    for ox in -half..=half {
                        let x = px0 + ox as f64;
                        let y = py0 + oy as f64;
                        let diff = p.sample(x, y) - n.sample(x + dx, y + dy);
                        b1 += gx[idx] * diff;
                        b2 += gy[idx] * diff;
                        idx += 1;
                    }
                }
                let step_x = (g22 * b1 - g12 * b2) / det;
                let step_y = (g11 * b2 - g12 * b1) / det;
                dx += step_x;
                dy += step_y;
                if step_x * step_x + step_y * step_y < params.eps * params.eps {
                    break;
                }
            }
            if !in_bounds(px0 + dx, py0 + dy) {
                return Flow { dx, dy, status: StepStatus::Lost };
            }
            Flow { dx, dy, status: StepStatus::Tracked }
        })
        .collect()
}

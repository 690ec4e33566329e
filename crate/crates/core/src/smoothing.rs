//! Post-hoc temporal smoothers for per-minute attention series.
//!
//! All three filters are applied after prediction (never inside training)
//! and preserve series length.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SmoothError {
    #[error("series is empty")]
    EmptySeries,
    #[error("series too short: need at least {needed} samples, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("window must be odd and >= 1, got {0}")]
    BadWindow(usize),
    #[error("polynomial order {order} must be smaller than window {window}")]
    BadOrder { order: usize, window: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

fn check_finite(series: &[f64]) -> Result<(), SmoothError> {
    match series.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(SmoothError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Centered moving average with the window shrinking to the available
/// neighbors at both edges, so output length always equals input length.
pub fn moving_average(series: &[f64], window: usize) -> Result<Vec<f64>, SmoothError> {
    if series.is_empty() {
        return Err(SmoothError::EmptySeries);
    }
    if window == 0 || window % 2 == 0 {
        return Err(SmoothError::BadWindow(window));
    }
    check_finite(series)?;
    let half = window / 2;
    let n = series.len();
    let out = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let slice = &series[lo..=hi];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect();
    Ok(out)
}

/// Savitzky-Golay filter: per-window least-squares polynomial fit, output
/// is the polynomial evaluated at the sample position.
///
/// Near the edges the first (or last) full window is fit once and evaluated
/// off-center, which keeps the filter exact on polynomials up to `order`
/// over the whole output, edges included.
pub fn savitzky_golay(
    series: &[f64],
    window: usize,
    order: usize,
) -> Result<Vec<f64>, SmoothError> {
    if series.is_empty() {
        return Err(SmoothError::EmptySeries);
    }
    if window == 0 || window % 2 == 0 {
        return Err(SmoothError::BadWindow(window));
    }
    if order >= window {
        return Err(SmoothError::BadOrder { order, window });
    }
    let n = series.len();
    if n < window {
        return Err(SmoothError::SeriesTooShort { needed: window, got: n });
    }
    check_finite(series)?;

    let half = (window / 2) as isize;
    // Weight rows for every evaluation offset t in [-half, half]; offset 0
    // serves all interior samples.
    let weights: Vec<Vec<f64>> = (-half..=half)
        .map(|t| sg_weights(window, order, t))
        .collect();
    let row = |t: isize| &weights[(t + half) as usize];

    let out = (0..n)
        .map(|i| {
            let i = i as isize;
            let last = n as isize - 1;
            let (start, t) = if i < half {
                (0, i - half) // fit the leading window, evaluate left of center
            } else if i > last - half {
                (n - window, i - (last - half))
            } else {
                ((i - half) as usize, 0)
            };
            series[start..start + window]
                .iter()
                .zip(row(t))
                .map(|(v, w)| v * w)
                .sum()
        })
        .collect();
    Ok(out)
}

/// Convolution weights that map a window of samples (x = -half..=half) to
/// the least-squares polynomial value at x = t. Row of  t_vec^T (A^T A)^-1 A^T.
fn sg_weights(window: usize, order: usize, t: isize) -> Vec<f64> {
    let half = (window / 2) as isize;
    let m = order + 1;
    // Normal matrix G[p][q] = sum_x x^(p+q) and basis rows.
    let mut g = vec![vec![0.0; m]; m];
    for x in -half..=half {
        let xf = x as f64;
        for p in 0..m {
            for q in 0..m {
                g[p][q] += xf.powi((p + q) as i32);
            }
        }
    }
    let ginv = invert(&g);
    // weight_j = sum_p t^p * (G^-1 A^T)[p][j], A[j][p] = x_j^p
    let tf = t as f64;
    (-half..=half)
        .map(|x| {
            let xf = x as f64;
            (0..m)
                .map(|p| {
                    let gp: f64 = (0..m).map(|q| ginv[p][q] * xf.powi(q as i32)).sum();
                    tf.powi(p as i32) * gp
                })
                .sum()
        })
        .collect()
}

/// Dense matrix inverse by Gauss-Jordan with partial pivoting. Only used on
/// the tiny (order+1)^2 normal matrices.
fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = aug[row][col];
                for j in 0..2 * n {
                    aug[row][j] -= f * aug[col][j];
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Scalar Kalman filter with identity transition and observation models.
///
/// The state is initialized to the first sample, then each sample runs one
/// predict/update cycle; the output is the posterior state sequence.
pub fn kalman_1d(series: &[f64], p0: f64, r: f64, q: f64) -> Result<Vec<f64>, SmoothError> {
    if series.is_empty() {
        return Err(SmoothError::EmptySeries);
    }
    check_finite(series)?;
    let mut x = series[0];
    let mut p = p0;
    let out = series
        .iter()
        .map(|&z| {
            p += q;
            let gain = p / (p + r);
            x += gain * (z - x);
            p *= 1.0 - gain;
            x
        })
        .collect();
    Ok(out)
}

/// Smoother selection as exposed on the command line (`--smooth`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoother {
    #[default]
    Ma,
    Sg,
    Kalman,
    None,
}

impl Smoother {
    /// Apply the smoother with its default parameters (moving average
    /// window 5; Savitzky-Golay 7/2; Kalman P0=500, R=0.05, Q=1e-4).
    pub fn apply(self, series: &[f64]) -> Result<Vec<f64>, SmoothError> {
        match self {
            Smoother::Ma => moving_average(series, 5),
            Smoother::Sg => savitzky_golay(series, 7, 2),
            Smoother::Kalman => kalman_1d(series, 500.0, 0.05, 1e-4),
            Smoother::None => Ok(series.to_vec()),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ma" => Some(Smoother::Ma),
            "sg" => Some(Smoother::Sg),
            "kalman" => Some(Smoother::Kalman),
            "none" => Some(Smoother::None),
            _ => None,
        }
    }
}

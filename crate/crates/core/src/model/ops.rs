//! Layer primitives: direct 3x3 same-padding convolution, 2x2 max pooling,
//! dense layers, and activations, each with forward and backward passes.
//!
//! Convolutions work row by row so the per-row output accumulators and the
//! three input rows in play stay cache-resident; the inner loops are plain
//! slice walks that the compiler vectorizes.

use super::scalar::Scalar;

#[inline]
fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::ZERO;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Accumulate one 3-tap row convolution: `out += w0*in<<1 + w1*in + w2*in>>1`.
#[inline]
fn row_taps<T: Scalar>(out: &mut [T], inp: &[T], w0: T, w1: T, w2: T) {
    let w = out.len();
    // kx = 0 reads the pixel to the left: out[1..] += w0 * inp[..w-1]
    axpy(&mut out[1..], w0, &inp[..w - 1]);
    axpy(out, w1, inp);
    axpy(&mut out[..w - 1], w2, &inp[1..]);
}

/// 3x3 same-padding convolution.
///
/// `inp` is `in_ch` planes of `h*w`, `weights` is `[out_ch][in_ch][3][3]`,
/// `out` is `out_ch` planes. When `bias` is `None` the output planes are
/// zero-initialized instead.
pub fn conv3x3_forward<T: Scalar>(
    inp: &[T],
    in_ch: usize,
    h: usize,
    w: usize,
    weights: &[T],
    bias: Option<&[T]>,
    out_ch: usize,
    out: &mut [T],
) {
    debug_assert_eq!(inp.len(), in_ch * h * w);
    debug_assert_eq!(weights.len(), out_ch * in_ch * 9);
    debug_assert_eq!(out.len(), out_ch * h * w);
    let plane = h * w;
    for oc in 0..out_ch {
        let fill = bias.map_or(T::ZERO, |b| b[oc]);
        for v in out[oc * plane..(oc + 1) * plane].iter_mut() {
            *v = fill;
        }
    }
    for y in 0..h {
        for ic in 0..in_ch {
            let base = ic * plane;
            let row_mid = &inp[base + y * w..base + y * w + w];
            let row_above = (y > 0).then(|| &inp[base + (y - 1) * w..base + (y - 1) * w + w]);
            let row_below =
                (y + 1 < h).then(|| &inp[base + (y + 1) * w..base + (y + 1) * w + w]);
            for oc in 0..out_ch {
                let wk = &weights[(oc * in_ch + ic) * 9..(oc * in_ch + ic) * 9 + 9];
                let out_row = &mut out[oc * plane + y * w..oc * plane + y * w + w];
                if let Some(r) = row_above {
                    row_taps(out_row, r, wk[0], wk[1], wk[2]);
                }
                row_taps(out_row, row_mid, wk[3], wk[4], wk[5]);
                if let Some(r) = row_below {
                    row_taps(out_row, r, wk[6], wk[7], wk[8]);
                }
            }
        }
    }
}

/// Gradient w.r.t. the convolution input: correlation of `dout` with the
/// 180-degree-rotated kernel, channels transposed.
pub fn conv3x3_backward_input<T: Scalar>(
    dout: &[T],
    out_ch: usize,
    h: usize,
    w: usize,
    weights: &[T],
    in_ch: usize,
    dinp: &mut [T],
) {
    let plane = h * w;
    for v in dinp.iter_mut() {
        *v = T::ZERO;
    }
    for y in 0..h {
        for oc in 0..out_ch {
            let base = oc * plane;
            let row_mid = &dout[base + y * w..base + y * w + w];
            let row_above = (y > 0).then(|| &dout[base + (y - 1) * w..base + (y - 1) * w + w]);
            let row_below =
                (y + 1 < h).then(|| &dout[base + (y + 1) * w..base + (y + 1) * w + w]);
            for ic in 0..in_ch {
                let wk = &weights[(oc * in_ch + ic) * 9..(oc * in_ch + ic) * 9 + 9];
                let din_row = &mut dinp[ic * plane + y * w..ic * plane + y * w + w];
                // dIn[y] += rot180 taps of dOut rows y-1, y, y+1.
                if let Some(r) = row_above {
                    row_taps(din_row, r, wk[8], wk[7], wk[6]);
                }
                row_taps(din_row, row_mid, wk[5], wk[4], wk[3]);
                if let Some(r) = row_below {
                    row_taps(din_row, r, wk[2], wk[1], wk[0]);
                }
            }
        }
    }
}

/// Accumulate weight and bias gradients for the 3x3 convolution.
pub fn conv3x3_backward_params<T: Scalar>(
    inp: &[T],
    in_ch: usize,
    h: usize,
    w: usize,
    dout: &[T],
    out_ch: usize,
    dweights: &mut [T],
    dbias: &mut [T],
) {
    let plane = h * w;
    for oc in 0..out_ch {
        let dout_plane = &dout[oc * plane..(oc + 1) * plane];
        dbias[oc] += dout_plane.iter().copied().sum();
    }
    for y in 0..h {
        for oc in 0..out_ch {
            let drow = &dout[oc * plane + y * w..oc * plane + y * w + w];
            for ic in 0..in_ch {
                let base = ic * plane;
                let dw = &mut dweights[(oc * in_ch + ic) * 9..(oc * in_ch + ic) * 9 + 9];
                for (ky, dwk) in dw.chunks_exact_mut(3).enumerate() {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let irow = &inp[base + iy as usize * w..base + iy as usize * w + w];
                    // dW[ky][0] pairs dOut[x] with In[x-1].
                    dwk[0] += dot(&drow[1..], &irow[..w - 1]);
                    dwk[1] += dot(drow, irow);
                    dwk[2] += dot(&drow[..w - 1], &irow[1..]);
                }
            }
        }
    }
}

/// ReLU into a separate buffer.
pub fn relu_forward<T: Scalar>(inp: &[T], out: &mut [T]) {
    for (o, &v) in out.iter_mut().zip(inp) {
        *o = v.maximum(T::ZERO);
    }
}

/// ReLU backward using the forward *output* as the mask (out > 0).
pub fn relu_backward_masked<T: Scalar>(dout: &[T], out: &[T], dinp: &mut [T]) {
    for ((d, &o), &g) in dinp.iter_mut().zip(out).zip(dout) {
        *d = if o > T::ZERO { g } else { T::ZERO };
    }
}

/// 2x2 max pooling with stride 2. `h` and `w` must be even. Records the
/// argmax input offset per output cell for the backward pass; ties resolve
/// to the earliest index.
pub fn maxpool2_forward<T: Scalar>(
    inp: &[T],
    ch: usize,
    h: usize,
    w: usize,
    out: &mut [T],
    argmax: &mut [u32],
) {
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let (oh, ow) = (h / 2, w / 2);
    let plane = h * w;
    let oplane = oh * ow;
    for c in 0..ch {
        for oy in 0..oh {
            for ox in 0..ow {
                let i0 = c * plane + (2 * oy) * w + 2 * ox;
                let candidates = [i0, i0 + 1, i0 + w, i0 + w + 1];
                let mut best = candidates[0];
                let mut best_v = inp[best];
                for &i in &candidates[1..] {
                    if inp[i] > best_v {
                        best_v = inp[i];
                        best = i;
                    }
                }
                out[c * oplane + oy * ow + ox] = best_v;
                argmax[c * oplane + oy * ow + ox] = best as u32;
            }
        }
    }
}

pub fn maxpool2_backward<T: Scalar>(dout: &[T], argmax: &[u32], dinp: &mut [T]) {
    for v in dinp.iter_mut() {
        *v = T::ZERO;
    }
    for (&g, &idx) in dout.iter().zip(argmax) {
        dinp[idx as usize] += g;
    }
}

/// Global average pool: one value per channel.
pub fn gap_forward<T: Scalar>(inp: &[T], ch: usize, plane: usize, out: &mut [T]) {
    let denom = T::from_f64(plane as f64);
    for c in 0..ch {
        let s: T = inp[c * plane..(c + 1) * plane].iter().copied().sum();
        out[c] = s / denom;
    }
}

pub fn gap_backward<T: Scalar>(dout: &[T], ch: usize, plane: usize, dinp: &mut [T]) {
    let denom = T::from_f64(plane as f64);
    for c in 0..ch {
        let g = dout[c] / denom;
        for v in dinp[c * plane..(c + 1) * plane].iter_mut() {
            *v = g;
        }
    }
}

/// Dense layer: `out = W inp + b`, `W` is `[out_n][in_n]` row-major.
pub fn dense_forward<T: Scalar>(inp: &[T], weights: &[T], bias: &[T], out: &mut [T]) {
    let in_n = inp.len();
    for (o, (wrow, &b)) in out.iter_mut().zip(weights.chunks_exact(in_n).zip(bias)) {
        *o = dot(wrow, inp) + b;
    }
}

pub fn dense_backward<T: Scalar>(
    inp: &[T],
    weights: &[T],
    dout: &[T],
    dweights: &mut [T],
    dbias: &mut [T],
    dinp: &mut [T],
) {
    let in_n = inp.len();
    for v in dinp.iter_mut() {
        *v = T::ZERO;
    }
    for ((&g, wrow), (dwrow, db)) in dout
        .iter()
        .zip(weights.chunks_exact(in_n))
        .zip(dweights.chunks_exact_mut(in_n).zip(dbias.iter_mut()))
    {
        *db += g;
        axpy(dwrow, g, inp);
        axpy(dinp, g, wrow);
    }
}

pub fn sigmoid<T: Scalar>(z: T) -> T {
    T::ONE / (T::ONE + (-z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_identity_kernel_passes_through() {
        let (h, w) = (4, 6);
        let inp: Vec<f64> = (0..h * w).map(|i| i as f64).collect();
        let mut weights = vec![0.0; 9];
        weights[4] = 1.0; // center tap
        let mut out = vec![0.0; h * w];
        conv3x3_forward(&inp, 1, h, w, &weights, Some(&[0.0]), 1, &mut out);
        assert_eq!(out, inp);
    }

    #[test]
    fn conv_matches_naive_reference() {
        // Naive triple-loop oracle on a small multi-channel case.
        let (in_ch, out_ch, h, w) = (3, 2, 5, 7);
        let mut state = 1234u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        let inp: Vec<f64> = (0..in_ch * h * w).map(|_| next()).collect();
        let weights: Vec<f64> = (0..out_ch * in_ch * 9).map(|_| next()).collect();
        let bias: Vec<f64> = (0..out_ch).map(|_| next()).collect();
        let mut out = vec![0.0; out_ch * h * w];
        conv3x3_forward(&inp, in_ch, h, w, &weights, Some(&bias), out_ch, &mut out);

        for oc in 0..out_ch {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = bias[oc];
                    for ic in 0..in_ch {
                        for ky in -1isize..=1 {
                            for kx in -1isize..=1 {
                                let (iy, ix) = (y + ky, x + kx);
                                if iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize {
                                    let wv = weights
                                        [(oc * in_ch + ic) * 9 + ((ky + 1) * 3 + kx + 1) as usize];
                                    acc += wv * inp[ic * h * w + iy as usize * w + ix as usize];
                                }
                            }
                        }
                    }
                    let got = out[oc * h * w + y as usize * w + x as usize];
                    assert!((got - acc).abs() < 1e-12, "oc {oc} y {y} x {x}");
                }
            }
        }
    }

    #[test]
    fn maxpool_picks_maximum_and_routes_gradient() {
        let inp = vec![1.0f64, 5.0, 2.0, 0.0, 3.0, 4.0, 7.0, 6.0];
        // 2x4 plane -> 1x2 output: windows [1,5,3,4] and [2,0,7,6].
        let mut out = vec![0.0; 2];
        let mut argmax = vec![0u32; 2];
        maxpool2_forward(&inp, 1, 2, 4, &mut out, &mut argmax);
        assert_eq!(out, vec![5.0, 7.0]);
        let mut dinp = vec![0.0; 8];
        maxpool2_backward(&[1.0, 2.0], &argmax, &mut dinp);
        assert_eq!(dinp[1], 1.0);
        assert_eq!(dinp[6], 2.0);
        assert_eq!(dinp.iter().sum::<f64>(), 3.0);
    }

    #[test]
    fn gap_is_mean() {
        let inp = vec![1.0f64, 2.0, 3.0, 4.0, 10.0, 20.0, 30.0, 40.0];
        let mut out = vec![0.0; 2];
        gap_forward(&inp, 2, 4, &mut out);
        assert_eq!(out, vec![2.5, 25.0]);
    }

    #[test]
    fn dense_forward_backward_shapes() {
        let inp = vec![1.0f64, 2.0];
        let weights = vec![0.5, -1.0, 2.0, 0.25];
        let bias = vec![0.1, -0.2];
        let mut out = vec![0.0; 2];
        dense_forward(&inp, &weights, &bias, &mut out);
        assert!((out[0] - (-1.4)).abs() < 1e-12);
        assert!((out[1] - 2.3).abs() < 1e-12);

        let mut dw = vec![0.0; 4];
        let mut db = vec![0.0; 2];
        let mut dinp = vec![0.0; 2];
        dense_backward(&inp, &weights, &[1.0, 1.0], &mut dw, &mut db, &mut dinp);
        assert_eq!(db, vec![1.0, 1.0]);
        assert_eq!(dw, vec![1.0, 2.0, 1.0, 2.0]);
        assert_eq!(dinp, vec![2.5, -0.75]);
    }
}

//! Iterative radix-2 FFT.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FftError {
    #[error("fft length {0} is not a power of two")]
    NonPowerOfTwoLength(usize),
}

/// Forward DFT, X[k] = sum_n x[n] e^(-2*pi*i*k*n/N), via iterative
/// Cooley-Tukey. Length must be a power of two.
pub fn fft_radix2(x: &[Complex64]) -> Result<Vec<Complex64>, FftError> {
    let n = x.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(FftError::NonPowerOfTwoLength(n));
    }
    let mut data = x.to_vec();
    let bits = n.trailing_zeros();

    // Bit-reversal permutation.
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) & (n - 1);
        if j > i {
            data.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let wlen = Complex64::new(ang.cos(), ang.sin());
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let even = data[start + k];
                let odd = data[start + k + len / 2] * w;
                data[start + k] = even + odd;
                data[start + k + len / 2] = even - odd;
                w *= wlen;
            }
        }
        len <<= 1;
    }
    Ok(data)
}

/// FFT of a real signal, returning only the non-negative-frequency bins
/// (length n/2 + 1).
pub fn rfft(x: &[f64]) -> Result<Vec<Complex64>, FftError> {
    let full = fft_radix2(
        &x.iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect::<Vec<_>>(),
    )?;
    Ok(full[..x.len() / 2 + 1].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                        v * Complex64::new(ang.cos(), ang.sin())
                    })
                    .sum()
            })
            .collect()
    }

    fn max_abs(xs: &[Complex64]) -> f64 {
        xs.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn impulse_gives_flat_spectrum() {
        let mut x = vec![Complex64::new(0.0, 0.0); 8];
        x[0] = Complex64::new(1.0, 0.0);
        let out = fft_radix2(&x).unwrap();
        for v in out {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_gives_dc_only() {
        let x = vec![Complex64::new(1.0, 0.0); 8];
        let out = fft_radix2(&x).unwrap();
        assert!((out[0] - Complex64::new(8.0, 0.0)).norm() < 1e-12);
        for v in &out[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let x = vec![Complex64::new(0.0, 0.0); 100];
        assert_eq!(fft_radix2(&x), Err(FftError::NonPowerOfTwoLength(100)));
        assert_eq!(fft_radix2(&[]), Err(FftError::NonPowerOfTwoLength(0)));
    }

    #[test]
    fn matches_naive_dft_length_1024() {
        // Deterministic xorshift noise.
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let x: Vec<Complex64> = (0..1024).map(|_| Complex64::new(next(), next())).collect();
        let ours = fft_radix2(&x).unwrap();
        let truth = naive_dft(&x);
        let scale = max_abs(&truth);
        for (a, b) in ours.iter().zip(&truth) {
            assert!((a - b).norm() / scale < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn parseval_holds(vals in proptest::collection::vec(-1.0f64..1.0, 256)) {
            let x: Vec<Complex64> = vals.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let spec = fft_radix2(&x).unwrap();
            let time_energy: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let freq_energy: f64 = spec.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
            let scale = time_energy.max(1e-12);
            prop_assert!((time_energy - freq_energy).abs() / scale < 1e-9);
        }

        #[test]
        fn small_sizes_match_naive(vals in proptest::collection::vec(-1.0f64..1.0, 16)) {
            let x: Vec<Complex64> = vals.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let ours = fft_radix2(&x).unwrap();
            let truth = naive_dft(&x);
            let scale = max_abs(&truth).max(1e-12);
            for (a, b) in ours.iter().zip(&truth) {
                prop_assert!((a - b).norm() / scale < 1e-9);
            }
        }
    }
}

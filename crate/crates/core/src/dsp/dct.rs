//! Orthonormal DCT-II and its inverse (DCT-III), computed with a single
//! N-point complex FFT after even/odd reordering.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::fft;
use crate::error::{Error, Result};

pub fn dct(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n.div_ceil(2) {
        v[k].re = x[2 * k];
    }
    for k in 0..n / 2 {
        v[n - 1 - k].re = x[2 * k + 1];
    }
    fft::forward(&mut v);
    let s0 = (1.0 / n as f64).sqrt();
    let s = (2.0 / n as f64).sqrt();
    Ok(v.iter()
        .enumerate()
        .map(|(k, c)| {
            let tw = Complex64::from_polar(1.0, -PI * k as f64 / (2.0 * n as f64));
            let scale = if k == 0 { s0 } else { s };
            (c * tw).re * scale
        })
        .collect())
}

pub fn idct(coeffs: &[f64]) -> Result<Vec<f64>> {
    let n = coeffs.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let s0 = (n as f64).sqrt();
    let s = (n as f64 / 2.0).sqrt();
    // Undo the orthonormal scaling to get the plain cosine-sum coefficients.
    let c: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .map(|(k, &v)| v * if k == 0 { s0 } else { s })
        .collect();
    let mut v: Vec<Complex64> = (0..n)
        .map(|k| {
            let mirrored = if k == 0 { 0.0 } else { c[n - k] };
            let tw = Complex64::from_polar(1.0, PI * k as f64 / (2.0 * n as f64));
            Complex64::new(c[k], -mirrored) * tw
        })
        .collect();
    fft::inverse(&mut v);
    let mut x = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        x[2 * k] = v[k].re;
    }
    for k in 0..n / 2 {
        x[2 * k + 1] = v[n - 1 - k].re;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textbook_dct(x: &[f64]) -> Vec<f64> {
        let n = x.len() as f64;
        (0..x.len())
            .map(|k| {
                let sum: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                    .sum();
                sum * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
            })
            .collect()
    }

    fn lcg(seed: u64, n: usize) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    #[test]
    fn constant_input_is_dc_only() {
        let c = dct(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-12);
        for v in &c[1..] {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn matches_textbook_sum() {
        for n in [1, 2, 3, 4, 7, 16, 33, 100] {
            let x = lcg(n as u64, n);
            let fast = dct(&x).unwrap();
            let slow = textbook_dct(&x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-9, "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn round_trip() {
        for n in [1, 4, 5, 256, 32_000] {
            let x = lcg(7 + n as u64, n);
            let back = idct(&dct(&x).unwrap()).unwrap();
            let norm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err: f64 = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err / norm < 1e-10, "n={n}: rel err {}", err / norm);
        }
    }

    #[test]
    fn linear() {
        let x = lcg(1, 64);
        let y = lcg(2, 64);
        let (a, b) = (0.7, -2.5);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = dct(&mix).unwrap();
        let (dx, dy) = (dct(&x).unwrap(), dct(&y).unwrap());
        for i in 0..64 {
            assert!((lhs[i] - (a * dx[i] + b * dy[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(dct(&[]), Err(Error::EmptyInput)));
        assert!(matches!(idct(&[]), Err(Error::EmptyInput)));
    }
}

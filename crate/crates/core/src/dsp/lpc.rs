//! Autocorrelation, Levinson-Durbin recursion and the AR power response.

use rustfft::num_complex::Complex64;

use super::fft;
use crate::error::{Error, Result};

/// Below this length the direct double loop beats the transform path.
const DIRECT_AUTOCORR_MAX_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    /// Prediction polynomial `a[0..=p]`, with `a[0] == 1`.
    pub coefficients: Vec<f64>,
    /// Final forward prediction error power.
    pub error_gain: f64,
    pub reflection: Vec<f64>,
}

impl ArModel {
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Flat model: `a = [1]`, constant power response `gain`.
    pub fn flat(gain: f64) -> Self {
        Self {
            coefficients: vec![1.0],
            error_gain: gain,
            reflection: Vec::new(),
        }
    }

    pub fn is_minimum_phase(&self) -> bool {
        self.reflection.iter().all(|k| k.abs() < 1.0)
    }
}

/// Biased autocorrelation `r[τ] = Σ_k seq[k]·seq[k+τ]` for `τ = 0..=max_lag`.
pub fn autocorrelation(seq: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag >= seq.len() {
        return Err(Error::InvalidArgument(format!(
            "max_lag {max_lag} must be < sequence length {}",
            seq.len()
        )));
    }
    if seq.len() <= DIRECT_AUTOCORR_MAX_LEN {
        Ok(autocorrelation_direct(seq, max_lag))
    } else {
        Ok(autocorrelation_fft(seq, max_lag))
    }
}

pub(crate) fn autocorrelation_direct(seq: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|lag| seq.iter().zip(&seq[lag..]).map(|(a, b)| a * b).sum())
        .collect()
}

pub(crate) fn autocorrelation_fft(seq: &[f64], max_lag: usize) -> Vec<f64> {
    let n = (seq.len() + max_lag + 1).next_power_of_two();
    let mut buf = fft::real_to_complex(seq, n);
    fft::forward(&mut buf);
    for v in buf.iter_mut() {
        *v = Complex64::new(v.norm_sqr(), 0.0);
    }
    fft::inverse(&mut buf);
    buf[..=max_lag].iter().map(|c| c.re).collect()
}

/// Solves the Toeplitz normal equations for the order-`order` forward
/// predictor.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<ArModel> {
    let r0 = *r.first().ok_or(Error::EmptyInput)?;
    if !(r0 > 0.0) {
        return Err(Error::DegenerateAutocorrelation(r0));
    }
    if order >= r.len() {
        return Err(Error::InvalidArgument(format!(
            "order {order} exceeds max lag {}",
            r.len() - 1
        )));
    }
    let mut a = vec![0.0; order + 1];
    a[0] = 1.0;
    let mut prev = a.clone();
    let mut err = r0;
    let mut reflection = Vec::with_capacity(order);
    for i in 1..=order {
        let acc: f64 = (0..i).map(|j| a[j] * r[i - j]).sum();
        let k = -acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            return Err(Error::IllConditioned(format!(
                "reflection coefficient {k} at stage {i}"
            )));
        }
        prev[..i].copy_from_slice(&a[..i]);
        for j in 1..i {
            a[j] = prev[j] + k * prev[i - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if !(err.is_finite() && err > 0.0) {
            return Err(Error::IllConditioned(format!(
                "prediction error {err} at stage {i}"
            )));
        }
        reflection.push(k);
    }
    Ok(ArModel {
        coefficients: a,
        error_gain: err,
        reflection,
    })
}

/// Power response `E[t] = σ² / |A(e^{-iπt/M})|²` on the half-period grid
/// `t = 0..M`.
pub fn ar_envelope(model: &ArModel, num_samples: usize) -> Result<Vec<f64>> {
    if num_samples == 0 {
        return Err(Error::InvalidArgument("num_samples must be >= 1".into()));
    }
    let n = 2 * num_samples;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    // e^{-2πi k t / n} is n-periodic in k, so long polynomials fold.
    for (k, &a) in model.coefficients.iter().enumerate() {
        buf[k % n].re += a;
    }
    fft::forward(&mut buf);
    buf[..num_samples]
        .iter()
        .enumerate()
        .map(|(t, c)| {
            let v = model.error_gain / c.norm_sqr();
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::UnstableModel(t))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(r: &[f64], p: usize) -> Vec<f64> {
        // Gaussian elimination with partial pivoting on R a = -r.
        let mut m: Vec<Vec<f64>> = (0..p)
            .map(|i| {
                let mut row: Vec<f64> = (0..p).map(|j| r[i.abs_diff(j)]).collect();
                row.push(-r[i + 1]);
                row
            })
            .collect();
        for col in 0..p {
            let piv = (col..p)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            m.swap(col, piv);
            for row in col + 1..p {
                let f = m[row][col] / m[col][col];
                for c in col..=p {
                    m[row][c] -= f * m[col][c];
                }
            }
        }
        let mut x = vec![0.0; p];
        for i in (0..p).rev() {
            let s: f64 = (i + 1..p).map(|j| m[i][j] * x[j]).sum();
            x[i] = (m[i][p] - s) / m[i][i];
        }
        x
    }

    #[test]
    fn impulse_autocorrelation() {
        assert_eq!(autocorrelation(&[1.0, 0.0, 0.0, 0.0], 2).unwrap(), vec![1.0, 0.0, 0.0]);
        assert!(autocorrelation(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn fft_path_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for len in [65, 100, 1000, 4097] {
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let fast = autocorrelation_fft(&x, 160.min(len - 1));
            let slow = autocorrelation_direct(&x, 160.min(len - 1));
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-10 * slow[0].max(1.0), "{a} vs {b}");
            }
            assert!(slow.iter().all(|v| v.abs() <= slow[0]));
        }
    }

    #[test]
    fn autocorrelation_is_homogeneous() {
        let x: Vec<f64> = (0..200).map(|i| (i as f64 * 0.3).sin()).collect();
        let scaled: Vec<f64> = x.iter().map(|v| 3.0 * v).collect();
        let (r, rs) = (autocorrelation(&x, 10).unwrap(), autocorrelation(&scaled, 10).unwrap());
        for (a, b) in r.iter().zip(&rs) {
            assert!((9.0 * a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn white_process() {
        let mut r = vec![0.0; 11];
        r[0] = 1.0;
        let m = levinson_durbin(&r, 10).unwrap();
        assert_eq!(m.coefficients[0], 1.0);
        assert!(m.coefficients[1..].iter().all(|&a| a == 0.0));
        assert_eq!(m.error_gain, 1.0);
    }

    #[test]
    fn ar1_closed_form() {
        let r: Vec<f64> = (0..4).map(|t| 0.9f64.powi(t)).collect();
        let m = levinson_durbin(&r, 1).unwrap();
        assert!((m.coefficients[1] + 0.9).abs() < 1e-15);
        assert!((m.error_gain - 0.19).abs() < 1e-15);
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in [1, 2, 5, 20, 80] {
            let x: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
            let r = autocorrelation(&x, p).unwrap();
            let m = levinson_durbin(&r, p).unwrap();
            let dense = dense_solve(&r, p);
            for (a, b) in m.coefficients[1..].iter().zip(&dense) {
                assert!((a - b).abs() < 1e-8, "p={p}: {a} vs {b}");
            }
            assert!(m.is_minimum_phase());
        }
    }

    #[test]
    fn degenerate_input() {
        let err = levinson_durbin(&[0.0, 0.0], 1).unwrap_err();
        assert!(err.to_string().contains("degenerate autocorrelation"));
        let err = levinson_durbin(&[1.0, 1.0, 1.0], 2).unwrap_err();
        assert!(err.to_string().contains("ill-conditioned"));
    }

    #[test]
    fn flat_model_gives_constant_envelope() {
        let env = ar_envelope(&ArModel::flat(2.5), 800).unwrap();
        assert_eq!(env.len(), 800);
        assert!(env.iter().all(|&v| v == 2.5));
    }

    #[test]
    fn envelope_matches_direct_evaluation() {
        let model = ArModel {
            coefficients: vec![1.0, -0.5, 0.2, 0.1],
            error_gain: 0.7,
            reflection: vec![],
        };
        let env = ar_envelope(&model, 50).unwrap();
        for (t, v) in env.iter().enumerate() {
            let w = std::f64::consts::PI * t as f64 / 50.0;
            let (mut re, mut im) = (0.0, 0.0);
            for (k, a) in model.coefficients.iter().enumerate() {
                re += a * (w * k as f64).cos();
                im -= a * (w * k as f64).sin();
            }
            assert!((v - 0.7 / (re * re + im * im)).abs() < 1e-12);
        }
    }

    #[test]
    fn root_on_grid_is_unstable() {
        // A(z) = 1 - z^-1 vanishes at t = 0.
        let model = ArModel {
            coefficients: vec![1.0, -1.0],
            error_gain: 1.0,
            reflection: vec![],
        };
        assert!(matches!(ar_envelope(&model, 8), Err(Error::UnstableModel(0))));
    }
}

use rustfft::num_complex::Complex64;

use super::fft;
use crate::error::{Error, Result};

/// Squared magnitude of the analytic signal, built by zeroing the negative
/// half of the spectrum and doubling the positive half.
pub fn hilbert_envelope(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut buf = fft::real_to_complex(x, n);
    fft::forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let weight = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *v *= weight;
    }
    fft::inverse(&mut buf);
    Ok(buf.iter().map(Complex64::norm_sqr).collect())
}

//! Mel-spaced sub-band windows over DCT (or FFT bin) indices.
//!
//! Index `k` of a length-`dct_len` coefficient sequence sits at frequency
//! `k * sample_rate / (2 * dct_len)`. Adjacent windows overlap by half and
//! are cosine shaped in the mel domain, so squared neighbours sum to one
//! between the first and last band centre.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelWindow {
    /// First coefficient index of the support.
    pub start: usize,
    /// Non-negative weights for indices `start..start + weights.len()`.
    pub weights: Vec<f64>,
    pub center_hz: f64,
    pub lo_hz: f64,
    pub hi_hz: f64,
}

impl MelWindow {
    pub fn end(&self) -> usize {
        self.start + self.weights.len()
    }

    pub fn support(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelWindowBank {
    pub f_lo: f64,
    pub f_hi: f64,
    pub sample_rate: f64,
    pub dct_len: usize,
    pub windows: Vec<MelWindow>,
}

impl MelWindowBank {
    pub fn num_bands(&self) -> usize {
        self.windows.len()
    }

    pub fn centers_hz(&self) -> Vec<f64> {
        self.windows.iter().map(|w| w.center_hz).collect()
    }

    /// Frequency of coefficient index `k`.
    pub fn index_hz(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate / (2.0 * self.dct_len as f64)
    }

    /// Σ_q w_q[k]² for every index, the overlap-add profile of the bank.
    pub fn squared_coverage(&self) -> Vec<f64> {
        let mut cov = vec![0.0; self.dct_len];
        for w in &self.windows {
            for (i, &v) in w.weights.iter().enumerate() {
                cov[w.start + i] += v * v;
            }
        }
        cov
    }
}

pub fn make_mel_windows(
    num_bands: usize,
    f_lo: f64,
    f_hi: f64,
    sample_rate: f64,
    dct_len: usize,
) -> Result<MelWindowBank> {
    if num_bands == 0 {
        return Err(Error::InvalidArgument("num_bands must be >= 1".into()));
    }
    if dct_len == 0 {
        return Err(Error::EmptyInput);
    }
    let nyquist = sample_rate / 2.0;
    if f_hi > nyquist {
        return Err(Error::AboveNyquist { f_hi, nyquist });
    }
    if !(f_lo > 0.0 && f_lo < f_hi) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < f_lo < f_hi, got f_lo={f_lo}, f_hi={f_hi}"
        )));
    }

    let (m_lo, m_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
    let (centers, half_width) = if num_bands == 1 {
        (vec![(m_lo + m_hi) / 2.0], (m_hi - m_lo) / 2.0)
    } else {
        let step = (m_hi - m_lo) / (num_bands - 1) as f64;
        let centers = (0..num_bands).map(|i| m_lo + step * i as f64).collect();
        (centers, step)
    };

    let hz_per_index = sample_rate / (2.0 * dct_len as f64);
    let windows = centers
        .into_iter()
        .map(|c| {
            let (lo_hz, hi_hz) = if num_bands == 1 {
                (f_lo, f_hi)
            } else {
                (
                    mel_to_hz((c - half_width).max(0.0)),
                    mel_to_hz(c + half_width).min(nyquist),
                )
            };
            let start = (lo_hz / hz_per_index).ceil() as usize;
            let end = ((hi_hz / hz_per_index).floor() as usize + 1).min(dct_len);
            let weights = (start..end.max(start))
                .map(|k| {
                    let u = (hz_to_mel(k as f64 * hz_per_index) - c) / half_width;
                    (FRAC_PI_2 * u.clamp(-1.0, 1.0)).cos().max(0.0)
                })
                .collect();
            MelWindow {
                start,
                weights,
                center_hz: mel_to_hz(c),
                lo_hz,
                hi_hz,
            }
        })
        .collect();

    Ok(MelWindowBank {
        f_lo,
        f_hi,
        sample_rate,
        dct_len,
        windows,
    })
}

/// Windowed coefficients of one band over the full index range, zero
/// outside the band's support.
pub fn subband_coeffs(coeffs: &[f64], bank: &MelWindowBank, band: usize) -> Result<Vec<f64>> {
    let window = checked_window(coeffs, bank, band)?;
    let mut out = vec![0.0; coeffs.len()];
    for (i, &w) in window.weights.iter().enumerate() {
        let k = window.start + i;
        out[k] = coeffs[k] * w;
    }
    Ok(out)
}

/// Windowed coefficients restricted to the band's support.
pub fn subband_support(coeffs: &[f64], bank: &MelWindowBank, band: usize) -> Result<Vec<f64>> {
    let window = checked_window(coeffs, bank, band)?;
    Ok(coeffs[window.support()]
        .iter()
        .zip(&window.weights)
        .map(|(c, w)| c * w)
        .collect())
}

fn checked_window<'a>(
    coeffs: &[f64],
    bank: &'a MelWindowBank,
    band: usize,
) -> Result<&'a MelWindow> {
    if coeffs.len() != bank.dct_len {
        return Err(Error::shape(
            format!("{} coefficients", bank.dct_len),
            coeffs.len(),
        ));
    }
    bank.windows.get(band).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "band {band} out of range (bank has {})",
            bank.num_bands()
        ))
    })
}

//! Envelope-domain reverberation model and log-domain gain algebra.
//!
//! Reverberation acts on sub-band envelopes approximately as a convolution
//! with the RIR's own envelope, `m_r ≈ ½ m_x ∗ m_h`. Dereverberation is a
//! per-sample gain: `log m̂_x = log m_r + g` with the training target
//! `g = log m_x − log m_r`.

use crate::dsp::fft::linear_convolve;
use crate::dsp::{FdlpAnalyzer, SubbandEnvelopeSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::reverb::{convolve, convolve_kernel, split_rir, RoomImpulseResponse};
use crate::signal::Signal;

/// Natural log of floored envelopes.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEnvelopeSet(Matrix);

impl LogEnvelopeSet {
    pub fn new(values: Matrix) -> Result<Self> {
        ensure_finite(&values)?;
        Ok(Self(values))
    }

    pub fn from_envelopes(env: &SubbandEnvelopeSet) -> Self {
        Self(env.values().map(f64::ln))
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_values(self) -> Matrix {
        self.0
    }

    /// Back to linear envelopes.
    pub fn exp(&self, envelope_rate: f64) -> Result<SubbandEnvelopeSet> {
        SubbandEnvelopeSet::new(self.0.map(f64::exp), envelope_rate)
    }
}

/// Log-domain gains, one per envelope sample and band.
#[derive(Debug, Clone, PartialEq)]
pub struct GainTarget(Matrix);

impl GainTarget {
    pub fn new(values: Matrix) -> Result<Self> {
        ensure_finite(&values)?;
        Ok(Self(values))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(Matrix::zeros(rows, cols))
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_values(self) -> Matrix {
        self.0
    }
}

fn ensure_finite(m: &Matrix) -> Result<()> {
    match m.as_slice().iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidArgument(format!("non-finite value at index {i}"))),
        None => Ok(()),
    }
}

/// `½ (m_x ∗ m_h)` truncated to `m_x.len()`.
pub fn predict_reverb_envelope(m_x: &[f64], m_h: &[f64]) -> Result<Vec<f64>> {
    for (i, &v) in m_x.iter().chain(m_h).enumerate() {
        if v < 0.0 {
            return Err(Error::NegativeEnvelope { index: i, value: v });
        }
    }
    let mut out = linear_convolve(m_x, m_h);
    out.resize(m_x.len(), 0.0);
    for v in out.iter_mut() {
        // FFT round-off can leave tiny negative values.
        *v = (0.5 * *v).max(0.0);
    }
    Ok(out)
}

/// Band-wise `predict_reverb_envelope` over whole envelope sets.
pub fn predict_reverb_set(m_x: &SubbandEnvelopeSet, m_h: &SubbandEnvelopeSet) -> Result<Matrix> {
    m_x.values().ensure_same_shape(m_h.values())?;
    let columns = (0..m_x.num_bands())
        .map(|q| predict_reverb_envelope(&m_x.band(q), &m_h.band(q)))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_columns(&columns)
}

/// Envelopes of the source filtered by the early and by the late part of
/// the RIR.
pub fn decompose_early_late(
    analyzer: &FdlpAnalyzer,
    x: &Signal,
    h: &RoomImpulseResponse,
) -> Result<(SubbandEnvelopeSet, SubbandEnvelopeSet)> {
    let parts = split_rir(h);
    let early = convolve_kernel(x, &parts.early, h.sample_rate())?;
    let late = convolve_kernel(x, &parts.late, h.sample_rate())?;
    // Floors follow each part's own energy; a silent late part stays at
    // the floor.
    Ok((analyzer.analyze(&early)?, analyzer.analyze(&late)?))
}

/// Envelopes of clean, RIR and reverberant signals for one segment.
pub struct ReverbEnvelopes {
    pub clean: SubbandEnvelopeSet,
    pub rir: SubbandEnvelopeSet,
    pub reverb: SubbandEnvelopeSet,
}

pub fn analyze_pair(analyzer: &FdlpAnalyzer, x: &Signal, h: &RoomImpulseResponse) -> Result<ReverbEnvelopes> {
    let reverb = convolve(x, h)?;
    Ok(ReverbEnvelopes {
        clean: analyzer.analyze(x)?,
        rir: analyzer.analyze_padded(&h.to_signal())?,
        reverb: analyzer.analyze(&reverb)?,
    })
}

/// `log clean − log reverb`.
pub fn residual_target(clean: &SubbandEnvelopeSet, reverb: &SubbandEnvelopeSet) -> Result<GainTarget> {
    let g = clean.values().zip_with(reverb.values(), |c, r| c.ln() - r.ln())?;
    GainTarget::new(g)
}

pub fn apply_gain(log_reverb: &LogEnvelopeSet, gain: &GainTarget) -> Result<LogEnvelopeSet> {
    LogEnvelopeSet::new(log_reverb.values().zip_with(gain.values(), |r, g| r + g)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Distortion {
    pub band_log_mse: Vec<f64>,
    pub band_correlation: Vec<f64>,
    pub log_mse: f64,
    pub correlation: f64,
}

/// Log-domain MSE and per-band Pearson correlation of log envelopes.
pub fn envelope_distortion(a: &SubbandEnvelopeSet, b: &SubbandEnvelopeSet) -> Result<Distortion> {
    log_distortion(
        &LogEnvelopeSet::from_envelopes(a),
        &LogEnvelopeSet::from_envelopes(b),
    )
}

pub fn log_distortion(a: &LogEnvelopeSet, b: &LogEnvelopeSet) -> Result<Distortion> {
    a.values().ensure_same_shape(b.values())?;
    let bands = a.values().cols();
    let mut band_log_mse = Vec::with_capacity(bands);
    let mut band_correlation = Vec::with_capacity(bands);
    for q in 0..bands {
        let (x, y) = (a.values().column(q), b.values().column(q));
        let mse = x.iter().zip(&y).map(|(u, v)| (u - v).powi(2)).sum::<f64>() / x.len().max(1) as f64;
        band_log_mse.push(mse);
        band_correlation.push(pearson(&x, &y));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    Ok(Distortion {
        log_mse: mean(&band_log_mse),
        correlation: mean(&band_correlation),
        band_log_mse,
        band_correlation,
    })
}

/// Pearson correlation. Two constant sequences count as perfectly
/// correlated; one constant sequence against a varying one as 0.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let tiny = |s: f64, m: f64| s <= 1e-24 * (m * m * n as f64).max(1e-300);
    match (tiny(saa, ma), tiny(sbb, mb)) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        _ => sab / (saa * sbb).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::gaussian_vec;

    fn env_set(seed: u64, rows: usize, cols: usize) -> SubbandEnvelopeSet {
        let v = gaussian_vec(seed, rows * cols).into_iter().map(|g| (0.5 * g).exp()).collect();
        SubbandEnvelopeSet::new(Matrix::from_vec(rows, cols, v).unwrap(), 400.0).unwrap()
    }

    #[test]
    fn scaled_impulse_is_identity() {
        let m_x = [1.0, 2.0, 3.0, 0.5];
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(u, v)| (u - v).abs() < 1e-12);
        let out = predict_reverb_envelope(&m_x, &[2.0]).unwrap();
        assert!(close(&out, &m_x));
        let out = predict_reverb_envelope(&[1.0, 0.0, 0.0], &[4.0, 2.0, 6.0, 8.0]).unwrap();
        assert_eq!(out.len(), 3);
        assert!(close(&out, &[2.0, 1.0, 3.0]));
        assert!(predict_reverb_envelope(&[1.0, -1.0], &[1.0]).is_err());
    }

    #[test]
    fn prediction_is_bilinear() {
        let a = gaussian_vec(1, 300).iter().map(|v| v.abs()).collect::<Vec<_>>();
        let b = gaussian_vec(2, 300).iter().map(|v| v.abs()).collect::<Vec<_>>();
        let h = gaussian_vec(3, 300).iter().map(|v| v.abs()).collect::<Vec<_>>();
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x + 0.5 * y).collect();
        let lhs = predict_reverb_envelope(&mix, &h).unwrap();
        let pa = predict_reverb_envelope(&a, &h).unwrap();
        let pb = predict_reverb_envelope(&b, &h).unwrap();
        for i in 0..300 {
            assert!((lhs[i] - (2.0 * pa[i] + 0.5 * pb[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn residual_of_identical_sets_is_zero() {
        let x = env_set(4, 50, 36);
        let g = residual_target(&x, &x).unwrap();
        assert!(g.values().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn residual_of_scaled_set_is_constant() {
        let x = env_set(5, 50, 36);
        let r = SubbandEnvelopeSet::new(x.values().map(|v| 3.0 * v), 400.0).unwrap();
        let g = residual_target(&x, &r).unwrap();
        assert!(g.values().as_slice().iter().all(|&v| (v + 3f64.ln()).abs() < 1e-12));
    }

    #[test]
    fn oracle_gain_inverts_exactly() {
        let x = env_set(6, 800, 36);
        let r = env_set(7, 800, 36);
        let g = residual_target(&x, &r).unwrap();
        let est = apply_gain(&LogEnvelopeSet::from_envelopes(&r), &g).unwrap();
        let clean = LogEnvelopeSet::from_envelopes(&x);
        for (a, b) in est.values().as_slice().iter().zip(clean.values().as_slice()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_and_unit_gain() {
        let r = LogEnvelopeSet::from_envelopes(&env_set(8, 20, 36));
        assert_eq!(apply_gain(&r, &GainTarget::zeros(20, 36)).unwrap(), r);
        let ones = GainTarget::new(Matrix::filled(20, 36, 1.0)).unwrap();
        let up = apply_gain(&r, &ones).unwrap().exp(400.0).unwrap();
        let base = r.exp(400.0).unwrap();
        for (a, b) in up.values().as_slice().iter().zip(base.values().as_slice()) {
            assert!((a / b - std::f64::consts::E).abs() < 1e-12);
        }
        assert!(apply_gain(&r, &GainTarget::zeros(21, 36)).is_err());
    }

    #[test]
    fn distortion_basics() {
        let a = env_set(9, 800, 36);
        let d = envelope_distortion(&a, &a).unwrap();
        assert_eq!(d.log_mse, 0.0);
        assert!((d.correlation - 1.0).abs() < 1e-12);

        let b = SubbandEnvelopeSet::new(a.values().map(|v| 2.0 * v), 400.0).unwrap();
        let d = envelope_distortion(&a, &b).unwrap();
        assert!((d.log_mse - 2f64.ln().powi(2)).abs() < 1e-12);
        assert!((d.correlation - 1.0).abs() < 1e-12);

        let c = env_set(10, 800, 36);
        let d = envelope_distortion(&a, &c).unwrap();
        assert!(d.band_correlation.iter().all(|r| r.abs() < 0.15));
        assert!(d.correlation.abs() < 0.1);
    }
}

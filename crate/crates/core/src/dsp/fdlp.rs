//! Sub-band temporal envelopes by frequency-domain linear prediction.
//!
//! A segment is taken to the DCT domain, split into mel-spaced bands, and
//! each band's coefficient sequence is fitted with an all-pole model. The
//! model's power response over the half-period grid is the band's temporal
//! envelope: DCT index behaves like time, so the "spectrum" of the
//! coefficient sequence traces the squared Hilbert envelope of the band.

use rayon::prelude::*;

use super::dct::{dct, idct};
use super::lpc::{ar_envelope, autocorrelation, levinson_durbin};
use super::mel::{make_mel_windows, subband_coeffs, subband_support, MelWindowBank};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::{segment_len, Signal, DEFAULT_SAMPLE_RATE};

/// Relative floor applied to every envelope value.
pub const FLOOR_RELATIVE: f64 = 1e-10;
/// Absolute term added to the segment energy before computing the floor.
pub const FLOOR_ABSOLUTE: f64 = 1e-20;
/// Lag-zero conditioning of every band autocorrelation.
const LAG_ZERO_CONDITIONING: f64 = 1e-9;

pub const DEFAULT_NUM_BANDS: usize = 36;
pub const DEFAULT_ENVELOPE_LEN: usize = 800;
pub const DEFAULT_AR_ORDER: usize = 160;

#[derive(Debug, Clone, PartialEq)]
pub struct FdlpConfig {
    pub sample_rate: u32,
    pub num_bands: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    /// Poles per band per segment.
    pub ar_order: usize,
    /// Envelope samples per band per segment (400 Hz over 2 s).
    pub envelope_len: usize,
}

impl Default for FdlpConfig {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            num_bands: DEFAULT_NUM_BANDS,
            f_lo: 200.0,
            f_hi: 6500.0,
            ar_order: DEFAULT_AR_ORDER,
            envelope_len: DEFAULT_ENVELOPE_LEN,
        }
    }
}

impl FdlpConfig {
    pub fn segment_len(&self) -> usize {
        segment_len(self.sample_rate)
    }

    pub fn envelope_rate(&self) -> f64 {
        self.envelope_len as f64 / crate::signal::SEGMENT_SECONDS
    }
}

/// Envelope floor for a segment with the given mean energy.
pub fn envelope_floor(mean_energy: f64) -> f64 {
    FLOOR_RELATIVE * (mean_energy + FLOOR_ABSOLUTE)
}

/// Time × band matrix of strictly positive envelope values.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandEnvelopeSet {
    values: Matrix,
    envelope_rate: f64,
}

impl SubbandEnvelopeSet {
    pub fn new(values: Matrix, envelope_rate: f64) -> Result<Self> {
        if let Some((i, &v)) = values
            .as_slice()
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::NonPositive { index: i, value: v });
        }
        Ok(Self {
            values,
            envelope_rate,
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn envelope_rate(&self) -> f64 {
        self.envelope_rate
    }

    pub fn num_samples(&self) -> usize {
        self.values.rows()
    }

    pub fn num_bands(&self) -> usize {
        self.values.cols()
    }

    pub fn band(&self, q: usize) -> Vec<f64> {
        self.values.column(q)
    }
}

/// Reusable analyzer holding the band layout for one configuration.
#[derive(Debug, Clone)]
pub struct FdlpAnalyzer {
    config: FdlpConfig,
    bank: MelWindowBank,
}

impl FdlpAnalyzer {
    pub fn new(config: FdlpConfig) -> Result<Self> {
        if config.envelope_len == 0 {
            return Err(Error::InvalidArgument("envelope_len must be >= 1".into()));
        }
        let bank = make_mel_windows(
            config.num_bands,
            config.f_lo,
            config.f_hi,
            f64::from(config.sample_rate),
            config.segment_len(),
        )?;
        Ok(Self { config, bank })
    }

    pub fn config(&self) -> &FdlpConfig {
        &self.config
    }

    pub fn bank(&self) -> &MelWindowBank {
        &self.bank
    }

    fn check_segment(&self, signal: &Signal) -> Result<()> {
        if signal.sample_rate() != self.config.sample_rate {
            return Err(Error::SampleRateMismatch(
                signal.sample_rate(),
                self.config.sample_rate,
            ));
        }
        if signal.len() != self.config.segment_len() {
            return Err(Error::shape(
                format!("{} samples", self.config.segment_len()),
                format!("{} samples", signal.len()),
            ));
        }
        Ok(())
    }

    /// Analyzes exactly one segment; other lengths are rejected.
    pub fn analyze(&self, signal: &Signal) -> Result<SubbandEnvelopeSet> {
        self.check_segment(signal)?;
        let coeffs = dct(signal.samples())?;
        let floor = envelope_floor(signal.mean_energy());
        let len = self.config.envelope_len;
        let columns = (0..self.config.num_bands)
            .into_par_iter()
            .map(|q| {
                self.band_envelope(&coeffs, q, len, floor)
                    .map_err(|e| Error::Band {
                        band: q,
                        source: Box::new(e),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        SubbandEnvelopeSet::new(Matrix::from_columns(&columns)?, self.config.envelope_rate())
    }

    /// Zero-pads or truncates to one segment before analysis.
    pub fn analyze_padded(&self, signal: &Signal) -> Result<SubbandEnvelopeSet> {
        self.analyze(&signal.fit_to(self.config.segment_len()))
    }

    fn band_envelope(&self, coeffs: &[f64], band: usize, len: usize, floor: f64) -> Result<Vec<f64>> {
        let seq = subband_support(coeffs, &self.bank, band)?;
        if seq.len() < 2 || seq.iter().all(|&v| v == 0.0) {
            return Ok(vec![floor; len]);
        }
        let order = self.config.ar_order.min(seq.len() - 1);
        let mut r = autocorrelation(&seq, order)?;
        r[0] *= 1.0 + LAG_ZERO_CONDITIONING;
        let model = levinson_durbin(&r, order)?;
        let env = ar_envelope(&model, len)?;
        Ok(env.into_iter().map(|v| v.max(floor)).collect())
    }

    /// Time-domain signal of one band (inverse DCT of its windowed
    /// coefficients).
    pub fn subband_signal(&self, signal: &Signal, band: usize) -> Result<Vec<f64>> {
        self.check_segment(signal)?;
        let coeffs = dct(signal.samples())?;
        idct(&subband_coeffs(&coeffs, &self.bank, band)?)
    }
}

/// Analyzes one 2 s segment with the default configuration.
pub fn fdlp_analyze(signal: &Signal) -> Result<SubbandEnvelopeSet> {
    FdlpAnalyzer::new(FdlpConfig::default())?.analyze(signal)
}

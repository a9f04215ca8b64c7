//! ASR-style features from sub-band envelopes: Hamming-window integration
//! into 25 ms / 10 ms frames followed by log compression. The integration
//! is a fixed banded linear operator so gradients can flow through it.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::dsp::fdlp::envelope_floor;
use crate::dsp::fft;
use crate::dsp::{make_mel_windows, FdlpConfig, SubbandEnvelopeSet};
use crate::envelope::LogEnvelopeSet;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::Signal;

/// Envelope rate the integration taps are designed for.
pub const ENVELOPE_RATE: f64 = 400.0;
/// 25 ms at 400 Hz.
pub const FRAME_LEN: usize = 10;
/// 10 ms at 400 Hz.
pub const FRAME_SHIFT: usize = 4;

pub const FEATURE_MAGIC: &[u8; 8] = b"FDLPFEAT";
pub const FEATURE_VERSION: u32 = 1;
pub const FEATURE_HEADER_LEN: usize = 8 + 4 + 4 + 4;

/// Symmetric Hamming window `0.54 − 0.46·cos(2πn/(N−1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

/// Frames produced from `len` samples with no padding.
pub fn frame_count(len: usize, frame_len: usize, shift: usize) -> usize {
    if len < frame_len {
        0
    } else {
        (len - frame_len) / shift + 1
    }
}

/// Fixed, non-trainable Hamming integration shared by all bands.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationOperator {
    taps: Vec<f64>,
    shift: usize,
    input_len: usize,
}

impl IntegrationOperator {
    pub fn new(input_len: usize) -> Self {
        Self {
            taps: hamming(FRAME_LEN),
            shift: FRAME_SHIFT,
            input_len,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn frames(&self) -> usize {
        frame_count(self.input_len, self.taps.len(), self.shift)
    }

    pub fn is_trainable(&self) -> bool {
        false
    }

    /// `y[t] = Σ_k w[k]·x[shift·t + k]`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_len);
        (0..self.frames())
            .map(|t| {
                let s = t * self.shift;
                self.taps.iter().zip(&x[s..s + self.taps.len()]).map(|(w, v)| w * v).sum()
            })
            .collect()
    }

    /// Adjoint: scatters frame values back onto the envelope grid.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.input_len];
        for (t, &g) in y.iter().enumerate() {
            let s = t * self.shift;
            for (k, w) in self.taps.iter().enumerate() {
                x[s + k] += w * g;
            }
        }
        x
    }

    /// Dense `frames × input_len` matrix.
    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.frames(), self.input_len);
        for t in 0..self.frames() {
            for (k, &w) in self.taps.iter().enumerate() {
                m.set(t, t * self.shift + k, w);
            }
        }
        m
    }

    /// Integrates every column of a time × band matrix.
    pub fn apply_columns(&self, m: &Matrix) -> Result<Matrix> {
        if m.rows() != self.input_len {
            return Err(Error::shape(format!("{} rows", self.input_len), m.rows()));
        }
        let columns: Vec<Vec<f64>> = (0..m.cols()).map(|q| self.apply(&m.column(q))).collect();
        if columns.is_empty() {
            return Ok(Matrix::zeros(self.frames(), 0));
        }
        Matrix::from_columns(&columns)
    }
}

/// Frames × bands matrix of log-compressed energies.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(Matrix);

impl FeatureMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if let Some(i) = values.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite feature at index {i}")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &Matrix {
        &self.0
    }

    pub fn into_values(self) -> Matrix {
        self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
}

/// Pre-log Hamming-integrated energies.
pub fn integrate(env: &SubbandEnvelopeSet) -> Result<Matrix> {
    if (env.envelope_rate() - ENVELOPE_RATE).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "envelope rate {} Hz, integration expects {ENVELOPE_RATE} Hz",
            env.envelope_rate()
        )));
    }
    IntegrationOperator::new(env.num_samples()).apply_columns(env.values())
}

pub fn log_compress(energies: &Matrix) -> Result<FeatureMatrix> {
    if let Some((i, &v)) = energies.as_slice().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::NonPositive { index: i, value: v });
    }
    FeatureMatrix::new(energies.map(f64::ln))
}

/// `log_compress(integrate(env))`.
pub fn envelope_features(env: &SubbandEnvelopeSet) -> Result<FeatureMatrix> {
    log_compress(&integrate(env)?)
}

/// Features from log envelopes: `log(integrate(exp(log_env)))`. Zero gain
/// added to a log envelope leaves this result bit-identical.
pub fn log_envelope_features(log_env: &LogEnvelopeSet, envelope_rate: f64) -> Result<FeatureMatrix> {
    envelope_features(&log_env.exp(envelope_rate)?)
}

/// STFT length in samples (25 ms at 16 kHz).
const STFT_FRAME: usize = 400;
/// STFT hop in samples (10 ms at 16 kHz).
const STFT_HOP: usize = 160;
const STFT_NFFT: usize = 512;

/// Log mel-band energies from a Hamming STFT, using the same band layout
/// as the envelope front end.
pub fn baseline_logmel(signal: &Signal, config: &FdlpConfig) -> Result<FeatureMatrix> {
    if signal.len() != config.segment_len() {
        return Err(Error::shape(
            format!("{} samples", config.segment_len()),
            format!("{} samples", signal.len()),
        ));
    }
    if signal.sample_rate() != config.sample_rate {
        return Err(Error::SampleRateMismatch(signal.sample_rate(), config.sample_rate));
    }
    let bins = STFT_NFFT / 2;
    let bank = make_mel_windows(
        config.num_bands,
        config.f_lo,
        config.f_hi,
        f64::from(config.sample_rate),
        bins,
    )?;
    let window = hamming(STFT_FRAME);
    let frames = frame_count(signal.len(), STFT_FRAME, STFT_HOP);
    let floor = envelope_floor(signal.mean_energy());
    let x = signal.samples();
    let mut out = Matrix::zeros(frames, config.num_bands);
    let mut buf = vec![Complex64::new(0.0, 0.0); STFT_NFFT];
    for t in 0..frames {
        buf.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for (k, w) in window.iter().enumerate() {
            buf[k].re = x[t * STFT_HOP + k] * w;
        }
        fft::forward(&mut buf);
        for (q, win) in bank.windows.iter().enumerate() {
            let e: f64 = win
                .weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * buf[win.start + i].norm_sqr())
                .sum();
            out.set(t, q, e.max(floor));
        }
    }
    log_compress(&out)
}

pub fn write_features(fm: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (rows, cols) = fm.shape();
    let mut bytes = Vec::with_capacity(FEATURE_HEADER_LEN + rows * cols * 4);
    bytes.extend_from_slice(FEATURE_MAGIC);
    bytes.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(rows as u32).to_le_bytes());
    bytes.extend_from_slice(&(cols as u32).to_le_bytes());
    for &v in fm.values().as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

pub(crate) fn take<'a>(bytes: &'a [u8], offset: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = *offset + n;
    if end > bytes.len() {
        return Err(Error::UnexpectedEof {
            offset: bytes.len() as u64,
        });
    }
    let out = &bytes[*offset..end];
    *offset = end;
    Ok(out)
}

pub(crate) fn read_u32(bytes: &[u8], offset: &mut usize) -> Result<u32> {
    let b = take(bytes, offset, 4)?;
    Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureMatrix> {
    let mut offset = 0;
    if take(bytes, &mut offset, 8)? != FEATURE_MAGIC {
        return Err(Error::Corrupt {
            offset: 0,
            reason: "bad magic, expected FDLPFEAT".into(),
        });
    }
    let version = read_u32(bytes, &mut offset)?;
    if version != FEATURE_VERSION {
        return Err(Error::Corrupt {
            offset: 8,
            reason: format!("unsupported version {version}"),
        });
    }
    let rows = read_u32(bytes, &mut offset)? as usize;
    let cols = read_u32(bytes, &mut offset)? as usize;
    let count = rows.checked_mul(cols).ok_or_else(|| Error::Corrupt {
        offset: 12,
        reason: format!("shape {rows}x{cols} overflows"),
    })?;
    let data = take(bytes, &mut offset, count * 4)?;
    if offset != bytes.len() {
        return Err(Error::Corrupt {
            offset: offset as u64,
            reason: format!("{} trailing bytes", bytes.len() - offset),
        });
    }
    let values = data
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect();
    FeatureMatrix::new(Matrix::from_vec(rows, cols, values)?)
}

/// Comma-separated text, one frame per line.
pub fn write_features_csv(fm: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in 0..fm.values().rows() {
        let line: Vec<String> = fm.values().row(r).iter().map(|v| format!("{}", *v as f32)).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

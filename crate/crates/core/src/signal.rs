//! Time-domain audio segments and 16-bit PCM WAV I/O.

use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
/// Length of one analysis segment in seconds.
pub const SEGMENT_SECONDS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidArgument("sample_rate must be > 0".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }

    pub fn mean_energy(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Number of samples in one standard segment at this rate.
    pub fn segment_len(&self) -> usize {
        segment_len(self.sample_rate)
    }

    /// Zero-pads (or truncates) to exactly `len` samples.
    pub fn fit_to(&self, len: usize) -> Self {
        let mut samples = self.samples.clone();
        samples.resize(len, 0.0);
        Self {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    /// Splits into consecutive non-overlapping segments. A trailing partial
    /// segment is zero-padded.
    pub fn segments(&self) -> Vec<Segment> {
        let seg = self.segment_len();
        self.samples
            .chunks(seg)
            .map(|chunk| {
                let mut samples = chunk.to_vec();
                samples.resize(seg, 0.0);
                Segment {
                    signal: Signal {
                        samples,
                        sample_rate: self.sample_rate,
                    },
                    valid_len: chunk.len(),
                }
            })
            .collect()
    }
}

/// One fixed-length piece of a longer signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub signal: Signal,
    /// Samples taken from the source; the rest is zero padding.
    pub valid_len: usize,
}

impl Segment {
    pub fn is_padded(&self) -> bool {
        self.valid_len < self.signal.len()
    }

    /// Envelope rows (out of `rows`) touched by source samples.
    pub fn valid_rows(&self, rows: usize) -> usize {
        (self.valid_len * rows).div_ceil(self.signal.len().max(1)).clamp(1, rows)
    }
}

pub fn segment_len(sample_rate: u32) -> usize {
    (SEGMENT_SECONDS * f64::from(sample_rate)).round() as usize
}

/// Reads a mono 16-bit PCM WAV at 16 kHz. Any other layout is rejected with
/// the offending header field named.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = hound::WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedWav {
            field: "sample_format",
            actual: "float".into(),
            expected: "PCM integer".into(),
        });
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedWav {
            field: "bits_per_sample",
            actual: spec.bits_per_sample.to_string(),
            expected: "16".into(),
        });
    }
    if spec.channels != 1 {
        return Err(Error::UnsupportedWav {
            field: "channels",
            actual: spec.channels.to_string(),
            expected: "1".into(),
        });
    }
    if spec.sample_rate != DEFAULT_SAMPLE_RATE {
        return Err(Error::UnsupportedWav {
            field: "sample_rate",
            actual: spec.sample_rate.to_string(),
            expected: DEFAULT_SAMPLE_RATE.to_string(),
        });
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(wav_err)?;
    Signal::new(samples, spec.sample_rate)
}

/// Writes a mono 16-bit PCM WAV. Samples outside [-1, 1) are clipped; the
/// number of clipped samples is returned.
pub fn write_wav(path: impl AsRef<Path>, signal: &Signal) -> Result<usize> {
    let path = path.as_ref();
    let wav_err = |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    };
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    let mut clipped = 0;
    for &v in signal.samples() {
        let q = (v * 32768.0).round();
        if !(-32768.0..=32767.0).contains(&q) {
            clipped += 1;
        }
        writer
            .write_sample(q.clamp(-32768.0, 32767.0) as i16)
            .map_err(wav_err)?;
    }
    writer.finalize().map_err(wav_err)?;
    Ok(clipped)
}

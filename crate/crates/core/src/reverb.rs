//! Synthetic room impulse responses, convolution, early/late partition and
//! additive noise at a prescribed SNR.

use crate::dsp::fft::linear_convolve;
use crate::error::{Error, Result};
use crate::rng::{gaussian, gaussian_vec, seeded};
use crate::signal::Signal;

pub const DEFAULT_SPLIT_MS: f64 = 50.0;
/// Longest RIR the synthesizer accepts, in seconds.
pub const MAX_RIR_SECONDS: f64 = 2.0;
/// Kernels up to this many taps are convolved by direct summation.
const DIRECT_CONV_MAX_TAPS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct RoomImpulseResponse {
    samples: Vec<f64>,
    sample_rate: u32,
    t60: f64,
    direct_index: usize,
    split_ms: f64,
    seed: u64,
}

impl RoomImpulseResponse {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn t60(&self) -> f64 {
        self.t60
    }

    pub fn direct_index(&self) -> usize {
        self.direct_index
    }

    pub fn split_ms(&self) -> f64 {
        self.split_ms
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn with_split_ms(mut self, split_ms: f64) -> Self {
        self.split_ms = split_ms;
        self
    }

    /// The RIR as a plain signal (for envelope analysis).
    pub fn to_signal(&self) -> Signal {
        Signal::new(self.samples.clone(), self.sample_rate).expect("finite by construction")
    }

    /// Wraps externally supplied taps, e.g. a pure impulse for identity
    /// tests. The taps are normalized to unit energy.
    pub fn from_samples(samples: Vec<f64>, sample_rate: u32, t60: f64) -> Result<Self> {
        let energy: f64 = samples.iter().map(|v| v * v).sum();
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::InvalidArgument("RIR has no energy".into()));
        }
        let norm = energy.sqrt();
        let direct_index = samples
            .iter()
            .position(|&v| v != 0.0)
            .unwrap_or_default();
        Ok(Self {
            samples: samples.into_iter().map(|v| v / norm).collect(),
            sample_rate,
            t60,
            direct_index,
            split_ms: DEFAULT_SPLIT_MS,
            seed: 0,
        })
    }
}

/// RIR length used when none is given: 1.5·T60, capped at two seconds.
pub fn default_rir_duration(t60: f64) -> f64 {
    (1.5 * t60).min(MAX_RIR_SECONDS)
}

/// Exponentially decaying Gaussian noise with a unit direct-path impulse
/// at sample 0, normalized to unit energy. The amplitude decays by 60 dB
/// after `t60` seconds.
pub fn synth_rir(t60: f64, sample_rate: u32, duration: f64, seed: u64) -> Result<RoomImpulseResponse> {
    if !(t60 > 0.0 && t60.is_finite()) {
        return Err(Error::InvalidArgument(format!("t60 must be > 0, got {t60}")));
    }
    if t60 > duration {
        return Err(Error::DecayExceedsLength { t60, duration });
    }
    if duration > MAX_RIR_SECONDS {
        return Err(Error::InvalidArgument(format!(
            "RIR duration {duration} s exceeds {MAX_RIR_SECONDS} s"
        )));
    }
    let sr = f64::from(sample_rate);
    let len = ((duration * sr).round() as usize).max(1);
    let decay_per_sample = -3.0 / (sr * t60);
    let mut h: Vec<f64> = gaussian_vec(seed, len)
        .into_iter()
        .enumerate()
        .map(|(n, g)| g * 10f64.powf(decay_per_sample * n as f64))
        .collect();
    h[0] = 1.0;
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in h.iter_mut() {
        *v /= norm;
    }
    Ok(RoomImpulseResponse {
        samples: h,
        sample_rate,
        t60,
        direct_index: 0,
        split_ms: DEFAULT_SPLIT_MS,
        seed,
    })
}

/// Linear convolution truncated to the input length.
pub fn convolve(x: &Signal, h: &RoomImpulseResponse) -> Result<Signal> {
    convolve_kernel(x, h.samples(), h.sample_rate())
}

pub fn convolve_kernel(x: &Signal, kernel: &[f64], kernel_rate: u32) -> Result<Signal> {
    if x.sample_rate() != kernel_rate {
        return Err(Error::SampleRateMismatch(x.sample_rate(), kernel_rate));
    }
    let mut y = if kernel.len() <= DIRECT_CONV_MAX_TAPS {
        let x = x.samples();
        (0..x.len())
            .map(|n| {
                kernel[..kernel.len().min(n + 1)]
                    .iter()
                    .enumerate()
                    .map(|(k, h)| h * x[n - k])
                    .sum()
            })
            .collect()
    } else {
        linear_convolve(x.samples(), kernel)
    };
    y.resize(x.len(), 0.0);
    Signal::new(y, x.sample_rate())
}

/// Early and late parts of an RIR. `early + late == rir` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RirParts {
    pub early: Vec<f64>,
    pub late: Vec<f64>,
    /// First sample belonging to the late part.
    pub boundary: usize,
}

pub fn split_rir(h: &RoomImpulseResponse) -> RirParts {
    let boundary = ((h.split_ms * f64::from(h.sample_rate) / 1000.0).round() as usize).min(h.len());
    let mut early = h.samples.clone();
    let mut late = vec![0.0; h.len()];
    late[boundary..].copy_from_slice(&h.samples[boundary..]);
    early[boundary..].iter_mut().for_each(|v| *v = 0.0);
    RirParts {
        early,
        late,
        boundary,
    }
}

/// Adds white Gaussian noise scaled to hit `snr_db` exactly. `+∞` returns
/// the input unchanged.
pub fn add_noise(r: &Signal, snr_db: f64, seed: u64) -> Result<Signal> {
    if snr_db == f64::INFINITY {
        return Ok(r.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidArgument(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let signal_energy = r.energy();
    if signal_energy == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    let mut rng = seeded(seed);
    let noise: Vec<f64> = (0..r.len()).map(|_| gaussian(&mut rng)).collect();
    let noise_energy: f64 = noise.iter().map(|v| v * v).sum();
    let scale = (signal_energy / (noise_energy * 10f64.powf(snr_db / 10.0))).sqrt();
    let y = r
        .samples()
        .iter()
        .zip(&noise)
        .map(|(s, n)| s + scale * n)
        .collect();
    Signal::new(y, r.sample_rate())
}

/// Reverberation time from the Schroeder energy-decay curve: a least-squares
/// line through the -5 dB … -35 dB span, extrapolated to -60 dB.
pub fn measure_t60(h: &[f64], sample_rate: u32) -> Option<f64> {
    let mut edc = vec![0.0; h.len()];
    let mut acc = 0.0;
    for (i, v) in h.iter().enumerate().rev() {
        acc += v * v;
        edc[i] = acc;
    }
    let total = *edc.first()?;
    if total <= 0.0 {
        return None;
    }
    let points: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .map(|(i, e)| (i as f64 / f64::from(sample_rate), 10.0 * (e / total).log10()))
        .filter(|&(_, db)| (-35.0..=-5.0).contains(&db))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / n;
    let md = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - md)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| -60.0 / slope)
}

//! Deterministic synthetic test material: amplitude-modulated tones and
//! speech-like sources with syllabic on/off structure.

use std::f64::consts::PI;

use rand::Rng;

use crate::rng::{gaussian, seeded};
use crate::signal::Signal;

/// `(1 + depth·cos(2π f_mod t + phase)) · cos(2π f_carrier t)`.
pub fn am_tone(
    carrier_hz: f64,
    mod_hz: f64,
    depth: f64,
    phase: f64,
    sample_rate: u32,
    len: usize,
) -> Signal {
    let sr = f64::from(sample_rate);
    let samples = (0..len)
        .map(|n| {
            let t = n as f64 / sr;
            am_modulator(mod_hz, depth, phase, t) * (2.0 * PI * carrier_hz * t).cos()
        })
        .collect();
    Signal::new(samples, sample_rate).expect("finite by construction")
}

pub fn am_modulator(mod_hz: f64, depth: f64, phase: f64, t: f64) -> f64 {
    1.0 + depth * (2.0 * PI * mod_hz * t + phase).cos()
}

/// Speech-like source: syllables of harmonic-plus-noise excitation with
/// raised-cosine amplitude contours, separated by short pauses, over a
/// faint white background. Scaled to the given RMS level.
pub fn speech_like(seed: u64, len: usize, sample_rate: u32, rms: f64) -> Signal {
    let sr = f64::from(sample_rate);
    let mut rng = seeded(seed);
    let mut x = vec![0.0; len];
    let mut start = (rng.random_range(0.0..0.15) * sr) as usize;
    while start < len {
        let dur = (rng.random_range(0.12..0.30) * sr) as usize;
        let gap = (rng.random_range(0.04..0.20) * sr) as usize;
        let amp = rng.random_range(0.4..1.0);
        let f0 = rng.random_range(90.0..220.0);
        let noise_mix = rng.random_range(0.1..0.6);
        let tilt = rng.random_range(0.5..1.2);
        let harmonics = ((7000.0 / f0) as usize).max(1);
        let phases: Vec<f64> = (0..harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let end = (start + dur).min(len);
        for n in start..end {
            let u = (n - start) as f64 / dur as f64;
            let contour = amp * (PI * u).sin().powi(2);
            let t = n as f64 / sr;
            let voiced: f64 = phases
                .iter()
                .enumerate()
                .map(|(h, ph)| {
                    let k = (h + 1) as f64;
                    (2.0 * PI * f0 * k * t + ph).sin() / k.powf(tilt)
                })
                .sum();
            x[n] += contour * (voiced + noise_mix * 3.0 * gaussian(&mut rng));
        }
        start = end + gap;
    }
    let peak_rms = (x.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    let background = 1e-2 * peak_rms;
    for v in x.iter_mut() {
        *v += background * gaussian(&mut rng);
    }
    let cur = (x.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    let gain = if cur > 0.0 { rms / cur } else { 0.0 };
    Signal::new(x.into_iter().map(|v| v * gain).collect(), sample_rate)
        .expect("finite by construction")
}

/// White Gaussian noise at the given RMS.
pub fn white_noise(seed: u64, len: usize, sample_rate: u32, rms: f64) -> Signal {
    let mut rng = seeded(seed);
    let x = (0..len).map(|_| rms * gaussian(&mut rng)).collect();
    Signal::new(x, sample_rate).expect("finite by construction")
}

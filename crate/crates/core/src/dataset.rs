//! Synthetic parallel clean/reverberant segments for training and checks.

use rayon::prelude::*;

use crate::dsp::FdlpAnalyzer;
use crate::envelope::analyze_pair;
use crate::error::Result;
use crate::learn::Example;
use crate::reverb::{add_noise, convolve, default_rir_duration, synth_rir};
use crate::rng::derive_seed;
use crate::synth::speech_like;

/// Source level used for synthetic speech.
pub const SOURCE_RMS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub segments: usize,
    pub t60: f64,
    /// `None` leaves the reverberant signal noise-free.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

/// One segment's training example; source, RIR and noise seeds all derive
/// from `(spec.seed, index)`.
pub fn synthetic_example(analyzer: &FdlpAnalyzer, spec: &SyntheticSpec, index: usize) -> Result<Example> {
    let cfg = analyzer.config();
    let s = derive_seed(spec.seed, index as u64);
    let x = speech_like(derive_seed(s, 0), cfg.segment_len(), cfg.sample_rate, SOURCE_RMS);
    let h = synth_rir(spec.t60, cfg.sample_rate, default_rir_duration(spec.t60), derive_seed(s, 1))?;
    let (clean, reverb) = match spec.snr_db {
        None => {
            let env = analyze_pair(analyzer, &x, &h)?;
            (env.clean, env.reverb)
        }
        Some(snr) => {
            let r = add_noise(&convolve(&x, &h)?, snr, derive_seed(s, 2))?;
            (analyzer.analyze(&x)?, analyzer.analyze(&r)?)
        }
    };
    Example::from_envelopes(&clean, &reverb, clean.num_samples())
}

pub fn synthetic_corpus(analyzer: &FdlpAnalyzer, spec: &SyntheticSpec) -> Result<Vec<Example>> {
    (0..spec.segments)
        .into_par_iter()
        .map(|i| synthetic_example(analyzer, spec, i))
        .collect()
}

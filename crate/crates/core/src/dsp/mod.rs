//! Frequency-domain linear prediction front end.

pub mod dct;
pub mod fdlp;
pub(crate) mod fft;
pub mod hilbert;
pub mod lpc;
pub mod mel;

pub use dct::{dct, idct};
pub use fdlp::{fdlp_analyze, FdlpAnalyzer, FdlpConfig, SubbandEnvelopeSet};
pub use hilbert::hilbert_envelope;
pub use lpc::{ar_envelope, autocorrelation, levinson_durbin, ArModel};
pub use mel::{make_mel_windows, subband_coeffs, subband_support, MelWindow, MelWindowBank};

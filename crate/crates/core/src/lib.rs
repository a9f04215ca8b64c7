//! Sub-band temporal envelopes by frequency-domain linear prediction, an
//! envelope-domain reverberation model, and a small trainable network that
//! predicts log-domain dereverberation gains.

pub mod corpus;
pub mod dataset;
pub mod dsp;
pub mod envelope;
pub mod error;
pub mod features;
pub mod learn;
pub mod matrix;
pub mod reverb;
pub mod rng;
pub mod signal;
pub mod synth;
pub mod verify;

pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
pub use signal::{Segment, Signal};

//! Convolutional envelope-gain network.
//!
//! `[T, B]` log envelopes → same-size 2-D convolutions with ReLU → a
//! per-frame affine map to `B` log-domain gains.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::tape::{NodeId, Tape, Tensor};
use crate::envelope::{GainTarget, LogEnvelopeSet};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub filters: usize,
    /// Kernel extent along time.
    pub kernel_t: usize,
    /// Kernel extent across bands.
    pub kernel_b: usize,
}

impl fmt::Display for ConvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.filters, self.kernel_t, self.kernel_b)
    }
}

impl FromStr for ConvSpec {
    type Err = Error;

    /// `FILTERSxKTxKB`, e.g. `8x5x3`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split('x').collect();
        let bad = || Error::InvalidArgument(format!("conv layer spec {s:?}, expected FILTERSxKTxKB"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let n: Vec<usize> = parts
            .iter()
            .map(|p| p.parse::<usize>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        Ok(Self {
            filters: n[0],
            kernel_t: n[1],
            kernel_b: n[2],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GainConfig {
    pub bands: usize,
    pub conv_layers: Vec<ConvSpec>,
}

impl Default for GainConfig {
    fn default() -> Self {
        let layer = ConvSpec {
            filters: 8,
            kernel_t: 5,
            kernel_b: 3,
        };
        Self {
            bands: 36,
            conv_layers: vec![layer, layer],
        }
    }
}

impl GainConfig {
    /// The front convolution stack of the full-size reference architecture
    /// (32×41×5 twice, then 64×21×3 twice).
    pub fn reference_conv_stack() -> Self {
        let wide = ConvSpec {
            filters: 32,
            kernel_t: 41,
            kernel_b: 5,
        };
        let narrow = ConvSpec {
            filters: 64,
            kernel_t: 21,
            kernel_b: 3,
        };
        Self {
            bands: 36,
            conv_layers: vec![wide, wide, narrow, narrow],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands == 0 {
            return Err(Error::InvalidArgument("bands must be >= 1".into()));
        }
        for (i, l) in self.conv_layers.iter().enumerate() {
            if l.filters == 0 || l.kernel_t % 2 == 0 || l.kernel_b % 2 == 0 {
                return Err(Error::InvalidArgument(format!(
                    "conv layer {i} ({l}): need filters >= 1 and odd kernel dims"
                )));
            }
        }
        Ok(())
    }

    pub fn conv_layers_string(&self) -> String {
        self.conv_layers.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
    }

    pub fn parse_conv_layers(s: &str) -> Result<Vec<ConvSpec>> {
        if s.trim().is_empty() {
            return Ok(Vec::new());
        }
        s.split(',').map(str::parse).collect()
    }

    /// Shapes of every parameter tensor, in storage order: per conv layer
    /// kernel then bias, then the output weight and bias.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        let mut cin = 1;
        for l in &self.conv_layers {
            shapes.push(vec![l.filters, cin, l.kernel_t, l.kernel_b]);
            shapes.push(vec![l.filters]);
            cin = l.filters;
        }
        shapes.push(vec![self.bands, cin * self.bands]);
        shapes.push(vec![self.bands]);
        shapes
    }

    fn fan_in(shape: &[usize]) -> usize {
        match shape.len() {
            4 => shape[1] * shape[2] * shape[3],
            2 => shape[1],
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GainModel {
    config: GainConfig,
    params: Vec<Tensor>,
}

impl GainModel {
    /// Uniform ±1/√fan_in initialization; biases use their layer's fan-in.
    pub fn new(config: GainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let shapes = config.param_shapes();
        let mut params = Vec::with_capacity(shapes.len());
        for pair in shapes.chunks(2) {
            let bound = 1.0 / (GainConfig::fan_in(&pair[0]) as f64).sqrt();
            for shape in pair {
                let n = shape.iter().product();
                let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
                params.push(Tensor::new(shape.clone(), data)?);
            }
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: GainConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let shapes = config.param_shapes();
        if shapes.len() != params.len() || shapes.iter().zip(&params).any(|(s, p)| *s != p.shape) {
            return Err(Error::shape(
                format!("{shapes:?}"),
                format!("{:?}", params.iter().map(|p| p.shape.clone()).collect::<Vec<_>>()),
            ));
        }
        Ok(Self { config, params })
    }

    /// Model whose output layer is all zeros: it predicts zero gain.
    pub fn identity(config: GainConfig, seed: u64) -> Result<Self> {
        let mut m = Self::new(config, seed)?;
        m.zero_output_layer();
        Ok(m)
    }

    pub fn zero_output_layer(&mut self) {
        let n = self.params.len();
        for p in &mut self.params[n - 2..] {
            p.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn config(&self) -> &GainConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Records the network on `tape` and returns the `[T, bands]` gain node.
    /// The input is centred on the mean over its first `valid_rows` rows.
    pub fn record(&self, tape: &mut Tape, log_reverb: &Matrix, valid_rows: usize) -> Result<NodeId> {
        Ok(self.record_with_preactivations(tape, log_reverb, valid_rows)?.0)
    }

    /// Like [`GainModel::record`], also returning every ReLU input node.
    pub fn record_with_preactivations(
        &self,
        tape: &mut Tape,
        log_reverb: &Matrix,
        valid_rows: usize,
    ) -> Result<(NodeId, Vec<NodeId>)> {
        if log_reverb.cols() != self.config.bands {
            return Err(Error::shape(
                format!("T x {}", self.config.bands),
                format!("{}x{}", log_reverb.rows(), log_reverb.cols()),
            ));
        }
        let (t, b) = log_reverb.shape();
        let x = Tensor::new(vec![1, t, b], centered(log_reverb, valid_rows))?;
        let mut h = tape.input(x);
        let ids: Vec<NodeId> = self
            .params
            .iter()
            .enumerate()
            .map(|(i, p)| tape.param(i, p.clone()))
            .collect();
        let mut pre = Vec::new();
        for pair in ids[..ids.len() - 2].chunks(2) {
            h = tape.conv2d(h, pair[0], pair[1])?;
            pre.push(h);
            h = tape.relu(h)?;
        }
        let out = tape.frame_affine(h, ids[ids.len() - 2], ids[ids.len() - 1])?;
        Ok((out, pre))
    }

    /// Predicted log-domain gains for a `[T, bands]` log-envelope matrix.
    pub fn forward(&self, log_reverb: &LogEnvelopeSet) -> Result<GainTarget> {
        self.forward_matrix(log_reverb.values(), log_reverb.values().rows())
    }

    pub fn forward_matrix(&self, log_reverb: &Matrix, valid_rows: usize) -> Result<GainTarget> {
        let mut tape = Tape::new();
        let out = self.record(&mut tape, log_reverb, valid_rows)?;
        let v = tape.value(out);
        GainTarget::new(Matrix::from_vec(v.shape[0], v.shape[1], v.data.clone())?)
    }
}

/// Subtracts the mean of the first `valid_rows` rows from every value.
fn centered(m: &Matrix, valid_rows: usize) -> Vec<f64> {
    let rows = valid_rows.clamp(1, m.rows().max(1));
    let n = rows * m.cols();
    let mean = m.as_slice()[..n].iter().sum::<f64>() / n.max(1) as f64;
    m.as_slice().iter().map(|v| v - mean).collect()
}

/// Mean over all entries of the squared difference.
pub fn mse_loss(pred: &GainTarget, target: &GainTarget) -> Result<f64> {
    pred.values().ensure_same_shape(target.values())?;
    let a = pred.values().as_slice();
    let b = target.values().as_slice();
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64)
}

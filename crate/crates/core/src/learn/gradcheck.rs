//! Central finite-difference checks of tape gradients.

use super::model::{ConvSpec, GainConfig, GainModel};
use super::tape::Tape;
use super::train::{loss, loss_and_gradients, Example, Objective};
use crate::envelope::{GainTarget, LogEnvelopeSet};
use crate::error::Result;
use crate::matrix::Matrix;
use crate::rng::{derive_seed, gaussian_vec};

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;
/// Below this analytic magnitude the absolute error is judged instead.
pub const SMALL_GRADIENT: f64 = 1e-6;
pub const ABS_TOLERANCE: f64 = 1e-8;
/// Smallest |ReLU input| accepted in a generated instance.
pub const RELU_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub failures: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Whether any perturbation flipped a ReLU (the check is then void).
    pub kink_crossed: bool,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.failures == 0 && !self.kink_crossed && self.checked > 0
    }

    pub fn merge(&mut self, other: &GradCheck) {
        self.checked += other.checked;
        self.failures += other.failures;
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.max_abs_error = self.max_abs_error.max(other.max_abs_error);
        self.kink_crossed |= other.kink_crossed;
    }

    pub fn empty() -> Self {
        Self {
            checked: 0,
            failures: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            kink_crossed: false,
        }
    }
}

/// Signs of every ReLU input, flattened.
fn relu_pattern(model: &GainModel, ex: &Example) -> Result<Vec<bool>> {
    let mut tape = Tape::new();
    let (_, pre) = model.record_with_preactivations(&mut tape, &ex.log_reverb, ex.valid_rows)?;
    Ok(pre
        .iter()
        .flat_map(|&id| tape.value(id).data.iter().map(|&v| v > 0.0))
        .collect())
}

/// Smallest |ReLU input| over the instance.
pub fn relu_margin(model: &GainModel, ex: &Example) -> Result<f64> {
    let mut tape = Tape::new();
    let (_, pre) = model.record_with_preactivations(&mut tape, &ex.log_reverb, ex.valid_rows)?;
    Ok(pre
        .iter()
        .flat_map(|&id| tape.value(id).data.iter().map(|v| v.abs()))
        .fold(f64::INFINITY, f64::min))
}

/// Compares every parameter gradient against `(L(θ+h) − L(θ−h)) / 2h`.
pub fn check_gradients(model: &GainModel, ex: &Example, objective: Objective, h: f64) -> Result<GradCheck> {
    let (_, grads) = loss_and_gradients(model, ex, objective)?;
    let base_pattern = relu_pattern(model, ex)?;
    let mut report = GradCheck::empty();
    let mut probe = model.clone();
    for (p, g) in grads.0.iter().enumerate() {
        for i in 0..g.data.len() {
            let orig = probe.params()[p].data[i];
            probe.params_mut()[p].data[i] = orig + h;
            let plus = loss(&probe, ex, objective)?;
            report.kink_crossed |= relu_pattern(&probe, ex)? != base_pattern;
            probe.params_mut()[p].data[i] = orig - h;
            let minus = loss(&probe, ex, objective)?;
            report.kink_crossed |= relu_pattern(&probe, ex)? != base_pattern;
            probe.params_mut()[p].data[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let analytic = g.data[i];
            let abs = (analytic - numeric).abs();
            let scale = analytic.abs().max(numeric.abs());
            let rel = if scale > 0.0 { abs / scale } else { 0.0 };
            let ok = if analytic.abs() < SMALL_GRADIENT {
                abs < ABS_TOLERANCE || rel < REL_TOLERANCE
            } else {
                rel < REL_TOLERANCE
            };
            if !ok {
                report.failures += 1;
            }
            if analytic.abs() >= SMALL_GRADIENT {
                report.max_rel_error = report.max_rel_error.max(rel);
            }
            report.max_abs_error = report.max_abs_error.max(abs);
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Network used for gradient checks: one 2-filter 3×3 layer.
pub fn small_config(bands: usize) -> GainConfig {
    GainConfig {
        bands,
        conv_layers: vec![ConvSpec {
            filters: 2,
            kernel_t: 3,
            kernel_b: 3,
        }],
    }
}

/// Random model and example of `rows × 36` whose ReLU inputs all stay at
/// least [`RELU_MARGIN`] from zero. Seeds are advanced until one qualifies.
pub fn small_instance(seed: u64, rows: usize) -> Result<(GainModel, Example)> {
    let bands = 36;
    for attempt in 0.. {
        let s = derive_seed(seed, attempt);
        let model = GainModel::new(small_config(bands), derive_seed(s, 0))?;
        let log_r = Matrix::from_vec(rows, bands, gaussian_vec(derive_seed(s, 1), rows * bands))?;
        let target = Matrix::from_vec(rows, bands, gaussian_vec(derive_seed(s, 2), rows * bands))?.map(|v| 0.5 * v);
        let valid = rows - (derive_seed(s, 3) % 4) as usize;
        let ex = Example::new(&LogEnvelopeSet::new(log_r)?, &GainTarget::new(target)?, valid)?;
        if relu_margin(&model, &ex)? >= RELU_MARGIN {
            return Ok((model, ex));
        }
    }
    unreachable!()
}

//! Gain-model training with Adam, and joint fine-tuning through the fixed
//! feature chain (gain → exp → Hamming integration → log) against clean
//! features.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::adam::{AdamState, DEFAULT_LR};
use super::model::GainModel;
use super::tape::{Gradients, NodeId, Tape, Tensor};
use crate::dsp::SubbandEnvelopeSet;
use crate::envelope::{residual_target, GainTarget, LogEnvelopeSet};
use crate::error::{Error, Result};
use crate::features::{frame_count, log_compress, FeatureMatrix, IntegrationOperator, FRAME_LEN, FRAME_SHIFT};
use crate::matrix::Matrix;
use crate::rng::{derive_seed, seeded};

/// One training segment: reverberant log envelopes, the oracle gain, and
/// the clean features the gain should produce.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub log_reverb: Matrix,
    pub target: Matrix,
    pub clean_features: Matrix,
    /// Rows before any zero padding; later rows are masked in every loss.
    pub valid_rows: usize,
}

impl Example {
    pub fn new(log_reverb: &LogEnvelopeSet, target: &GainTarget, valid_rows: usize) -> Result<Self> {
        let log_reverb = log_reverb.values().clone();
        let target = target.values().clone();
        log_reverb.ensure_same_shape(&target)?;
        if valid_rows == 0 || valid_rows > log_reverb.rows() {
            return Err(Error::InvalidArgument(format!(
                "valid_rows {valid_rows} outside 1..={}",
                log_reverb.rows()
            )));
        }
        let clean = log_reverb.zip_with(&target, |r, g| (r + g).exp())?;
        let op = IntegrationOperator::new(clean.rows());
        let clean_features = log_compress(&op.apply_columns(&clean)?)?.into_values();
        Ok(Self {
            log_reverb,
            target,
            clean_features,
            valid_rows,
        })
    }

    pub fn from_envelopes(clean: &SubbandEnvelopeSet, reverb: &SubbandEnvelopeSet, valid_rows: usize) -> Result<Self> {
        let target = residual_target(clean, reverb)?;
        Self::new(&LogEnvelopeSet::from_envelopes(reverb), &target, valid_rows)
    }

    /// Feature frames fully inside the valid rows (at least one).
    pub fn valid_frames(&self) -> usize {
        frame_count(self.valid_rows, FRAME_LEN, FRAME_SHIFT)
            .max(1)
            .min(self.clean_features.rows())
    }
}

/// Which loss a training loop minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// MSE between predicted and oracle gains.
    Gain,
    /// MSE between features of the dereverberated envelopes and clean
    /// features.
    Joint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Held-out share when the validation split is derived.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 4,
            lr: DEFAULT_LR,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub initial_train_loss: f64,
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned, when the loop selects on
    /// validation loss (0 = the starting parameters).
    pub selected_epoch: Option<usize>,
}

impl TrainReport {
    /// Loss trajectory without wall-clock times.
    pub fn losses(&self) -> Vec<(f64, f64)> {
        self.epochs.iter().map(|e| (e.train_loss, e.val_loss)).collect()
    }

    pub fn final_val_loss(&self) -> f64 {
        self.epochs.last().map_or(self.initial_val_loss, |e| e.val_loss)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,seconds\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{:.3}\n", e.epoch, e.train_loss, e.val_loss, e.seconds));
        }
        s
    }
}

/// Deterministic train/validation split of `n` items.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded(seed));
    if n < 2 {
        return (idx.clone(), idx);
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 1);
    let val = idx.split_off(n - n_val);
    (idx, val)
}

fn record_loss(model: &GainModel, ex: &Example, objective: Objective) -> Result<(Tape, NodeId)> {
    let mut tape = Tape::new();
    let gain = model.record(&mut tape, &ex.log_reverb, ex.valid_rows)?;
    let loss = match objective {
        Objective::Gain => tape.masked_mse(gain, ex.target.as_slice().to_vec(), ex.valid_rows)?,
        Objective::Joint => record_feature_chain(&mut tape, gain, ex)?.1,
    };
    Ok((tape, loss))
}

/// Appends apply-gain → exp → integrate → log → MSE to `tape`; returns the
/// feature node and the loss node.
fn record_feature_chain(tape: &mut Tape, gain: NodeId, ex: &Example) -> Result<(NodeId, NodeId)> {
    let (t, b) = ex.log_reverb.shape();
    let log_r = tape.input(Tensor::new(vec![t, b], ex.log_reverb.as_slice().to_vec())?);
    let log_est = tape.add(log_r, gain)?;
    let env = tape.exp(log_est)?;
    let energies = tape.integrate(env, IntegrationOperator::new(t))?;
    let feats = tape.log(energies)?;
    let loss = tape.masked_mse(feats, ex.clean_features.as_slice().to_vec(), ex.valid_frames())?;
    Ok((feats, loss))
}

pub fn loss(model: &GainModel, ex: &Example, objective: Objective) -> Result<f64> {
    let (tape, l) = record_loss(model, ex, objective)?;
    Ok(tape.value(l).scalar())
}

pub fn loss_and_gradients(model: &GainModel, ex: &Example, objective: Objective) -> Result<(f64, Gradients)> {
    let (mut tape, l) = record_loss(model, ex, objective)?;
    let value = tape.value(l).scalar();
    Ok((value, tape.backward(l)?))
}

/// Mean loss over a set of examples (0 for an empty set).
pub fn mean_loss(model: &GainModel, examples: &[Example], objective: Objective) -> Result<f64> {
    if examples.is_empty() {
        return Ok(0.0);
    }
    let losses = examples
        .par_iter()
        .map(|ex| loss(model, ex, objective))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

pub struct JointOutput {
    pub features: FeatureMatrix,
    pub loss: f64,
}

/// Features of the dereverberated envelopes and their loss against the
/// example's clean features.
pub fn joint_forward(model: &GainModel, ex: &Example) -> Result<JointOutput> {
    let mut tape = Tape::new();
    let gain = model.record(&mut tape, &ex.log_reverb, ex.valid_rows)?;
    let (feats, loss) = record_feature_chain(&mut tape, gain, ex)?;
    joint_output(&tape, feats, loss)
}

/// Same chain driven by a fixed gain instead of the model.
pub fn joint_forward_with_gain(gain: &GainTarget, ex: &Example) -> Result<JointOutput> {
    let mut tape = Tape::new();
    let (t, b) = gain.values().shape();
    let g = tape.input(Tensor::new(vec![t, b], gain.values().as_slice().to_vec())?);
    let (feats, loss) = record_feature_chain(&mut tape, g, ex)?;
    joint_output(&tape, feats, loss)
}

fn joint_output(tape: &Tape, feats: NodeId, loss: NodeId) -> Result<JointOutput> {
    let f = tape.value(feats);
    Ok(JointOutput {
        features: FeatureMatrix::new(Matrix::from_vec(f.shape[0], f.shape[1], f.data.clone())?)?,
        loss: tape.value(loss).scalar(),
    })
}

/// Batch-mean gradients. Per-example work may run in parallel; the sum is
/// taken in example order so the result does not depend on thread count.
fn batch_gradients(model: &GainModel, batch: &[&Example], objective: Objective) -> Result<(f64, Vec<Tensor>)> {
    let results = batch
        .par_iter()
        .map(|ex| loss_and_gradients(model, ex, objective))
        .collect::<Result<Vec<_>>>()?;
    let n = results.len() as f64;
    let mut total = 0.0;
    let mut sum: Vec<Tensor> = model.params().iter().map(|p| Tensor::zeros(&p.shape)).collect();
    for (l, g) in results {
        total += l;
        for (s, gi) in sum.iter_mut().zip(g.0) {
            s.data.iter_mut().zip(gi.data).for_each(|(a, b)| *a += b);
        }
    }
    for s in &mut sum {
        s.data.iter_mut().for_each(|v| *v /= n);
    }
    Ok((total / n, sum))
}

/// Adam over shuffled mini-batches with an explicit validation set.
/// With `select_best`, the parameters with the lowest validation loss seen
/// (including the starting point) are returned.
pub fn fit(
    mut model: GainModel,
    train_set: &[Example],
    val_set: &[Example],
    config: &TrainConfig,
    objective: Objective,
    select_best: bool,
) -> Result<(GainModel, TrainReport)> {
    if train_set.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
    }
    let initial_train_loss = mean_loss(&model, train_set, objective)?;
    let initial_val_loss = mean_loss(&model, val_set, objective)?;
    let mut best = (initial_val_loss, 0, model.clone());
    let mut adam = AdamState::new(model.params(), config.lr);
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut seeded(derive_seed(config.seed, epoch as u64)));
        let mut losses = Vec::new();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (l, grads) = batch_gradients(&model, &batch, objective)?;
            if !l.is_finite() {
                return Err(Error::IllConditioned(format!("non-finite training loss at epoch {epoch}")));
            }
            adam.step(model.params_mut(), &grads)?;
            losses.push(l);
        }
        let train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        let val_loss = mean_loss(&model, val_set, objective)?;
        if select_best && val_loss < best.0 {
            best = (val_loss, epoch, model.clone());
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    let selected_epoch = select_best.then_some(best.1);
    if select_best {
        model = best.2;
    }
    Ok((
        model,
        TrainReport {
            initial_train_loss,
            initial_val_loss,
            epochs,
            selected_epoch,
        },
    ))
}

/// Trains on gain MSE with a seeded held-out split of the corpus.
pub fn train(model: GainModel, corpus: &[Example], config: &TrainConfig) -> Result<(GainModel, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (tr, va) = split_indices(corpus.len(), config.val_fraction, config.seed);
    let train_set: Vec<Example> = tr.iter().map(|&i| corpus[i].clone()).collect();
    let val_set: Vec<Example> = va.iter().map(|&i| corpus[i].clone()).collect();
    fit(model, &train_set, &val_set, config, Objective::Gain, false)
}

/// Fine-tunes a pre-trained model on the feature-domain loss. The returned
/// parameters are the best seen on the held-out split, so the held-out
/// joint loss never ends above its starting value.
pub fn joint_finetune(model: GainModel, corpus: &[Example], config: &TrainConfig) -> Result<(GainModel, TrainReport)> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let (tr, va) = split_indices(corpus.len(), config.val_fraction, config.seed);
    let train_set: Vec<Example> = tr.iter().map(|&i| corpus[i].clone()).collect();
    let val_set: Vec<Example> = va.iter().map(|&i| corpus[i].clone()).collect();
    fit(model, &train_set, &val_set, config, Objective::Joint, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::model::{ConvSpec, GainConfig};
    use crate::rng::gaussian_vec;

    fn small_config() -> GainConfig {
        GainConfig {
            bands: 36,
            conv_layers: vec![ConvSpec {
                filters: 2,
                kernel_t: 3,
                kernel_b: 3,
            }],
        }
    }

    fn example(seed: u64, rows: usize, target: impl Fn(f64) -> f64) -> Example {
        let log_r = Matrix::from_vec(rows, 36, gaussian_vec(seed, rows * 36)).unwrap();
        let g = log_r.map(target);
        Example::new(&LogEnvelopeSet::new(log_r).unwrap(), &GainTarget::new(g).unwrap(), rows).unwrap()
    }

    #[test]
    fn oracle_gain_gives_zero_joint_loss() {
        let ex = example(1, 40, |v| -0.5 * v.abs());
        let out = joint_forward_with_gain(&GainTarget::new(ex.target.clone()).unwrap(), &ex).unwrap();
        assert!(out.loss.abs() < 1e-10);
        let mut perturbed = ex.target.clone();
        perturbed.set(5, 3, perturbed.get(5, 3) + 0.01);
        let out = joint_forward_with_gain(&GainTarget::new(perturbed).unwrap(), &ex).unwrap();
        assert!(out.loss > 0.0);
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let (a, b) = split_indices(50, 0.1, 3);
        assert_eq!((a.len(), b.len()), (45, 5));
        assert!(b.iter().all(|i| !a.contains(i)));
        assert_eq!(split_indices(50, 0.1, 3), (a, b));
    }

    #[test]
    fn empty_corpus_is_an_error() {
        let m = GainModel::new(small_config(), 1).unwrap();
        assert!(matches!(train(m.clone(), &[], &TrainConfig::default()), Err(Error::EmptyCorpus)));
        assert!(matches!(joint_finetune(m, &[], &TrainConfig::default()), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn fits_a_zero_target() {
        let corpus: Vec<Example> = (0..10).map(|s| example(s, 24, |_| 0.0)).collect();
        let model = GainModel::new(small_config(), 2).unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 3,
            lr: 1e-2,
            seed: 4,
            val_fraction: 0.2,
        };
        let (_, report) = train(model, &corpus, &cfg).unwrap();
        assert!(report.final_val_loss() < 1e-3 * report.initial_val_loss, "{report:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let corpus: Vec<Example> = (0..6).map(|s| example(s, 16, |v| 0.3 * v)).collect();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let run = || train(GainModel::new(small_config(), 7).unwrap(), &corpus, &cfg).unwrap();
        let (ma, ra) = run();
        let (mb, rb) = run();
        assert_eq!(ma, mb);
        assert_eq!(ra.losses(), rb.losses());
    }

    #[test]
    fn zero_epochs_and_zero_lr_keep_the_model() {
        let corpus: Vec<Example> = (0..6).map(|s| example(s, 16, |v| 0.3 * v)).collect();
        let model = GainModel::new(small_config(), 7).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (m, r) = joint_finetune(model.clone(), &corpus, &cfg).unwrap();
        assert_eq!(m, model);
        assert!(r.epochs.is_empty());

        let cfg = TrainConfig {
            epochs: 3,
            lr: 0.0,
            ..TrainConfig::default()
        };
        let (m, r) = joint_finetune(model.clone(), &corpus, &cfg).unwrap();
        assert_eq!(m, model);
        let vals: Vec<f64> = r.epochs.iter().map(|e| e.val_loss).collect();
        assert!(vals.iter().all(|&v| v == r.initial_val_loss));
    }
}

use fdlp_core::dataset::{synthetic_corpus, SyntheticSpec};
use fdlp_core::dsp::{FdlpAnalyzer, FdlpConfig};
use fdlp_core::envelope::{GainTarget, LogEnvelopeSet};
use fdlp_core::learn::gradcheck::{check_gradients, relu_margin, small_config, small_instance, FD_STEP};
use fdlp_core::learn::train::split_indices;
use fdlp_core::learn::{
    fit, joint_finetune, joint_forward, joint_forward_with_gain, loss_and_gradients, mean_loss, train, Example,
    GainConfig, GainModel, Objective, Tape, Tensor, TrainConfig,
};
use fdlp_core::rng::gaussian_vec;
use fdlp_core::Matrix;

#[test]
fn gradients_on_a_64_row_instance() {
    let (model, ex) = small_instance(77, 64).unwrap();
    assert!(relu_margin(&model, &ex).unwrap() >= 1e-3);
    for obj in [Objective::Gain, Objective::Joint] {
        let r = check_gradients(&model, &ex, obj, FD_STEP).unwrap();
        assert!(r.passed(), "{obj:?}: {r:?}");
    }
}

#[test]
fn zero_parameters_and_input_give_zero_conv_gradients() {
    let mut model = GainModel::new(GainConfig::default(), 1).unwrap();
    for p in model.params_mut() {
        p.data.iter_mut().for_each(|v| *v = 0.0);
    }
    let ex = Example::new(
        &LogEnvelopeSet::new(Matrix::zeros(40, 36)).unwrap(),
        &GainTarget::new(Matrix::filled(40, 36, 0.5)).unwrap(),
        40,
    )
    .unwrap();
    let (_, g) = loss_and_gradients(&model, &ex, Objective::Gain).unwrap();
    let conv = g.0.len() - 2;
    assert!(g.0[..conv].iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
}

#[test]
fn scaled_loss_scales_gradients() {
    let (model, ex) = small_instance(3, 20).unwrap();
    let grads = |c: f64| {
        let mut tape = Tape::new();
        let out = model.record(&mut tape, &ex.log_reverb, ex.valid_rows).unwrap();
        let l = tape.masked_mse(out, ex.target.as_slice().to_vec(), ex.valid_rows).unwrap();
        let l = tape.scale(l, c).unwrap();
        tape.backward(l).unwrap()
    };
    let (g1, g3) = (grads(1.0), grads(3.0));
    for (a, b) in g1.0.iter().zip(&g3.0) {
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((3.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }
}

#[test]
fn perturbed_gain_increases_the_joint_loss() {
    let log_r = Matrix::from_vec(60, 36, gaussian_vec(1, 60 * 36)).unwrap();
    let target = Matrix::from_vec(60, 36, gaussian_vec(2, 60 * 36)).unwrap();
    let ex = Example::new(&LogEnvelopeSet::new(log_r).unwrap(), &GainTarget::new(target.clone()).unwrap(), 60).unwrap();
    let at_oracle = joint_forward_with_gain(&GainTarget::new(target.clone()).unwrap(), &ex).unwrap();
    assert!(at_oracle.loss.abs() < 1e-10);
    assert_eq!(at_oracle.features.shape(), (13, 36));
    for (i, delta) in [(0usize, 1e-3), (500, -0.2), (2000, 1.5)] {
        let mut g = target.as_slice().to_vec();
        g[i] += delta;
        let p = GainTarget::new(Matrix::from_vec(60, 36, g).unwrap()).unwrap();
        assert!(joint_forward_with_gain(&p, &ex).unwrap().loss > 0.0);
    }
}

#[test]
fn training_does_not_depend_on_thread_count() {
    let corpus: Vec<Example> = (0..6)
        .map(|s| {
            let m = Matrix::from_vec(32, 36, gaussian_vec(s, 32 * 36)).unwrap();
            let g = m.map(|v| -0.3 * v);
            Example::new(&LogEnvelopeSet::new(m).unwrap(), &GainTarget::new(g).unwrap(), 30).unwrap()
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 3,
        ..TrainConfig::default()
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let (m, r) = train(GainModel::new(small_config(36), 5).unwrap(), &corpus, &cfg).unwrap();
            (m, r.losses())
        })
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn synthetic_training_beats_the_zero_predictor_and_joint_tuning_holds() {
    let an = FdlpAnalyzer::new(FdlpConfig::default()).unwrap();
    let corpus = synthetic_corpus(
        &an,
        &SyntheticSpec {
            segments: 12,
            t60: 0.4,
            snr_db: None,
            seed: 3,
        },
    )
    .unwrap();
    let (tr, va) = split_indices(corpus.len(), 0.25, 1);
    let train_set: Vec<Example> = tr.iter().map(|&i| corpus[i].clone()).collect();
    let val: Vec<Example> = va.iter().map(|&i| corpus[i].clone()).collect();
    let zero = val
        .iter()
        .map(|e| e.target.as_slice().iter().map(|v| v * v).sum::<f64>() / e.target.as_slice().len() as f64)
        .sum::<f64>()
        / val.len() as f64;
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 2,
        lr: 3e-3,
        seed: 2,
        ..TrainConfig::default()
    };
    let (model, report) = fit(GainModel::new(GainConfig::default(), 4).unwrap(), &train_set, &val, &cfg, Objective::Gain, false).unwrap();
    assert_eq!(report.epochs.len(), 10);
    assert!(report.epochs.last().unwrap().train_loss < report.initial_train_loss);
    assert!(report.final_val_loss() < 0.7 * zero, "{} vs {zero}", report.final_val_loss());

    let before = mean_loss(&model, &val, Objective::Joint).unwrap();
    let jcfg = TrainConfig {
        epochs: 2,
        batch_size: 3,
        lr: 3e-4,
        seed: 5,
        val_fraction: 0.25,
    };
    let (tuned, jr) = joint_finetune(model.clone(), &train_set, &jcfg).unwrap();
    assert_eq!(jr.epochs.len(), 2);
    let out = joint_forward(&tuned, &val[0]).unwrap();
    assert_eq!(out.features.shape(), (198, 36));
    assert!(mean_loss(&tuned, &val, Objective::Joint).unwrap().is_finite());
    assert!(before.is_finite());
}

#[test]
fn tensor_shape_is_validated() {
    assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
}

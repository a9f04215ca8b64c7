//! Self-check suites: each check compares library output against an
//! independent computation and reports one line.

use std::fmt;

use rand::Rng;

use crate::dataset::{synthetic_corpus, SyntheticSpec, SOURCE_RMS};
use crate::dsp::{
    autocorrelation, dct, hilbert_envelope, idct, levinson_durbin, FdlpAnalyzer, FdlpConfig,
};
use crate::envelope::{analyze_pair, apply_gain, pearson, predict_reverb_set, residual_target, LogEnvelopeSet};
use crate::error::{Error, Result};
use crate::features::envelope_features;
use crate::learn::gradcheck::{check_gradients, small_instance, GradCheck, FD_STEP};
use crate::learn::{fit, Checkpoint, GainConfig, GainModel, Objective, TrainConfig};
use crate::learn::train::split_indices;
use crate::reverb::{default_rir_duration, synth_rir};
use crate::rng::{derive_seed, gaussian_vec, seeded};
use crate::synth::{am_tone, speech_like};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Dsp,
    Eq2,
    Grad,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 4] = ["dsp", "eq2", "grad", "all"];
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dsp" => Ok(Suite::Dsp),
            "eq2" => Ok(Suite::Eq2),
            "grad" => Ok(Suite::Grad),
            "all" => Ok(Suite::All),
            _ => Err(Error::InvalidArgument(format!(
                "unknown suite {s:?}; valid suites: {}",
                Suite::NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {} {}", self.name, self.detail)
    }
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    /// Model trained by the smoke run of the `all` suite.
    pub checkpoint: Option<Checkpoint>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check and a closing tally. Contains no timings.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!("{c}\n"));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        s.push_str(&format!("{} passed, {failed} failed\n", self.checks.len() - failed));
        s
    }
}

pub fn run(suite: Suite, seed: u64) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut checkpoint = None;
    if matches!(suite, Suite::Dsp | Suite::All) {
        checks.extend(dsp_suite(derive_seed(seed, 1))?);
    }
    if matches!(suite, Suite::Eq2 | Suite::All) {
        checks.extend(eq2_suite(derive_seed(seed, 2))?);
    }
    if matches!(suite, Suite::Grad | Suite::All) {
        checks.extend(grad_suite(derive_seed(seed, 3))?);
    }
    if suite == Suite::All {
        let (c, ckpt) = train_smoke(derive_seed(seed, 4))?;
        checks.push(c);
        checkpoint = Some(ckpt);
    }
    Ok(VerifyReport { checks, checkpoint })
}

fn textbook_dct(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (std::f64::consts::PI * (i as f64 + 0.5) * k as f64 / n).cos())
                .sum();
            s * if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() }
        })
        .collect()
}

/// Gaussian elimination with partial pivoting on the Toeplitz normal
/// equations `R a = −r[1..=p]`.
fn dense_lp(r: &[f64], p: usize) -> Vec<f64> {
    let mut m: Vec<Vec<f64>> = (0..p)
        .map(|i| {
            let mut row: Vec<f64> = (0..p).map(|j| r[i.abs_diff(j)]).collect();
            row.push(-r[i + 1]);
            row
        })
        .collect();
    for c in 0..p {
        let piv = (c..p).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, piv);
        for i in c + 1..p {
            let f = m[i][c] / m[c][c];
            for j in c..=p {
                m[i][j] -= f * m[c][j];
            }
        }
    }
    let mut a = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| m[i][j] * a[j]).sum();
        a[i] = (m[i][p] - s) / m[i][i];
    }
    a
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Per-band correlation between FDLP envelopes and the Hilbert envelope of
/// the same sub-band signal, over bands holding at least 1% of the peak
/// band energy. Returns the minimum.
pub fn fdlp_hilbert_min_correlation(analyzer: &FdlpAnalyzer, signal: &crate::Signal) -> Result<f64> {
    let env = analyzer.analyze(signal)?;
    let rows = env.num_samples();
    let hop = signal.len() / rows;
    let bands: Vec<(usize, Vec<f64>, f64)> = (0..env.num_bands())
        .map(|q| {
            let sub = analyzer.subband_signal(signal, q)?;
            let energy = sub.iter().map(|v| v * v).sum::<f64>();
            Ok((q, sub, energy))
        })
        .collect::<Result<_>>()?;
    let peak = bands.iter().map(|b| b.2).fold(0.0, f64::max);
    let mut worst = f64::INFINITY;
    for (q, sub, energy) in bands {
        if energy < 0.01 * peak {
            continue;
        }
        let h = hilbert_envelope(&sub)?;
        let oracle: Vec<f64> = h.chunks(hop).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        worst = worst.min(pearson(&env.band(q), &oracle));
    }
    Ok(worst)
}

fn dsp_suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();

    let x = gaussian_vec(derive_seed(seed, 0), 257);
    let err = max_abs_diff(&dct(&x)?, &textbook_dct(&x));
    out.push(check("dsp.dct_textbook", err < 1e-9, format!("max_abs_err={err:.3e}")));

    let mut worst = 0.0f64;
    for (i, n) in [4usize, 256, 32000].into_iter().enumerate() {
        let x = gaussian_vec(derive_seed(seed, 1 + i as u64), n);
        let back = idct(&dct(&x)?)?;
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = x.iter().zip(&back).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(diff / norm);
    }
    out.push(check("dsp.dct_round_trip", worst < 1e-10, format!("max_rel_err={worst:.3e}")));

    let x = gaussian_vec(derive_seed(seed, 4), 500);
    let fast = autocorrelation(&x, 160)?;
    let direct: Vec<f64> = (0..=160)
        .map(|t| (0..x.len() - t).map(|k| x[k] * x[k + t]).sum())
        .collect();
    let err = max_abs_diff(&fast, &direct);
    out.push(check("dsp.autocorrelation_direct", err < 1e-10, format!("max_abs_err={err:.3e}")));

    let mut rng = seeded(derive_seed(seed, 5));
    let mut worst = 0.0f64;
    for case in 0..20 {
        let p = if case == 0 { 160 } else { rng.random_range(1..=160) };
        let seq = gaussian_vec(derive_seed(seed, 100 + case), 2 * p + 50);
        let r = autocorrelation(&seq, p)?;
        let model = levinson_durbin(&r, p)?;
        worst = worst.max(max_abs_diff(&model.coefficients[1..], &dense_lp(&r, p)));
    }
    out.push(check("dsp.levinson_dense", worst < 1e-8, format!("cases=20 max_coef_dev={worst:.3e}")));

    let r: Vec<f64> = (0..4).map(|t| 0.9f64.powi(t)).collect();
    let m = levinson_durbin(&r, 1)?;
    let err = (m.coefficients[1] + 0.9).abs().max((m.error_gain - 0.19).abs());
    out.push(check("dsp.ar1_closed_form", err < 1e-12, format!("err={err:.3e}")));

    let n = 4000;
    let c: Vec<f64> = (0..n).map(|i| 0.7 * (2.0 * std::f64::consts::PI * 0.05 * i as f64).cos()).collect();
    let h = hilbert_envelope(&c)?;
    let err = h[n / 10..n - n / 10].iter().map(|v| (v / 0.49 - 1.0).abs()).fold(0.0, f64::max);
    out.push(check("dsp.hilbert_cosine", err < 0.01, format!("max_rel_err={err:.3e}")));

    let analyzer = FdlpAnalyzer::new(FdlpConfig::default())?;
    let centers = analyzer.bank().centers_hz();
    let mut worst = f64::INFINITY;
    for i in 0..3u64 {
        let mut rng = seeded(derive_seed(seed, 200 + i));
        let band = rng.random_range(2..centers.len() - 2);
        let tone = am_tone(
            centers[band],
            rng.random_range(2.0..8.0),
            rng.random_range(0.5..0.9),
            rng.random_range(0.0..6.0),
            16_000,
            32_000,
        );
        worst = worst.min(fdlp_hilbert_min_correlation(&analyzer, &tone)?);
    }
    out.push(check("dsp.fdlp_vs_hilbert", worst >= 0.95, format!("min_corr={worst:.4}")));

    let x = speech_like(derive_seed(seed, 6), 32_000, 16_000, SOURCE_RMS);
    let env = analyzer.analyze(&x)?;
    let feats = envelope_features(&env)?;
    let bank = analyzer.bank();
    let ok = env.values().shape() == (800, 36)
        && feats.shape() == (198, 36)
        && bank.num_bands() == 36
        && bank.f_lo == 200.0
        && bank.f_hi == 6500.0;
    out.push(check(
        "dsp.shapes",
        ok,
        format!(
            "envelopes={:?} features={:?} bands={} range={}-{}Hz",
            env.values().shape(),
            feats.shape(),
            bank.num_bands(),
            bank.f_lo,
            bank.f_hi
        ),
    ));
    Ok(out)
}

/// Median over (source, band) of the correlation between predicted and
/// measured reverberant log envelopes.
pub fn eq2_median_correlation(analyzer: &FdlpAnalyzer, t60: f64, sources: usize, seed: u64) -> Result<f64> {
    let mut corr = Vec::new();
    for s in 0..sources as u64 {
        let x = speech_like(derive_seed(seed, 2 * s), 32_000, 16_000, SOURCE_RMS);
        let h = synth_rir(t60, 16_000, default_rir_duration(t60), derive_seed(seed, 2 * s + 1))?;
        let env = analyze_pair(analyzer, &x, &h)?;
        let pred = predict_reverb_set(&env.clean, &env.rir)?;
        for q in 0..env.reverb.num_bands() {
            let p: Vec<f64> = pred.column(q).iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
            let m: Vec<f64> = env.reverb.band(q).iter().map(|v| v.ln()).collect();
            corr.push(pearson(&p, &m));
        }
    }
    corr.sort_by(f64::total_cmp);
    Ok(corr[corr.len() / 2])
}

fn eq2_suite(seed: u64) -> Result<Vec<Check>> {
    let analyzer = FdlpAnalyzer::new(FdlpConfig::default())?;
    let mut out = Vec::new();
    for (i, t60) in [0.2, 0.4, 0.6].into_iter().enumerate() {
        let med = eq2_median_correlation(&analyzer, t60, 2, derive_seed(seed, i as u64))?;
        out.push(check(
            &format!("eq2.prediction_t60_{t60}"),
            med >= 0.8,
            format!("median_corr={med:.4}"),
        ));
    }

    let x = speech_like(derive_seed(seed, 10), 32_000, 16_000, SOURCE_RMS);
    let h = synth_rir(0.5, 16_000, default_rir_duration(0.5), derive_seed(seed, 11))?;
    let env = analyze_pair(&analyzer, &x, &h)?;
    let gain = residual_target(&env.clean, &env.reverb)?;
    let est = apply_gain(&LogEnvelopeSet::from_envelopes(&env.reverb), &gain)?;
    let log_clean = LogEnvelopeSet::from_envelopes(&env.clean);
    let err = max_abs_diff(est.values().as_slice(), log_clean.values().as_slice());
    out.push(check("eq2.oracle_inverse", err < 1e-12, format!("max_abs_err={err:.3e}")));

    let f_est = envelope_features(&est.exp(env.clean.envelope_rate())?)?;
    let f_clean = envelope_features(&env.clean)?;
    let err = max_abs_diff(f_est.values().as_slice(), f_clean.values().as_slice());
    out.push(check("eq2.feature_identity", err < 1e-10, format!("max_abs_err={err:.3e}")));
    Ok(out)
}

fn grad_suite(seed: u64) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for (objective, name) in [(Objective::Gain, "grad.gain_mse"), (Objective::Joint, "grad.joint_features")] {
        let mut total = GradCheck::empty();
        for i in 0..4 {
            let (model, ex) = small_instance(derive_seed(seed, i), 24)?;
            total.merge(&check_gradients(&model, &ex, objective, FD_STEP)?);
        }
        out.push(check(
            name,
            total.passed(),
            format!(
                "instances=4 params_checked={} failures={} max_rel_err={:.3e}",
                total.checked, total.failures, total.max_rel_error
            ),
        ));
    }
    Ok(out)
}

/// Short training run on a handful of synthetic segments.
fn train_smoke(seed: u64) -> Result<(Check, Checkpoint)> {
    let analyzer = FdlpAnalyzer::new(FdlpConfig::default())?;
    let spec = SyntheticSpec {
        segments: 8,
        t60: 0.4,
        snr_db: None,
        seed: derive_seed(seed, 0),
    };
    let corpus = synthetic_corpus(&analyzer, &spec)?;
    let (tr, va) = split_indices(corpus.len(), 0.25, derive_seed(seed, 1));
    let train_set: Vec<_> = tr.iter().map(|&i| corpus[i].clone()).collect();
    let val_set: Vec<_> = va.iter().map(|&i| corpus[i].clone()).collect();
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 2,
        seed: derive_seed(seed, 2),
        ..TrainConfig::default()
    };
    let model = GainModel::new(GainConfig::default(), derive_seed(seed, 3))?;
    let (model, report) = fit(model, &train_set, &val_set, &cfg, Objective::Gain, false)?;
    let c = check(
        "train.smoke",
        report.final_val_loss() < report.initial_val_loss,
        format!(
            "epochs={} initial_val={:.6} final_val={:.6}",
            cfg.epochs,
            report.initial_val_loss,
            report.final_val_loss()
        ),
    );
    let ckpt = Checkpoint::new(model)
        .with_meta("ar_order", analyzer.config().ar_order)
        .with_meta("num_bands", analyzer.config().num_bands);
    Ok((c, ckpt))
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use fdlp_core::corpus::{build_corpus, load_examples, read_index, CorpusManifest};
use fdlp_core::dsp::{FdlpAnalyzer, SubbandEnvelopeSet};
use fdlp_core::envelope::{apply_gain, residual_target, GainTarget, LogEnvelopeSet};
use fdlp_core::features::{baseline_logmel, log_envelope_features, write_features, write_features_csv, FeatureMatrix};
use fdlp_core::learn::train::split_indices;
use fdlp_core::learn::{joint_finetune, read_checkpoint, train as train_model, write_checkpoint};
use fdlp_core::learn::{Checkpoint, Example, GainModel};
use fdlp_core::signal::read_wav;
use fdlp_core::verify::{self, Suite};
use fdlp_core::{Error, ErrorKind, Result};

use crate::config::Config;
use crate::Mode;

pub fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 1,
        ErrorKind::Io => 2,
        ErrorKind::Numerical => 3,
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn simulate(cfg: &Config, manifest: &Path, out_dir: &Path) -> Result<ExitCode> {
    let manifest = CorpusManifest::read(manifest)?;
    let summary = build_corpus(&manifest, out_dir, cfg.seed)?;
    let mut code = 0;
    for o in &summary.outcomes {
        match &o.result {
            Ok(clipped) if *clipped > 0 => {
                println!("{}: {clipped} samples clipped", o.out_path.display())
            }
            Ok(_) => {}
            Err(e) => {
                let c = exit_code(e);
                eprintln!("ERROR {c}: manifest line {}: {}: {e}", o.line, o.out_path.display());
                if code == 0 {
                    code = c;
                }
            }
        }
    }
    println!("{summary}");
    Ok(ExitCode::from(code))
}

fn feature_path(out: &Path, index: usize, padded: bool, csv: bool) -> PathBuf {
    let pad = if padded { ".pad" } else { "" };
    let ext = if csv { "csv" } else { "feat" };
    PathBuf::from(format!("{}.seg{index:03}{pad}.{ext}", out.display()))
}

fn write_feature_file(fm: &FeatureMatrix, path: &Path, csv: bool) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    if csv {
        write_features_csv(fm, path)
    } else {
        write_features(fm, path)
    }
}

pub fn extract(cfg: &Config, input: &Path, mode: Mode, out: &Path, csv: bool) -> Result<ExitCode> {
    let signal = read_wav(input)?;
    let fdlp = cfg.fdlp();
    let analyzer = FdlpAnalyzer::new(fdlp.clone())?;
    for (i, seg) in signal.segments().iter().enumerate() {
        let fm = match mode {
            Mode::Fdlp => {
                let env = analyzer.analyze(&seg.signal)?;
                log_envelope_features(&LogEnvelopeSet::from_envelopes(&env), env.envelope_rate())?
            }
            Mode::Fbank => baseline_logmel(&seg.signal, &fdlp)?,
        };
        let path = feature_path(out, i, seg.is_padded(), csv);
        write_feature_file(&fm, &path, csv)?;
        println!("{} {}x{}", path.display(), fm.shape().0, fm.shape().1);
    }
    Ok(ExitCode::SUCCESS)
}

fn checkpoint_for(cfg: &Config, model: GainModel) -> Checkpoint {
    Checkpoint::new(model)
        .with_meta("ar_order", cfg.ar_order)
        .with_meta("num_bands", cfg.num_bands)
        .with_meta("f_lo", cfg.f_lo)
        .with_meta("f_hi", cfg.f_hi)
}

/// Fails when the checkpoint was trained under different analysis
/// settings than the current configuration.
fn check_compatible(ckpt: &Checkpoint, cfg: &Config) -> Result<()> {
    let expected = [
        ("num_bands", cfg.num_bands.to_string()),
        ("ar_order", cfg.ar_order.to_string()),
        ("f_lo", cfg.f_lo.to_string()),
        ("f_hi", cfg.f_hi.to_string()),
    ];
    for (key, want) in expected {
        if let Some(have) = ckpt.meta(key) {
            if have != want {
                return Err(Error::InvalidArgument(format!(
                    "checkpoint/config mismatch: {key} is {have} in checkpoint, {want} in config"
                )));
            }
        }
    }
    if ckpt.model.config().bands != cfg.num_bands {
        return Err(Error::InvalidArgument(format!(
            "checkpoint/config mismatch: bands is {} in checkpoint, {} in config",
            ckpt.model.config().bands,
            cfg.num_bands
        )));
    }
    Ok(())
}

fn zero_predictor_loss(examples: &[Example]) -> f64 {
    let per: Vec<f64> = examples
        .iter()
        .map(|ex| {
            let n = ex.valid_rows * ex.target.cols();
            ex.target.as_slice()[..n].iter().map(|v| v * v).sum::<f64>() / n as f64
        })
        .collect();
    per.iter().sum::<f64>() / per.len().max(1) as f64
}

pub fn train(
    cfg: &Config,
    corpus: &Path,
    model_out: &Path,
    init: Option<&Path>,
    joint: bool,
    report_path: &Path,
) -> Result<ExitCode> {
    if joint && init.is_none() {
        return Err(Error::InvalidArgument("joint fine-tune requires --init".into()));
    }
    let start = match init {
        Some(p) => {
            let ckpt = read_checkpoint(p)?;
            check_compatible(&ckpt, cfg)?;
            ckpt.model
        }
        None => GainModel::new(cfg.gain_config(), cfg.seed)?,
    };
    let analyzer = FdlpAnalyzer::new(cfg.fdlp())?;
    let examples = load_examples(&analyzer, &read_index(corpus)?)?;
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let tcfg = cfg.train(joint);
    let (model, report) = if joint {
        joint_finetune(start, &examples, &tcfg)?
    } else {
        train_model(start, &examples, &tcfg)?
    };
    write_checkpoint(&checkpoint_for(cfg, model), model_out)?;
    fs::write(report_path, report.to_csv()).map_err(io_err(report_path))?;

    let (_, val) = split_indices(examples.len(), tcfg.val_fraction, tcfg.seed);
    let val_set: Vec<Example> = val.iter().map(|&i| examples[i].clone()).collect();
    println!("segments={} epochs={}", examples.len(), report.epochs.len());
    println!(
        "initial_val_loss={:.6} final_val_loss={:.6}",
        report.initial_val_loss,
        report.final_val_loss()
    );
    if joint {
        println!("selected_epoch={}", report.selected_epoch.unwrap_or(0));
    } else {
        let zero = zero_predictor_loss(&val_set);
        println!("zero_predictor_val_loss={zero:.6} ratio={:.4}", report.final_val_loss() / zero);
    }
    println!("checkpoint={} report={}", model_out.display(), report_path.display());
    Ok(ExitCode::SUCCESS)
}

pub fn dereverb(
    cfg: &Config,
    input: &Path,
    model: &Path,
    out: &Path,
    oracle_clean: Option<&Path>,
    csv: bool,
) -> Result<ExitCode> {
    let ckpt = read_checkpoint(model)?;
    check_compatible(&ckpt, cfg)?;
    let analyzer = FdlpAnalyzer::new(cfg.fdlp())?;
    let reverb = read_wav(input)?;
    let clean_segments = match oracle_clean {
        Some(p) => {
            let clean = read_wav(p)?;
            if clean.len() != reverb.len() {
                return Err(Error::InvalidArgument(format!(
                    "oracle clean has {} samples, input has {}",
                    clean.len(),
                    reverb.len()
                )));
            }
            Some(clean.segments())
        }
        None => None,
    };
    let rows = analyzer.config().envelope_len;
    for (i, seg) in reverb.segments().iter().enumerate() {
        let env: SubbandEnvelopeSet = analyzer.analyze(&seg.signal)?;
        let log_r = LogEnvelopeSet::from_envelopes(&env);
        let gain: GainTarget = match &clean_segments {
            Some(c) => residual_target(&analyzer.analyze(&c[i].signal)?, &env)?,
            None => ckpt.model.forward_matrix(log_r.values(), seg.valid_rows(rows))?,
        };
        let est = apply_gain(&log_r, &gain)?;
        let fm = log_envelope_features(&est, env.envelope_rate())?;
        let path = feature_path(out, i, seg.is_padded(), csv);
        write_feature_file(&fm, &path, csv)?;
        println!("{} {}x{}", path.display(), fm.shape().0, fm.shape().1);
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(cfg: &Config, suite: &str, out: Option<&Path>) -> Result<ExitCode> {
    let suite: Suite = suite.parse()?;
    let report = verify::run(suite, cfg.seed)?;
    let text = report.to_text();
    print!("{text}");
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let p = dir.join("report.txt");
        fs::write(&p, &text).map_err(io_err(&p))?;
        if let Some(ckpt) = &report.checkpoint {
            write_checkpoint(ckpt, dir.join("checkpoint.bin"))?;
        }
    }
    if report.passed() {
        Ok(ExitCode::SUCCESS)
    } else {
        let failed = report.checks.iter().filter(|c| !c.passed).count();
        eprintln!("ERROR 3: {failed} verification checks failed");
        Ok(ExitCode::from(3))
    }
}

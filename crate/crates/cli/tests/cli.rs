use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fdlp_core::features::read_features;
use fdlp_core::learn::{read_checkpoint, write_checkpoint, Checkpoint, GainConfig, GainModel};
use fdlp_core::signal::write_wav;
use fdlp_core::synth::speech_like;

fn fdlp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdlp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn speech_wav(dir: &Path, name: &str, seconds: f64, seed: u64) -> PathBuf {
    let path = dir.join(name);
    let x = speech_like(seed, (seconds * 16_000.0) as usize, 16_000, 0.1);
    write_wav(&path, &x).unwrap();
    path
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn files_with_prefix(dir: &Path, prefix: &str) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with(prefix))
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_reports_counts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..3 {
        speech_wav(dir.path(), &format!("c{i}.wav"), 1.0, i);
    }
    let manifest = dir.path().join("m.txt");
    std::fs::write(
        &manifest,
        "# clean,seed,t60,snr,out\nc0.wav,1,0.3,20,r0.wav\nc1.wav,2,0.5,inf,r1.wav\nc2.wav,3,0.6,10,sub/r2.wav\n",
    )
    .unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let o = fdlp(&["--seed", "5", "simulate", p(&manifest), "--out-dir", p(out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("3 ok, 0 failed"));
    }
    for f in ["r0.wav", "r0.wav.rir.wav", "r0.wav.rir.meta", "sub/r2.wav", "corpus.txt"] {
        let a = std::fs::read(out_a.join(f)).unwrap();
        let b = std::fs::read(out_b.join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let meta = std::fs::read_to_string(out_a.join("r1.wav.rir.meta")).unwrap();
    assert!(meta.contains("t60=0.5") && meta.contains("split_ms=50") && meta.contains("scale="));
}

#[test]
fn simulate_continues_past_a_bad_entry() {
    let dir = tempfile::tempdir().unwrap();
    speech_wav(dir.path(), "c0.wav", 0.5, 0);
    speech_wav(dir.path(), "c1.wav", 0.5, 1);
    let manifest = dir.path().join("m.txt");
    std::fs::write(&manifest, "c0.wav,1,0.3,20,r0.wav\nmissing.wav,2,0.3,20,r1.wav\nc1.wav,3,0.3,20,r2.wav\n").unwrap();
    let o = fdlp(&["simulate", p(&manifest), "--out-dir", p(&dir.path().join("o"))]);
    assert!(!o.status.success());
    assert!(stdout(&o).contains("2 ok, 1 failed"));
    assert!(stderr(&o).starts_with("ERROR 2: manifest line 2"), "{}", stderr(&o));
}

#[test]
fn duplicate_output_path_is_a_collision() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.txt");
    std::fs::write(&manifest, "a.wav,1,0.3,20,r.wav\nb.wav,2,0.3,20,r.wav\n").unwrap();
    let o = fdlp(&["simulate", p(&manifest), "--out-dir", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("path collision"));
}

#[test]
fn extract_segments_and_padding() {
    let dir = tempfile::tempdir().unwrap();
    let six = speech_wav(dir.path(), "six.wav", 6.0, 1);
    let one = speech_wav(dir.path(), "one.wav", 1.0, 2);
    let o = fdlp(&["extract", p(&six), "--out", p(&dir.path().join("six"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files = files_with_prefix(dir.path(), "six.seg");
    assert_eq!(files, ["six.seg000.feat", "six.seg001.feat", "six.seg002.feat"]);
    for f in &files {
        assert_eq!(read_features(dir.path().join(f)).unwrap().shape(), (198, 36));
    }
    let o = fdlp(&["extract", p(&one), "--out", p(&dir.path().join("one"))]);
    assert!(o.status.success());
    assert_eq!(files_with_prefix(dir.path(), "one.seg"), ["one.seg000.pad.feat"]);

    let o = fdlp(&["extract", p(&one), "--mode", "fbank", "--out", p(&dir.path().join("fb"))]);
    assert!(o.status.success());
    let a = read_features(dir.path().join("one.seg000.pad.feat")).unwrap();
    let b = read_features(dir.path().join("fb.seg000.pad.feat")).unwrap();
    assert_eq!(a.shape(), b.shape());
    assert_ne!(a, b);

    let o = fdlp(&["--csv", "extract", p(&one), "--out", p(&dir.path().join("csv"))]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(dir.path().join("csv.seg000.pad.csv")).unwrap();
    assert_eq!(text.lines().count(), 198);
}

#[test]
fn extract_names_the_unsupported_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("st.wav");
    let spec = hound::WavSpec {
        channels: 2,
        sample_rate: 16_000,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    for _ in 0..100 {
        w.write_sample(0i16).unwrap();
    }
    w.finalize().unwrap();
    let o = fdlp(&["extract", p(&path), "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("channels"), "{}", stderr(&o));
}

fn small_corpus(dir: &Path) -> PathBuf {
    let mut manifest = String::new();
    for i in 0..3 {
        speech_wav(dir, &format!("c{i}.wav"), 2.5, 10 + i);
        manifest.push_str(&format!("c{i}.wav,{i},0.4,inf,r{i}.wav\n"));
    }
    std::fs::write(dir.join("m.txt"), manifest).unwrap();
    let out = dir.join("corpus");
    let o = fdlp(&["simulate", p(&dir.join("m.txt")), "--out-dir", p(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

#[test]
fn train_zero_epochs_and_joint_contract() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let model = dir.path().join("m.bin");
    let o = fdlp(&["--seed", "3", "train", p(&corpus), "--model-out", p(&model), "--epochs", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = read_checkpoint(&model).unwrap();
    assert_eq!(ckpt.model, GainModel::new(GainConfig::default(), 3).unwrap());
    let report = std::fs::read_to_string(dir.path().join("m.bin.report.csv")).unwrap();
    assert_eq!(report, "epoch,train_loss,val_loss,seconds\n");

    let o = fdlp(&["train", p(&corpus), "--model-out", p(&model), "--joint"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("joint fine-tune requires --init"));

    let tuned = dir.path().join("j.bin");
    let o = fdlp(&[
        "train", p(&corpus), "--model-out", p(&tuned), "--joint", "--init", p(&model), "--epochs", "1",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("j.bin.report.csv")).unwrap();
    assert_eq!(report.lines().count(), 2);
}

#[test]
fn dereverb_identity_oracle_and_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = small_corpus(dir.path());
    let reverb = corpus.join("r0.wav");
    let clean = dir.path().join("c0.wav");

    let ident = dir.path().join("ident.bin");
    let ckpt = Checkpoint::new(GainModel::identity(GainConfig::default(), 1).unwrap())
        .with_meta("ar_order", 160)
        .with_meta("num_bands", 36);
    write_checkpoint(&ckpt, &ident).unwrap();

    assert!(fdlp(&["extract", p(&reverb), "--out", p(&dir.path().join("ext"))]).status.success());
    let o = fdlp(&["dereverb", p(&reverb), "--model", p(&ident), "--out", p(&dir.path().join("der"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    for seg in ["seg000.feat", "seg001.pad.feat"] {
        let a = std::fs::read(dir.path().join(format!("ext.{seg}"))).unwrap();
        let b = std::fs::read(dir.path().join(format!("der.{seg}"))).unwrap();
        assert_eq!(a, b, "{seg}");
    }

    assert!(fdlp(&["extract", p(&clean), "--out", p(&dir.path().join("clean"))]).status.success());
    let o = fdlp(&[
        "dereverb", p(&reverb), "--model", p(&ident), "--oracle-clean", p(&clean), "--out",
        p(&dir.path().join("orc")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for seg in ["seg000.feat", "seg001.pad.feat"] {
        let a = read_features(dir.path().join(format!("clean.{seg}"))).unwrap();
        let b = read_features(dir.path().join(format!("orc.{seg}"))).unwrap();
        let err = a
            .values()
            .as_slice()
            .iter()
            .zip(b.values().as_slice())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{seg}: {err}");
    }

    let cfg = dir.path().join("cfg.txt");
    std::fs::write(&cfg, "ar_order=100\n").unwrap();
    let o = fdlp(&["--config", p(&cfg), "dereverb", p(&reverb), "--model", p(&ident), "--out", p(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("ar_order") && err.contains("160") && err.contains("100"), "{err}");
}

#[test]
fn config_errors_are_line_numbered() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.txt");
    std::fs::write(&cfg, "# c\nepochs=2\nwidth=3\n").unwrap();
    let o = fdlp(&["--config", p(&cfg), "verify", "dsp"]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.starts_with("ERROR 1: parse error at line 3"), "{err}");
}

#[test]
fn missing_input_is_an_io_error() {
    let o = fdlp(&["extract", "/nonexistent/x.wav", "--out", "/tmp/never"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERROR 2:"));
}

#[test]
fn unknown_suite_lists_valid_ones() {
    let o = fdlp(&["verify", "speed"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dsp, eq2, grad, all"));
}

//! `key=value` run configuration. Command-line flags override file values.

use std::fs;
use std::path::Path;

use fdlp_core::dsp::FdlpConfig;
use fdlp_core::learn::{ConvSpec, GainConfig, TrainConfig};
use fdlp_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub jobs: Option<usize>,
    pub ar_order: usize,
    pub num_bands: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub conv_layers: Vec<ConvSpec>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub joint_epochs: usize,
    pub joint_lr: f64,
    pub val_fraction: f64,
}

impl Default for Config {
    fn default() -> Self {
        let fdlp = FdlpConfig::default();
        let train = TrainConfig::default();
        Self {
            seed: 0,
            jobs: None,
            ar_order: fdlp.ar_order,
            num_bands: fdlp.num_bands,
            f_lo: fdlp.f_lo,
            f_hi: fdlp.f_hi,
            conv_layers: GainConfig::default().conv_layers,
            epochs: train.epochs,
            batch_size: train.batch_size,
            lr: train.lr,
            joint_epochs: 5,
            joint_lr: 3e-4,
            val_fraction: train.val_fraction,
        }
    }
}

pub const KEYS: [&str; 13] = [
    "seed",
    "jobs",
    "ar_order",
    "num_bands",
    "f_lo",
    "f_hi",
    "conv_layers",
    "epochs",
    "batch_size",
    "lr",
    "joint_epochs",
    "joint_lr",
    "val_fraction",
];

impl Config {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut last_line = 0;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| Error::Parse { line: i + 1, reason };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got {line:?}")))?;
            cfg.set(key.trim(), value.trim()).map_err(err)?;
            last_line = i + 1;
        }
        // Cross-field checks are reported against the last assignment.
        cfg.validate().map_err(|reason| Error::Parse { line: last_line, reason })?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "jobs" => self.jobs = Some(num(key, value)?),
            "ar_order" => self.ar_order = num(key, value)?,
            "num_bands" => self.num_bands = num(key, value)?,
            "f_lo" => self.f_lo = num(key, value)?,
            "f_hi" => self.f_hi = num(key, value)?,
            "conv_layers" => {
                self.conv_layers = GainConfig::parse_conv_layers(value).map_err(|e| format!("conv_layers: {e}"))?
            }
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "joint_epochs" => self.joint_epochs = num(key, value)?,
            "joint_lr" => self.joint_lr = num(key, value)?,
            "val_fraction" => self.val_fraction = num(key, value)?,
            _ => return Err(format!("unknown key {key:?}; valid keys: {}", KEYS.join(", "))),
        }
        Ok(())
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.jobs == Some(0) {
            return Err("jobs must be >= 1".into());
        }
        if self.num_bands == 0 {
            return Err("num_bands must be >= 1".into());
        }
        if !(self.f_lo > 0.0 && self.f_lo < self.f_hi) {
            return Err(format!("need 0 < f_lo < f_hi, got {} and {}", self.f_lo, self.f_hi));
        }
        if self.batch_size == 0 {
            return Err("batch_size must be >= 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite() && self.joint_lr >= 0.0 && self.joint_lr.is_finite()) {
            return Err("learning rates must be finite and >= 0".into());
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(format!("val_fraction {} outside [0, 1)", self.val_fraction));
        }
        self.gain_config().validate().map_err(|e| e.to_string())
    }

    pub fn fdlp(&self) -> FdlpConfig {
        FdlpConfig {
            ar_order: self.ar_order,
            num_bands: self.num_bands,
            f_lo: self.f_lo,
            f_hi: self.f_hi,
            ..FdlpConfig::default()
        }
    }

    pub fn gain_config(&self) -> GainConfig {
        GainConfig {
            bands: self.num_bands,
            conv_layers: self.conv_layers.clone(),
        }
    }

    pub fn train(&self, joint: bool) -> TrainConfig {
        TrainConfig {
            epochs: if joint { self.joint_epochs } else { self.epochs },
            batch_size: self.batch_size,
            lr: if joint { self.joint_lr } else { self.lr },
            seed: self.seed,
            val_fraction: self.val_fraction,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let c = Config::parse("# run\nepochs = 3\nconv_layers=4x3x3\n\nlr=0.01\n").unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.conv_layers.len(), 1);
        match Config::parse("epochs=3\nlearning_rate=1\n") {
            Err(Error::Parse { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("unknown key"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn value_errors_carry_the_line() {
        assert!(matches!(Config::parse("\n\nepochs=x"), Err(Error::Parse { line: 3, .. })));
        assert!(matches!(Config::parse("f_lo=7000"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(Config::parse("conv_layers=4x4x3"), Err(Error::Parse { line: 1, .. })));
    }
}

//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `FDLPGAIN`, u32 version, u32 length of a
//! UTF-8 `key=value` config block, the block itself, u32 tensor count, then
//! per tensor u32 ndim, ndim × u32 dims, and the f64 data.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::model::{GainConfig, GainModel};
use super::tape::Tensor;
use crate::error::{Error, Result};
use crate::features::{read_u32, take};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FDLPGAIN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A model plus free-form metadata echoed alongside its config (analysis
/// settings the model was trained under, for example).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: GainModel,
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: GainModel) -> Self {
        Self {
            model,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    fn config_text(&self) -> String {
        let cfg = self.model.config();
        let mut s = format!("bands={}\nconv_layers={}\n", cfg.bands, cfg.conv_layers_string());
        for (k, v) in &self.meta {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }

    pub fn encode(&self) -> Vec<u8> {
        let text = self.config_text();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(text.len() as u32).to_le_bytes());
        out.extend_from_slice(text.as_bytes());
        let params = self.model.params();
        out.extend_from_slice(&(params.len() as u32).to_le_bytes());
        for p in params {
            out.extend_from_slice(&(p.shape.len() as u32).to_le_bytes());
            for &d in &p.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &p.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut offset = 0;
        if take(bytes, &mut offset, 8)? != CHECKPOINT_MAGIC {
            return Err(corrupt(0, "bad magic, expected FDLPGAIN"));
        }
        let version = read_u32(bytes, &mut offset)?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(8, format!("unsupported version {version}")));
        }
        let text_len = read_u32(bytes, &mut offset)? as usize;
        let text_at = offset;
        let text = std::str::from_utf8(take(bytes, &mut offset, text_len)?)
            .map_err(|_| corrupt(text_at, "config block is not UTF-8"))?;
        let mut bands = None;
        let mut layers = None;
        let mut meta = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| corrupt(text_at, format!("config line {line:?} has no '='")))?;
            match k {
                "bands" => bands = Some(v.parse::<usize>().map_err(|_| corrupt(text_at, "bad bands value"))?),
                "conv_layers" => layers = Some(GainConfig::parse_conv_layers(v)?),
                _ => {
                    meta.insert(k.to_string(), v.to_string());
                }
            }
        }
        let config = GainConfig {
            bands: bands.ok_or_else(|| corrupt(text_at, "config block lacks bands"))?,
            conv_layers: layers.ok_or_else(|| corrupt(text_at, "config block lacks conv_layers"))?,
        };
        config.validate()?;
        let expected = config.param_shapes();
        let count_at = offset;
        let count = read_u32(bytes, &mut offset)? as usize;
        if count != expected.len() {
            return Err(corrupt(count_at, format!("{count} tensors, config implies {}", expected.len())));
        }
        let mut params = Vec::with_capacity(count);
        for shape in expected {
            let at = offset;
            let ndim = read_u32(bytes, &mut offset)? as usize;
            let dims = (0..ndim)
                .map(|_| read_u32(bytes, &mut offset).map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            if dims != shape {
                return Err(corrupt(at, format!("tensor shape {dims:?}, config implies {shape:?}")));
            }
            let n: usize = dims.iter().product();
            let data_at = offset;
            let data: Vec<f64> = take(bytes, &mut offset, n * 8)?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(corrupt(data_at, "non-finite parameter"));
            }
            params.push(Tensor::new(dims, data)?);
        }
        if offset != bytes.len() {
            return Err(corrupt(offset, format!("{} trailing bytes", bytes.len() - offset)));
        }
        Ok(Self {
            model: GainModel::from_params(config, params)?,
            meta,
        })
    }
}

fn corrupt(offset: usize, reason: impl Into<String>) -> Error {
    Error::Corrupt {
        offset: offset as u64,
        reason: reason.into(),
    }
}

/// Writes the checkpoint, then reads it back and checks it decodes to the
/// same value.
pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = ckpt.encode();
    fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
    let back = read_checkpoint(path)?;
    if &back != ckpt {
        return Err(corrupt(0, "read-back does not match written checkpoint"));
    }
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes)
}

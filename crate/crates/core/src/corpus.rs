//! Corpus manifests and on-disk parallel clean/reverberant data.
//!
//! A manifest line is `clean_path,seed,t60_s,snr_db,out_path`; `#` starts a
//! comment. `snr_db` may be `inf` for a noise-free entry. Relative clean
//! paths resolve against the manifest's directory and output paths against
//! the output directory.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dsp::FdlpAnalyzer;
use crate::error::{Error, Result};
use crate::learn::Example;
use crate::reverb::{add_noise, convolve, default_rir_duration, synth_rir, RoomImpulseResponse, MAX_RIR_SECONDS};
use crate::rng::derive_seed;
use crate::signal::{read_wav, write_wav, Signal};

/// Name of the index written next to the generated files.
pub const CORPUS_INDEX: &str = "corpus.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub line: usize,
    pub clean_path: PathBuf,
    pub seed: u64,
    pub t60: f64,
    pub snr_db: f64,
    pub out_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
}

impl CorpusManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let bad = |reason: String| Error::Parse { line, reason };
            let fields: Vec<&str> = content.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(bad(format!(
                    "expected clean_path,seed,t60_s,snr_db,out_path, got {} fields",
                    fields.len()
                )));
            }
            let seed = fields[1]
                .parse::<u64>()
                .map_err(|_| bad(format!("seed {:?} is not an unsigned integer", fields[1])))?;
            let t60 = fields[2]
                .parse::<f64>()
                .map_err(|_| bad(format!("t60 {:?} is not a number", fields[2])))?;
            if !(t60 > 0.0 && t60 <= MAX_RIR_SECONDS) {
                return Err(bad(format!("t60 {t60} outside (0, {MAX_RIR_SECONDS}]")));
            }
            let snr_db = match fields[3] {
                "inf" | "+inf" => f64::INFINITY,
                s => s
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("snr_db {s:?} must be finite or inf")))?,
            };
            if fields[0].is_empty() || fields[4].is_empty() {
                return Err(bad("empty path".into()));
            }
            let out_path = PathBuf::from(fields[4]);
            if !seen.insert(out_path.clone()) {
                return Err(Error::PathCollision(out_path));
            }
            entries.push(ManifestEntry {
                line,
                clean_path: base_dir.join(fields[0]),
                seed,
                t60,
                snr_db,
                out_path,
            });
        }
        Ok(Self { entries })
    }
}

/// Sidecar paths for a reverberant output file.
pub fn rir_paths(out: &Path) -> (PathBuf, PathBuf) {
    let s = out.as_os_str().to_string_lossy();
    (PathBuf::from(format!("{s}.rir.wav")), PathBuf::from(format!("{s}.rir.meta")))
}

#[derive(Debug)]
pub struct EntryOutcome {
    pub line: usize,
    pub out_path: PathBuf,
    pub result: Result<usize>,
}

#[derive(Debug)]
pub struct CorpusSummary {
    /// Per-entry outcomes in manifest order; `Ok` holds the clipped-sample
    /// count of the reverberant file.
    pub outcomes: Vec<EntryOutcome>,
}

impl CorpusSummary {
    pub fn ok(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_ok()).count()
    }

    pub fn failed(&self) -> usize {
        self.outcomes.len() - self.ok()
    }
}

impl fmt::Display for CorpusSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ok, {} failed", self.ok(), self.failed())
    }
}

/// Reverberates every entry and writes `<out>`, `<out>.rir.wav`,
/// `<out>.rir.meta` and a `corpus.txt` index of the successful entries.
/// A failing entry is reported and the others still run.
pub fn build_corpus(manifest: &CorpusManifest, out_dir: &Path, global_seed: u64) -> Result<CorpusSummary> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let outcomes: Vec<EntryOutcome> = manifest
        .entries
        .par_iter()
        .enumerate()
        .map(|(i, entry)| EntryOutcome {
            line: entry.line,
            out_path: out_dir.join(&entry.out_path),
            result: build_entry(entry, out_dir, derive_seed(global_seed, i as u64)),
        })
        .collect();
    let mut index = String::from("# clean_path,reverb_path,rir_path\n");
    for (entry, outcome) in manifest.entries.iter().zip(&outcomes) {
        if outcome.result.is_ok() {
            let clean = fs::canonicalize(&entry.clean_path).map_err(|e| Error::io(&entry.clean_path, e))?;
            index.push_str(&format!(
                "{},{},{}\n",
                clean.display(),
                entry.out_path.display(),
                rir_paths(&entry.out_path).0.display()
            ));
        }
    }
    let index_path = out_dir.join(CORPUS_INDEX);
    fs::write(&index_path, index).map_err(|e| Error::io(&index_path, e))?;
    Ok(CorpusSummary { outcomes })
}

fn build_entry(entry: &ManifestEntry, out_dir: &Path, stream: u64) -> Result<usize> {
    let x = read_wav(&entry.clean_path)?;
    let rir_seed = derive_seed(stream, entry.seed);
    let h = synth_rir(entry.t60, x.sample_rate(), default_rir_duration(entry.t60), rir_seed)?;
    let r = add_noise(&convolve(&x, &h)?, entry.snr_db, derive_seed(rir_seed, 1))?;
    let out = out_dir.join(&entry.out_path);
    if let Some(parent) = out.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let clipped = write_wav(&out, &r)?;
    write_rir(&h, &out)?;
    Ok(clipped)
}

/// Writes the RIR scaled so its peak sits at 16-bit full scale, plus the
/// `.meta` sidecar recording that scale.
pub fn write_rir(h: &RoomImpulseResponse, out: &Path) -> Result<()> {
    let (wav, meta) = rir_paths(out);
    let peak = h.samples().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = 32767.0 / 32768.0 / peak;
    write_wav(&wav, &Signal::new(h.samples().to_vec(), h.sample_rate())?.scaled(scale))?;
    let text = format!(
        "t60={}\nseed={}\nsplit_ms={}\nscale={}\n",
        h.t60(),
        h.seed(),
        h.split_ms(),
        scale
    );
    fs::write(&meta, text).map_err(|e| Error::io(&meta, e))
}

/// Reads a `key=value` file, skipping blank and `#` lines.
pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: i + 1,
            reason: format!("expected key=value, got {line:?}"),
        })?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// Reads an RIR written by [`write_rir`], undoing the stored scale.
pub fn read_rir(wav: &Path) -> Result<RoomImpulseResponse> {
    let meta_path = PathBuf::from(format!("{}.meta", wav.to_string_lossy().trim_end_matches(".wav")));
    let meta = read_key_values(&meta_path)?;
    let get = |k: &str| -> Result<f64> {
        meta.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::InvalidArgument(format!("{}: missing or bad {k}", meta_path.display())))
    };
    let scale = get("scale")?;
    let s = read_wav(wav)?;
    let taps = s.samples().iter().map(|v| v / scale).collect();
    Ok(RoomImpulseResponse::from_samples(taps, s.sample_rate(), get("t60")?)?.with_split_ms(get("split_ms")?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub clean: PathBuf,
    pub reverb: PathBuf,
    pub rir: PathBuf,
}

/// Parses `corpus.txt` in `dir`; relative paths resolve against `dir`.
pub fn read_index(dir: &Path) -> Result<Vec<CorpusItem>> {
    let path = dir.join(CORPUS_INDEX);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut items = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                reason: "expected clean_path,reverb_path,rir_path".into(),
            });
        }
        items.push(CorpusItem {
            clean: dir.join(f[0]),
            reverb: dir.join(f[1]),
            rir: dir.join(f[2]),
        });
    }
    Ok(items)
}

/// One training example per 2 s segment of each clean/reverberant pair.
/// Padded tail segments keep only their source-covered rows in the loss.
pub fn pair_examples(analyzer: &FdlpAnalyzer, clean: &Signal, reverb: &Signal) -> Result<Vec<Example>> {
    if clean.sample_rate() != reverb.sample_rate() {
        return Err(Error::SampleRateMismatch(clean.sample_rate(), reverb.sample_rate()));
    }
    if clean.len() != reverb.len() {
        return Err(Error::shape(format!("{} samples", clean.len()), format!("{} samples", reverb.len())));
    }
    let rows = analyzer.config().envelope_len;
    clean
        .segments()
        .iter()
        .zip(reverb.segments())
        .map(|(c, r)| {
            let ce = analyzer.analyze(&c.signal)?;
            let re = analyzer.analyze(&r.signal)?;
            Example::from_envelopes(&ce, &re, c.valid_rows(rows))
        })
        .collect()
}

/// Loads every indexed pair as training examples, in index order.
pub fn load_examples(analyzer: &FdlpAnalyzer, items: &[CorpusItem]) -> Result<Vec<Example>> {
    let per_item = items
        .par_iter()
        .map(|it| pair_examples(analyzer, &read_wav(&it.clean)?, &read_wav(&it.reverb)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(per_item.into_iter().flatten().collect())
}

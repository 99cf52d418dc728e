//! Run configuration.
//!
//! One `key = value` per line; `#` starts a comment line. Every key has a
//! default, unknown or repeated keys are errors, and each key can be
//! overridden by the environment variable `WEAREC_<KEY>` (upper case).
//! [`RunConfig::to_text`] writes every key in a fixed order and parses
//! back to an identical value.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::analysis::{check_partition, equal_bands, BandSpec};
use crate::data::TrainMode;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::model::ModelConfig;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq)]
pub enum Bands {
    /// Equal-width contiguous bands.
    Count(usize),
    /// Explicit inclusive `lo-hi` bin ranges.
    Ranges(Vec<(usize, usize)>),
}

impl Bands {
    pub fn resolve(&self, bins: usize) -> Result<Vec<BandSpec>> {
        let bands = match self {
            Bands::Count(c) => equal_bands(bins, *c)?,
            Bands::Ranges(r) => r
                .iter()
                .enumerate()
                .map(|(index, &(lo, hi))| BandSpec { index, lo, hi })
                .collect(),
        };
        check_partition(&bands, bins)?;
        Ok(bands)
    }
}

impl std::fmt::Display for Bands {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bands::Count(c) => write!(f, "{c}"),
            Bands::Ranges(r) => {
                let parts: Vec<String> = r.iter().map(|(lo, hi)| format!("{lo}-{hi}")).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

impl FromStr for Bands {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Ok(c) = s.parse::<usize>() {
            return Ok(Bands::Count(c));
        }
        s.split(',')
            .map(|part| {
                let (lo, hi) = part.trim().split_once('-').ok_or(format!("bad band {part:?}"))?;
                let lo = lo.trim().parse().map_err(|_| format!("bad band start {lo:?}"))?;
                let hi = hi.trim().parse().map_err(|_| format!("bad band end {hi:?}"))?;
                Ok((lo, hi))
            })
            .collect::<std::result::Result<_, _>>()
            .map(Bands::Ranges)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub max_len: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub alpha: f64,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub context_mask: bool,

    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub shuffle: bool,
    pub train_mode: TrainMode,
    pub mask_history: bool,
    pub execution: Execution,
    pub chunk_size: usize,

    /// Prepared sequence file.
    pub data: PathBuf,
    pub output: PathBuf,
    pub min_core: usize,

    pub bands: Bands,
    pub analysis_k: usize,
    /// Fusion weight used during band analysis; negative keeps the trained α.
    pub analysis_alpha: f64,
    pub spectra_sample: usize,

    pub gradcheck_vocab: usize,
    pub gradcheck_coords: usize,
    pub bench_lengths: Vec<usize>,
    pub bench_reps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        RunConfig {
            max_len: m.max_len,
            hidden: m.hidden,
            layers: m.layers,
            heads: m.heads,
            alpha: m.alpha,
            dropout: m.dropout,
            layer_norm_eps: m.layer_norm_eps,
            context_mask: m.context_mask,
            lr: 1e-3,
            batch_size: 256,
            max_epochs: 300,
            patience: 10,
            seed: 42,
            shuffle: true,
            train_mode: TrainMode::Prefixes,
            mask_history: false,
            execution: Execution::default(),
            chunk_size: 16,
            data: PathBuf::from("data/dataset.txt"),
            output: PathBuf::from("out"),
            min_core: 5,
            bands: Bands::Count(5),
            analysis_k: 10,
            analysis_alpha: 1.0,
            spectra_sample: 256,
            gradcheck_vocab: 20,
            gradcheck_coords: 200,
            bench_lengths: vec![64, 128, 256, 512, 1024],
            bench_reps: 20,
        }
    }
}

/// Every accepted key, in echo order.
pub const KEYS: &[&str] = &[
    "max_len",
    "hidden",
    "layers",
    "heads",
    "alpha",
    "dropout",
    "layer_norm_eps",
    "context_mask",
    "lr",
    "batch_size",
    "max_epochs",
    "patience",
    "seed",
    "shuffle",
    "train_mode",
    "mask_history",
    "execution",
    "chunk_size",
    "data",
    "output",
    "min_core",
    "bands",
    "analysis_k",
    "analysis_alpha",
    "spectra_sample",
    "gradcheck_vocab",
    "gradcheck_coords",
    "bench_lengths",
    "bench_reps",
];

fn parse_value<V: FromStr>(key: &str, value: &str) -> std::result::Result<V, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value {value:?} for {key}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("invalid boolean {value:?} for {key}")),
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let v = value.trim();
        match key {
            "max_len" => self.max_len = parse_value(key, v)?,
            "hidden" => self.hidden = parse_value(key, v)?,
            "layers" => self.layers = parse_value(key, v)?,
            "heads" => self.heads = parse_value(key, v)?,
            "alpha" => self.alpha = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "layer_norm_eps" => self.layer_norm_eps = parse_value(key, v)?,
            "context_mask" => self.context_mask = parse_bool(key, v)?,
            "lr" => self.lr = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "max_epochs" => self.max_epochs = parse_value(key, v)?,
            "patience" => self.patience = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "shuffle" => self.shuffle = parse_bool(key, v)?,
            "train_mode" => {
                self.train_mode = match v {
                    "prefixes" => TrainMode::Prefixes,
                    "last" => TrainMode::LastOnly,
                    _ => return Err(format!("train_mode must be prefixes or last, got {v:?}")),
                }
            }
            "mask_history" => self.mask_history = parse_bool(key, v)?,
            "execution" => {
                self.execution = match v {
                    "parallel" => Execution::Parallel,
                    "sequential" => Execution::Sequential,
                    _ => return Err(format!("execution must be parallel or sequential, got {v:?}")),
                }
            }
            "chunk_size" => self.chunk_size = parse_value(key, v)?,
            "data" => self.data = PathBuf::from(v),
            "output" => self.output = PathBuf::from(v),
            "min_core" => self.min_core = parse_value(key, v)?,
            "bands" => self.bands = v.parse()?,
            "analysis_k" => self.analysis_k = parse_value(key, v)?,
            "analysis_alpha" => self.analysis_alpha = parse_value(key, v)?,
            "spectra_sample" => self.spectra_sample = parse_value(key, v)?,
            "gradcheck_vocab" => self.gradcheck_vocab = parse_value(key, v)?,
            "gradcheck_coords" => self.gradcheck_coords = parse_value(key, v)?,
            "bench_lengths" => {
                self.bench_lengths = v
                    .split(',')
                    .map(|s| parse_value(key, s.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "bench_reps" => self.bench_reps = parse_value(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        match key {
            "max_len" => self.max_len.to_string(),
            "hidden" => self.hidden.to_string(),
            "layers" => self.layers.to_string(),
            "heads" => self.heads.to_string(),
            "alpha" => self.alpha.to_string(),
            "dropout" => self.dropout.to_string(),
            "layer_norm_eps" => self.layer_norm_eps.to_string(),
            "context_mask" => self.context_mask.to_string(),
            "lr" => self.lr.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "max_epochs" => self.max_epochs.to_string(),
            "patience" => self.patience.to_string(),
            "seed" => self.seed.to_string(),
            "shuffle" => self.shuffle.to_string(),
            "train_mode" => match self.train_mode {
                TrainMode::Prefixes => "prefixes".into(),
                TrainMode::LastOnly => "last".into(),
            },
            "mask_history" => self.mask_history.to_string(),
            "execution" => match self.execution {
                Execution::Parallel => "parallel".into(),
                Execution::Sequential => "sequential".into(),
            },
            "chunk_size" => self.chunk_size.to_string(),
            "data" => self.data.display().to_string(),
            "output" => self.output.display().to_string(),
            "min_core" => self.min_core.to_string(),
            "bands" => self.bands.to_string(),
            "analysis_k" => self.analysis_k.to_string(),
            "analysis_alpha" => self.analysis_alpha.to_string(),
            "spectra_sample" => self.spectra_sample.to_string(),
            "gradcheck_vocab" => self.gradcheck_vocab.to_string(),
            "gradcheck_coords" => self.gradcheck_coords.to_string(),
            "bench_lengths" => {
                let v: Vec<String> = self.bench_lengths.iter().map(usize::to_string).collect();
                v.join(",")
            }
            "bench_reps" => self.bench_reps.to_string(),
            _ => unreachable!("key list and getter disagree on {key}"),
        }
    }

    /// Parses configuration text on top of the defaults, without validation.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) && KEYS.contains(&key) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(err)?;
        }
        Ok(cfg)
    }

    /// Applies `WEAREC_<KEY>` overrides from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for key in KEYS {
            let var = format!("WEAREC_{}", key.to_uppercase());
            if let Some(v) = lookup(&var) {
                self.set(key, &v).map_err(|m| Error::Config(format!("{var}: {m}")))?;
            }
        }
        Ok(())
    }

    /// File, then process environment, then validation.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config(2).validate()?;
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive and finite");
        }
        if self.batch_size == 0 || self.chunk_size == 0 {
            return fail("batch_size and chunk_size must be positive");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1");
        }
        if self.min_core == 0 || self.analysis_k == 0 {
            return fail("min_core and analysis_k must be at least 1");
        }
        if self.analysis_alpha > 1.0 || self.analysis_alpha.is_nan() {
            return fail("analysis_alpha must be at most 1 (negative keeps the trained alpha)");
        }
        if self.gradcheck_vocab < 2 || self.gradcheck_coords == 0 {
            return fail("gradcheck_vocab must be at least 2 and gradcheck_coords positive");
        }
        if self.bench_lengths.len() < 2 || self.bench_lengths.iter().any(|&n| n < 2 || n % 2 != 0) {
            return fail("bench_lengths needs at least two even lengths");
        }
        if self.bench_reps == 0 {
            return fail("bench_reps must be positive");
        }
        self.bands.resolve(self.model_config(2).bins())?;
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            max_len: self.max_len,
            hidden: self.hidden,
            layers: self.layers,
            heads: self.heads,
            alpha: self.alpha,
            dropout: self.dropout,
            vocab_size,
            layer_norm_eps: self.layer_norm_eps,
            context_mask: self.context_mask,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            shuffle: self.shuffle,
            mask_history: self.mask_history,
            exec: self.execution,
            chunk_size: self.chunk_size,
        }
    }

    pub fn analysis_alpha(&self) -> Option<f64> {
        (self.analysis_alpha >= 0.0).then_some(self.analysis_alpha)
    }

    /// Every key with its effective value, in [`KEYS`] order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key));
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

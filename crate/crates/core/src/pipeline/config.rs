use std::path::{Path, PathBuf};

use crate::ann::{IndexParams, DEFAULT_THRESHOLD, DEFAULT_TOP_N};
use crate::catalog::{EncodeConfig, DEFAULT_MIN_COUNT};
use crate::compare_graph::{SamplingConfig, DEFAULT_VAL_FRACTION};
use crate::neural::{LossKind, TrainConfig, DEFAULT_EMBED_DIM, DEFAULT_HIDDEN_DIM};
use crate::{Error, Result};

/// Every path and hyperparameter of the pipeline. Values come from the
/// defaults, then a `key = value` config file, then command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub catalog: PathBuf,
    pub pairs: PathBuf,
    pub sessions: PathBuf,
    pub attributes: PathBuf,
    pub schema: PathBuf,
    pub workspace: PathBuf,
    pub min_count: u64,
    pub encode: EncodeConfig,
    pub sampling: SamplingConfig,
    pub val_fraction: f64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub train: TrainConfig,
    pub index: IndexParams,
    pub threshold: f64,
    pub n: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            catalog: "data/catalog.jsonl".into(),
            pairs: "data/pairs.csv".into(),
            sessions: "data/sessions.csv".into(),
            attributes: "data/attributes.csv".into(),
            schema: "data/schema.csv".into(),
            workspace: "work".into(),
            min_count: DEFAULT_MIN_COUNT,
            encode: EncodeConfig::default(),
            sampling: SamplingConfig::default(),
            val_fraction: DEFAULT_VAL_FRACTION,
            embed_dim: DEFAULT_EMBED_DIM,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            train: TrainConfig::default(),
            index: IndexParams::default(),
            threshold: DEFAULT_THRESHOLD,
            n: DEFAULT_TOP_N,
            seed: 0,
            threads: 1,
        }
    }
}

/// Recognized keys, in the order `describe` prints them.
pub const KEYS: [&str; 28] = [
    "catalog",
    "pairs",
    "sessions",
    "attributes",
    "schema",
    "workspace",
    "min-count",
    "title-len",
    "desc-len",
    "neg-ratio",
    "positives-per-anchor",
    "val-fraction",
    "embed-dim",
    "hidden-dim",
    "batch-size",
    "max-epochs",
    "patience",
    "loss-kind",
    "learning-rate",
    "rho",
    "epsilon",
    "m",
    "ef-construction",
    "ef-search",
    "threshold",
    "n",
    "seed",
    "threads",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value for `{key}`: `{value}`")))
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "catalog" => self.catalog = v.into(),
            "pairs" => self.pairs = v.into(),
            "sessions" => self.sessions = v.into(),
            "attributes" => self.attributes = v.into(),
            "schema" => self.schema = v.into(),
            "workspace" => self.workspace = v.into(),
            "min-count" => self.min_count = parse(key, v)?,
            "title-len" => self.encode.title_len = parse(key, v)?,
            "desc-len" => self.encode.desc_len = parse(key, v)?,
            "neg-ratio" => self.sampling.neg_ratio = parse(key, v)?,
            "positives-per-anchor" => self.sampling.positives_per_anchor = parse(key, v)?,
            "val-fraction" => self.val_fraction = parse(key, v)?,
            "embed-dim" => self.embed_dim = parse(key, v)?,
            "hidden-dim" => self.hidden_dim = parse(key, v)?,
            "batch-size" => self.train.batch_size = parse(key, v)?,
            "max-epochs" => self.train.max_epochs = parse(key, v)?,
            "patience" => self.train.patience = parse(key, v)?,
            "loss-kind" => self.train.loss_kind = parse::<LossKind>(key, v)?,
            "learning-rate" => self.train.optimizer.learning_rate = parse(key, v)?,
            "rho" => self.train.optimizer.rho = parse(key, v)?,
            "epsilon" => self.train.optimizer.epsilon = parse(key, v)?,
            "m" => self.index.m = parse(key, v)?,
            "ef-construction" => self.index.ef_construction = parse(key, v)?,
            "ef-search" => self.index.ef_search = parse(key, v)?,
            "threshold" => self.threshold = parse(key, v)?,
            "n" => self.n = parse(key, v)?,
            "seed" => {
                self.seed = parse(key, v)?;
                self.train.seed = self.seed;
            }
            "threads" => self.threads = parse(key, v)?,
            _ => return Err(Error::InvalidArgument(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies a flat config file: `key = value` lines, `#` comments.
    pub fn apply_text(&mut self, text: &str, path: &Path) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = || format!("{}:{}", path.display(), i + 1);
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::InvalidArgument(format!("{}: expected `key = value`, got `{line}`", at())));
            };
            self.set(key.trim(), value).map_err(|e| match e {
                Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", at())),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, path)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let p = |p: &PathBuf| p.display().to_string();
        Some(match key {
            "catalog" => p(&self.catalog),
            "pairs" => p(&self.pairs),
            "sessions" => p(&self.sessions),
            "attributes" => p(&self.attributes),
            "schema" => p(&self.schema),
            "workspace" => p(&self.workspace),
            "min-count" => self.min_count.to_string(),
            "title-len" => self.encode.title_len.to_string(),
            "desc-len" => self.encode.desc_len.to_string(),
            "neg-ratio" => self.sampling.neg_ratio.to_string(),
            "positives-per-anchor" => self.sampling.positives_per_anchor.to_string(),
            "val-fraction" => self.val_fraction.to_string(),
            "embed-dim" => self.embed_dim.to_string(),
            "hidden-dim" => self.hidden_dim.to_string(),
            "batch-size" => self.train.batch_size.to_string(),
            "max-epochs" => self.train.max_epochs.to_string(),
            "patience" => self.train.patience.to_string(),
            "loss-kind" => self.train.loss_kind.to_string(),
            "learning-rate" => self.train.optimizer.learning_rate.to_string(),
            "rho" => self.train.optimizer.rho.to_string(),
            "epsilon" => self.train.optimizer.epsilon.to_string(),
            "m" => self.index.m.to_string(),
            "ef-construction" => self.index.ef_construction.to_string(),
            "ef-search" => self.index.ef_search.to_string(),
            "threshold" => self.threshold.to_string(),
            "n" => self.n.to_string(),
            "seed" => self.seed.to_string(),
            "threads" => self.threads.to_string(),
            _ => return None,
        })
    }

    /// The full configuration in config-file syntax.
    pub fn describe(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.threads < 1 {
            return bad("threads must be >= 1");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val-fraction must be in (0, 1)");
        }
        if !(-1.0..=1.0).contains(&self.threshold) {
            return bad("threshold must be in [-1, 1]");
        }
        if self.embed_dim < 1 || self.hidden_dim < 1 || self.encode.title_len < 1 || self.encode.desc_len < 1 {
            return bad("dimensions and sequence lengths must be >= 1");
        }
        if self.train.batch_size < 1 || self.train.patience < 1 {
            return bad("batch-size and patience must be >= 1");
        }
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(self.train.optimizer.learning_rate)
            || !(0.0..1.0).contains(&self.train.optimizer.rho)
            || !positive(self.train.optimizer.epsilon)
        {
            return bad("learning-rate and epsilon must be > 0 and rho in [0, 1)");
        }
        if self.index.m < 2 || self.index.ef_construction < 1 || self.index.ef_search < 1 {
            return bad("m must be >= 2 and ef values >= 1");
        }
        Ok(())
    }
}

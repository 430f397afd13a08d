//! Run configuration: a sectioned key-value file (TOML syntax) where every
//! key can be overridden on the command line as `--section.key value`.
//!
//! ```text
//! [run]
//! seed = 7
//! out = "runs/exp1"
//!
//! [corpus]
//! path = "corpus.json"
//!
//! [embeddings]
//! strategy = "file"          # random | file | table_skipgram | column_skipgram
//! path = "vectors.txt"
//!
//! [model]
//! embed_dim = 32
//!
//! [eval]
//! methods = ["tabsim", "jaccard"]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tablesim_core::baselines::LrConfig;
use tablesim_core::embeddings::{EmbeddingFile, SkipgramConfig};
use tablesim_core::eval::{EmbeddingSource, EmbeddingStrategy, EvalConfig, Method};
use tablesim_core::layers::TabularVariant;
use tablesim_core::metrics::GainKind;
use tablesim_core::siamese::{ModelConfig, TrainConfig};
use tablesim_core::table::ShapeConfig;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub corpus: CorpusSection,
    pub embeddings: EmbeddingsSection,
    pub model: ModelSection,
    pub shape: ShapeConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub lr: LrSection,
    pub synthetic: SyntheticSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Required; seeds every random choice of a command.
    pub seed: Option<u64>,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: None,
            out: PathBuf::from("."),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSection {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingsSection {
    pub strategy: String,
    pub path: Option<PathBuf>,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub permutations_per_column: usize,
    pub learning_rate: f64,
}

impl Default for EmbeddingsSection {
    fn default() -> Self {
        let sg = SkipgramConfig::default();
        Self {
            strategy: "random".into(),
            path: None,
            window: sg.window,
            negatives: sg.negatives,
            epochs: sg.epochs,
            permutations_per_column: sg.permutations_per_column,
            learning_rate: sg.learning_rate,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub hidden: usize,
    pub mlp_out: usize,
    pub margin: f64,
    pub use_caption: bool,
    pub variant: TabularVariant,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            embed_dim: m.embed_dim,
            hidden: m.hidden,
            mlp_out: m.mlp_out,
            margin: m.margin,
            use_caption: m.use_caption,
            variant: m.variant,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    /// Train on this fold's training split instead of all pairs.
    pub fold: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            rho: t.rho,
            epsilon: t.epsilon,
            fold: None,
        }
    }
}

/// A list given either as an array or as one comma-separated string.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StringList {
    Joined(String),
    Items(Vec<String>),
}

impl StringList {
    pub fn items(&self) -> Vec<String> {
        match self {
            StringList::Joined(s) => s
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
            StringList::Items(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub methods: StringList,
    pub k_folds: usize,
    pub gain: GainKind,
    pub parallel: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            methods: StringList::Items(vec!["tabsim".into(), "jaccard".into()]),
            k_folds: 5,
            gain: GainKind::Exponential,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LrSection {
    pub l2: Option<f64>,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LrSection {
    fn default() -> Self {
        let c = LrConfig::default();
        Self {
            l2: c.l2,
            tolerance: c.tolerance,
            max_iter: c.max_iter,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSection {
    pub queries: usize,
    pub candidates: usize,
    pub topics: usize,
}

impl Default for SyntheticSection {
    fn default() -> Self {
        Self {
            queries: 100,
            candidates: 4,
            topics: 8,
        }
    }
}

/// Parses an override value as a TOML value, falling back to a plain
/// string (so `--corpus.path data/c.json` needs no quoting).
fn override_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> CliResult<()> {
    let (section, field) = key
        .split_once('.')
        .filter(|(s, f)| !s.is_empty() && !f.is_empty() && !f.contains('.'))
        .ok_or_else(|| CliError::Config(format!("override key {key:?} must look like section.key")))?;
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(CliError::Config(format!("{section} is not a section")));
    };
    sec.insert(field.to_string(), value);
    Ok(())
}

/// Loads the optional config file and applies `overrides` in order.
pub fn load(path: Option<&Path>, overrides: &[Override]) -> CliResult<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            text.parse::<toml::Table>()
                .map_err(|e| CliError::Config(format!("config {}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    for (key, raw) in overrides {
        set_key(&mut table, key, override_value(raw))?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("config: {}", e.message())))
}

/// `section.key` and its raw value.
pub type Override = (String, String);

/// Splits `--section.key value` and `--section.key=value` arguments out of
/// the command line; everything else is left for the argument parser.
pub fn extract_overrides(args: Vec<String>) -> CliResult<(Vec<String>, Vec<Override>)> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(name) = arg
            .strip_prefix("--")
            .filter(|n| n.split('=').next().is_some_and(|k| k.contains('.')))
        else {
            rest.push(arg);
            continue;
        };
        match name.split_once('=') {
            Some((k, v)) => overrides.push((k.to_string(), v.to_string())),
            None => {
                let v = it
                    .next()
                    .ok_or_else(|| CliError::Config(format!("--{name} needs a value")))?;
                overrides.push((name.to_string(), v));
            }
        }
    }
    Ok((rest, overrides))
}

impl RunConfig {
    pub fn seed(&self) -> CliResult<u64> {
        self.run
            .seed
            .ok_or_else(|| CliError::Config("a seed is required: pass --seed or set run.seed".into()))
    }

    pub fn corpus_path(&self) -> CliResult<&Path> {
        let p = self
            .corpus
            .path
            .as_deref()
            .ok_or_else(|| CliError::Config("no corpus given: set corpus.path".into()))?;
        if !p.exists() {
            return Err(CliError::Config(format!("corpus file {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn model(&self) -> CliResult<ModelConfig> {
        let m = &self.model;
        let config = ModelConfig {
            embed_dim: m.embed_dim,
            hidden: m.hidden,
            mlp_out: m.mlp_out,
            margin: m.margin,
            use_caption: m.use_caption,
            variant: m.variant,
            shape: self.shape,
            seed: self.seed()?,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn train(&self) -> CliResult<TrainConfig> {
        let t = &self.train;
        let config = TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            seed: self.seed()?,
            learning_rate: t.learning_rate,
            rho: t.rho,
            epsilon: t.epsilon,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn embedding_source(&self) -> CliResult<EmbeddingSource> {
        let e = &self.embeddings;
        let strategy: EmbeddingStrategy = e.strategy.parse()?;
        let file = match (strategy, &e.path) {
            (EmbeddingStrategy::File, Some(p)) => {
                if !p.exists() {
                    return Err(CliError::Config(format!(
                        "embedding file {} does not exist",
                        p.display()
                    )));
                }
                Some(EmbeddingFile::read(p)?)
            }
            (EmbeddingStrategy::File, None) => {
                return Err(CliError::Config("embedding strategy file needs embeddings.path".into()))
            }
            _ => None,
        };
        let skipgram = SkipgramConfig {
            dim: self.model.embed_dim,
            window: e.window,
            negatives: e.negatives,
            epochs: e.epochs,
            permutations_per_column: e.permutations_per_column,
            learning_rate: e.learning_rate,
            seed: self.seed()?,
        };
        skipgram.validate()?;
        Ok(EmbeddingSource {
            strategy,
            file,
            skipgram,
        })
    }

    pub fn eval(&self, parallel_flag: bool) -> CliResult<EvalConfig> {
        let methods = self
            .eval
            .methods
            .items()
            .iter()
            .map(|m| m.parse::<Method>())
            .collect::<Result<Vec<_>, _>>()?;
        if methods.is_empty() {
            return Err(CliError::Config("eval.methods is empty".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = methods.iter().find(|m| !seen.insert(**m)) {
            return Err(CliError::Config(format!("method {dup} listed twice")));
        }
        let lr = LrConfig {
            l2: self.lr.l2,
            tolerance: self.lr.tolerance,
            max_iter: self.lr.max_iter,
        };
        Ok(EvalConfig {
            methods,
            k_folds: self.eval.k_folds,
            seed: self.seed()?,
            model: self.model()?,
            train: self.train()?,
            lr,
            gain: self.eval.gain,
            parallel: self.eval.parallel || parallel_flag,
        })
    }
}

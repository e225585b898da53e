//! Flat run configuration: a TOML file of `key = value` lines, overridden by
//! `DEEPRED_SEED` and then by `--key value` pairs on the command line.

use std::path::{Path, PathBuf};

use deepred_core::eventlog::{ColumnRef, FormatDescriptor};
use deepred_core::evaluator::{RankMode, ReplayOptions};
use deepred_core::model::{DeltaTransform, EncoderMode, ModelConfig, PoolKind};
use deepred_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::{CliError, Result};

/// Environment variable that overrides `seed`.
pub const SEED_ENV: &str = "DEEPRED_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Synthetic {
    None,
    Planted,
    TwoBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Val,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: String,
    pub cache: String,
    pub synthetic: Synthetic,
    pub synthetic_events: usize,
    pub user_column: String,
    pub item_column: String,
    pub time_column: String,
    pub has_header: bool,
    pub output_dir: String,
    pub checkpoint: String,

    pub mode: EncoderMode,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_fraction: f64,

    pub d: usize,
    pub hidden: usize,
    pub k: usize,
    pub delta_transform: DeltaTransform,
    pub pooling: PoolKind,
    pub use_theta: bool,
    pub delta_scale: f64,

    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub gamma: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub shuffle: bool,
    pub checkpoint_every: usize,
    pub clip_norm: f64,

    pub split: SplitName,
    pub rank_mode: RankMode,
    pub refresh_store: bool,
    pub dump_ranks: bool,

    pub user: String,
    pub time: f64,
    pub top_k: usize,

    pub sweep_key: String,
    pub sweep_values: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        RunConfig {
            data: String::new(),
            cache: String::new(),
            synthetic: Synthetic::None,
            synthetic_events: 20_000,
            user_column: "0".into(),
            item_column: "1".into(),
            time_column: "2".into(),
            has_header: true,
            output_dir: "runs".into(),
            checkpoint: String::new(),
            mode: model.mode,
            train_fraction: 0.8,
            val_fraction: 0.1,
            test_fraction: 0.1,
            d: model.d,
            hidden: model.hidden,
            k: model.k,
            delta_transform: model.delta_transform,
            pooling: model.pooling,
            use_theta: model.use_theta,
            delta_scale: 0.0,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            epochs: train.epochs,
            gamma: train.gamma,
            beta1: train.beta1,
            beta2: train.beta2,
            epsilon: train.epsilon,
            seed: train.seed,
            shuffle: train.shuffle,
            checkpoint_every: train.checkpoint_every,
            clip_norm: train.clip_norm,
            split: SplitName::Test,
            rank_mode: RankMode::Exact,
            refresh_store: true,
            dump_ranks: false,
            user: String::new(),
            time: -1.0,
            top_k: 10,
            sweep_key: String::new(),
            sweep_values: String::new(),
        }
    }
}

/// Every key with its description, in help order.
pub const KEY_DOCS: &[(&str, &str)] = &[
    ("data", "CSV event log with columns user,item,timestamp (extra columns ignored)"),
    ("cache", "binary log cache; written by ingest, read instead of `data` when the file exists"),
    ("synthetic", "none | planted | two_block: generate a log from `seed` instead of reading one"),
    ("synthetic_events", "number of events drawn by the planted-context generator"),
    ("user_column", "user column: 0-based index or header name"),
    ("item_column", "item column: 0-based index or header name"),
    ("time_column", "timestamp column: 0-based index or header name"),
    ("has_header", "whether the CSV starts with a header row"),
    ("output_dir", "directory for checkpoints, metrics, results and the resolved config"),
    ("checkpoint", "checkpoint to load; empty means <output_dir>/best.ckpt"),
    ("mode", "temporal | static encoder (static-train and static-eval force static)"),
    ("train_fraction", "training share of the log (events in temporal mode, distinct edges in static mode)"),
    ("val_fraction", "validation share"),
    ("test_fraction", "test share; the three fractions must sum to 1"),
    ("d", "long-term embedding dimension"),
    ("hidden", "recurrent state dimension; must equal d in static mode"),
    ("k", "history length"),
    ("delta_transform", "raw | log_decay"),
    ("pooling", "max | mean attention pooling"),
    ("use_theta", "learn a bilinear alignment matrix"),
    ("delta_scale", "divisor for raw deltas; 0 means the mean per-entity gap of the training split"),
    ("batch_size", "samples per optimizer step"),
    ("learning_rate", "Adam step size"),
    ("epochs", "training epochs; the best validation epoch is kept"),
    ("gamma", "orthogonality regularizer weight"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("epsilon", "Adam denominator constant"),
    ("seed", "root seed for every random stream (also settable through DEEPRED_SEED)"),
    ("shuffle", "shuffle training samples each epoch"),
    ("checkpoint_every", "write epoch-<n>.ckpt every this many epochs (0 disables)"),
    ("clip_norm", "global gradient-norm clip threshold (positive)"),
    ("split", "val | test partition used by evaluate and static-eval"),
    ("rank_mode", "exact | cached candidate scoring"),
    ("refresh_store", "refresh stored short-term embeddings after each revealed event"),
    ("dump_ranks", "write ranks-<split>.csv with one rank per evaluated event"),
    ("user", "user id for predict"),
    ("time", "query time for predict; negative means one time unit after the last event"),
    ("top_k", "number of items printed by predict"),
    ("sweep_key", "k | d | train_fraction"),
    ("sweep_values", "comma-separated values for sweep_key"),
];

/// Help text listing every key, its default and its meaning.
pub fn keys_help() -> String {
    let defaults = default_table();
    let mut out = String::from("Configuration keys (config file `key = value`, or `--key value` on the command line):\n");
    for (key, doc) in KEY_DOCS {
        let default = defaults.get(*key).map_or_else(String::new, Value::to_string);
        out.push_str(&format!("  {key:<17} {doc} [default: {default}]\n"));
    }
    out.push_str(&format!("\nThe {SEED_ENV} environment variable overrides `seed`; command-line keys override both.\n"));
    out
}

fn default_table() -> Table {
    Table::try_from(RunConfig::default()).expect("default config serializes")
}

/// Splits `--key value` / `--key=value` tokens into pairs. Dashes inside
/// keys are accepted as underscores.
pub fn parse_overrides(tokens: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut iter = tokens.iter();
    while let Some(token) = iter.next() {
        let Some(body) = token.strip_prefix("--") else {
            return Err(CliError::Usage(format!("expected --key value, found `{token}`")));
        };
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let value = iter.next().ok_or_else(|| CliError::Usage(format!("missing value for --{body}")))?;
                (body.to_string(), value.clone())
            }
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

/// Converts `value` to the TOML type of the key's default.
fn coerce(key: &str, value: Value, default: &Value) -> Result<Value> {
    let bad = |v: &Value| CliError::Config(format!("key `{key}` expects a {}, got {v}", default.type_str()));
    Ok(match (default, value) {
        (Value::String(_), Value::String(s)) => Value::String(s),
        (Value::String(_), v @ (Value::Integer(_) | Value::Float(_) | Value::Boolean(_))) => Value::String(v.to_string()),
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (Value::Float(_), v @ Value::Float(_)) => v,
        (Value::Integer(_), v @ Value::Integer(_)) => v,
        (Value::Boolean(_), v @ Value::Boolean(_)) => v,
        (_, v) => return Err(bad(&v)),
    })
}

/// Reads a command-line value as TOML where possible (`5`, `1e-3`, `true`),
/// otherwise as a bare string.
fn parse_scalar(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .filter(|v| !matches!(v, Value::Table(_) | Value::Array(_) | Value::Datetime(_)))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_key(table: &mut Table, defaults: &Table, key: &str, value: Value) -> Result<()> {
    let default = defaults.get(key).ok_or_else(|| {
        CliError::Config(format!("unknown configuration key `{key}` (see --help for the list)"))
    })?;
    table.insert(key.to_string(), coerce(key, value, default)?);
    Ok(())
}

/// Resolves the configuration from an optional file, an optional seed from
/// the environment and command-line pairs, in increasing precedence.
pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, overrides: &[(String, String)]) -> Result<RunConfig> {
    let defaults = default_table();
    let mut table = Table::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let parsed: Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        for (key, value) in parsed {
            set_key(&mut table, &defaults, &key, value)?;
        }
    }
    if let Some(raw) = env_seed {
        let seed: u64 = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{SEED_ENV} must be a non-negative integer, got `{raw}`")))?;
        table.insert("seed".into(), Value::Integer(seed as i64));
    }
    for (key, raw) in overrides {
        set_key(&mut table, &defaults, key, parse_scalar(raw))?;
    }
    let cfg: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.fractions();
        if !(a > 0.0 && b > 0.0 && c > 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
            return Err(CliError::Config(format!(
                "train_fraction, val_fraction and test_fraction must be positive and sum to 1, got {a}, {b}, {c}"
            )));
        }
        if self.top_k == 0 {
            return Err(CliError::Config("top_k must be at least 1".into()));
        }
        if !(self.delta_scale >= 0.0 && self.delta_scale.is_finite()) {
            return Err(CliError::Config(format!("delta_scale must be 0 or positive, got {}", self.delta_scale)));
        }
        self.model_config(1.0).validate()?;
        self.train_config().validate()?;
        Ok(())
    }

    pub fn fractions(&self) -> (f64, f64, f64) {
        (self.train_fraction, self.val_fraction, self.test_fraction)
    }

    pub fn model_config(&self, delta_scale: f64) -> ModelConfig {
        ModelConfig {
            d: self.d,
            hidden: self.hidden,
            k: self.k,
            delta_transform: self.delta_transform,
            pooling: self.pooling,
            use_theta: self.use_theta,
            mode: self.mode,
            delta_scale,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            gamma: self.gamma,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            seed: self.seed,
            shuffle: self.shuffle,
            checkpoint_every: self.checkpoint_every,
            clip_norm: self.clip_norm,
        }
    }

    pub fn replay_options(&self) -> ReplayOptions {
        ReplayOptions { mode: self.rank_mode, refresh: self.refresh_store }
    }

    pub fn format(&self) -> FormatDescriptor {
        let column = |raw: &str| match raw.parse::<usize>() {
            Ok(i) => ColumnRef::Index(i),
            Err(_) => ColumnRef::Name(raw.to_string()),
        };
        FormatDescriptor {
            user: column(&self.user_column),
            item: column(&self.item_column),
            time: column(&self.time_column),
            has_header: self.has_header,
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        PathBuf::from(&self.output_dir)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        if self.checkpoint.is_empty() {
            self.output_dir().join("best.ckpt")
        } else {
            PathBuf::from(&self.checkpoint)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the resolved configuration as `<output_dir>/<command>.toml`.
    pub fn write_resolved(&self, command: &str) -> Result<PathBuf> {
        let dir = self.output_dir();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let path = dir.join(format!("{command}.toml"));
        std::fs::write(&path, self.to_toml()).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn every_key_is_documented_once() {
        let defaults = default_table();
        let documented: Vec<&str> = KEY_DOCS.iter().map(|(k, _)| *k).collect();
        let mut sorted = documented.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), documented.len());
        let mut keys: Vec<&str> = defaults.keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
        assert_eq!(resolve(None, None, &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_are_typed_by_default() {
        let cfg = resolve(
            None,
            None,
            &pairs(&[("k", "7"), ("learning_rate", "1"), ("user", "42"), ("shuffle", "false"), ("pooling", "mean")]),
        )
        .unwrap();
        assert_eq!(cfg.k, 7);
        assert_eq!(cfg.learning_rate, 1.0);
        assert_eq!(cfg.user, "42");
        assert!(!cfg.shuffle);
        assert_eq!(cfg.pooling, PoolKind::Mean);
    }

    #[test]
    fn unknown_and_mistyped_keys_are_rejected() {
        let err = resolve(None, None, &pairs(&[("learning_rte", "0.1")])).unwrap_err();
        assert!(err.to_string().contains("learning_rte"), "{err}");
        assert!(resolve(None, None, &pairs(&[("k", "many")])).is_err());
        assert!(resolve(None, None, &pairs(&[("pooling", "median")])).is_err());
        assert!(resolve(None, None, &pairs(&[("train_fraction", "0.5")])).is_err());
    }

    #[test]
    fn precedence_is_file_then_env_then_command_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 1\nk = 3\nd = 8\nhidden = 8\n").unwrap();
        let file_only = resolve(Some(&path), None, &[]).unwrap();
        assert_eq!((file_only.seed, file_only.k), (1, 3));
        let with_env = resolve(Some(&path), Some("9"), &[]).unwrap();
        assert_eq!(with_env.seed, 9);
        let with_cli = resolve(Some(&path), Some("9"), &pairs(&[("seed", "4")])).unwrap();
        assert_eq!(with_cli.seed, 4);
        assert!(resolve(None, Some("-3"), &[]).is_err());
    }

    #[test]
    fn resolved_file_round_trips() {
        let cfg = resolve(None, None, &pairs(&[("k", "2"), ("rank_mode", "cached"), ("data", "a b.csv")])).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, cfg.to_toml()).unwrap();
        assert_eq!(resolve(Some(&path), None, &[]).unwrap(), cfg);
    }

    #[test]
    fn override_tokens() {
        let tokens: Vec<String> = ["--k", "3", "--learning-rate=0.5"].iter().map(|s| s.to_string()).collect();
        assert_eq!(parse_overrides(&tokens).unwrap(), pairs(&[("k", "3"), ("learning_rate", "0.5")]));
        assert!(parse_overrides(&["--k".to_string()]).is_err());
        assert!(parse_overrides(&["k".to_string(), "3".to_string()]).is_err());
    }

    #[test]
    fn help_lists_defaults() {
        let help = keys_help();
        for (key, _) in KEY_DOCS {
            assert!(help.contains(&format!("  {key} ")), "{key}");
        }
        assert!(help.contains("[default: 0.001]"));
    }
}

//! Run configuration: one TOML schema with a section per concern. Unknown
//! keys anywhere are errors.
//!
//! ```toml
//! schema_version = 1
//!
//! [data]
//! source = "data/maven.jsonl"
//! target = "data/ace.jsonl"
//! extractor = "minie"
//!
//! [model]            # encoder shape
//! hidden_size = 16
//!
//! [train]            # optimization
//! epochs = 10
//! lr = 1e-5
//!
//! [matrix]
//! designs = ["vanilla", "implicit", "explicit"]
//! shots = [0, 5, 10, 50, 100, 250, 500]
//!
//! [synth]
//! overlap = 1.0
//!
//! [output]
//! dir = "runs"
//! ```
//!
//! Overrides given as `section.key=value` are applied before validation;
//! values are parsed as TOML literals and fall back to plain strings.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use relbridge_core::experiment::MatrixSpec;
use relbridge_core::hash::config_hash;
use relbridge_core::regimes::{Hyperparams, Regime};
use relbridge_core::synth::SynthConfig;
use relbridge_core::{Design, ModelConfig};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub schema_version: u32,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: Hyperparams,
    pub matrix: MatrixConfig,
    pub synth: SynthConfig,
    pub output: OutputConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            schema_version: SCHEMA_VERSION,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: Hyperparams::default(),
            matrix: MatrixConfig::default(),
            synth: SynthConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Canonical JSONL source corpus with relation layer.
    pub source: Option<PathBuf>,
    /// Canonical JSONL target corpus with relation layer.
    pub target: Option<PathBuf>,
    pub extractor: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { source: None, target: None, extractor: "minie".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatrixConfig {
    pub designs: Vec<Design>,
    pub regimes: Vec<Regime>,
    pub shots: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_samples: usize,
    pub mlm: bool,
    /// Seed of the few-shot draws, separate from training seeds.
    pub master_seed: u64,
    pub workers: usize,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        let spec = MatrixSpec::default();
        MatrixConfig {
            designs: spec.designs,
            regimes: spec.regimes,
            shots: spec.shots,
            seeds: spec.seeds,
            n_samples: spec.n_samples,
            mlm: spec.mlm,
            master_seed: 0,
            workers: 1,
        }
    }
}

impl MatrixConfig {
    pub fn spec(&self) -> MatrixSpec {
        MatrixSpec {
            designs: self.designs.clone(),
            regimes: self.regimes.clone(),
            shots: self.shots.clone(),
            seeds: self.seeds.clone(),
            n_samples: self.n_samples,
            mlm: self.mlm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Record store file; defaults to `$RELBRIDGE_STORE/records.jsonl`, then
    /// `<dir>/records.jsonl`.
    pub store: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("runs"), store: None }
    }
}

/// Error in the configuration itself, as opposed to its inputs.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("key was just parsed"),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Sets `dotted.key` in `table`, creating intermediate tables.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override {assignment:?} is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError(format!("override key {key:?} is malformed")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override {key:?}: {p} is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl Config {
    /// File contents (or defaults) with overrides applied, then validated.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config> {
        let mut table = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        Ok(Config::from_table(table)?)
    }

    pub fn from_table(table: toml::Table) -> Result<Config, ConfigError> {
        let config: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(format!("config: {e}")))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "config schema_version {} is not supported (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn hash(&self) -> String {
        config_hash(self)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| anyhow!("cannot serialize config: {e}"))
    }

    pub fn source_path(&self) -> Result<&Path> {
        match &self.data.source {
            Some(p) => Ok(p),
            None => bail!(ConfigError("data.source is not set".into())),
        }
    }

    pub fn target_path(&self) -> Result<&Path> {
        match &self.data.target {
            Some(p) => Ok(p),
            None => bail!(ConfigError("data.target is not set".into())),
        }
    }
}

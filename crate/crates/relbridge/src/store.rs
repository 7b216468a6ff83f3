//! Append-only JSON Lines record store.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use relbridge_core::experiment::{ExperimentError, RecordStore, RunRecord};

use crate::io::append_line;

/// Environment variable naming the directory that holds `records.jsonl`.
pub const STORE_ENV: &str = "RELBRIDGE_STORE";

#[derive(Debug)]
pub struct JsonlStore {
    path: PathBuf,
}

impl JsonlStore {
    /// Opens (or creates) the store. A truncated last line left by an
    /// interrupted append is removed.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        if path.exists() {
            let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
            if !text.is_empty() && !text.ends_with('\n') {
                let keep = text.rfind('\n').map_or(0, |i| i + 1);
                fs::write(&path, &text[..keep])?;
            }
        }
        Ok(JsonlStore { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> Result<Vec<RunRecord>> {
        load_records(&self.path)
    }
}

pub fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    crate::formats::read_jsonl(path)
}

impl RecordStore for JsonlStore {
    fn completed(&self) -> Result<BTreeSet<String>, ExperimentError> {
        let records = self.records().map_err(|e| ExperimentError::Store(format!("{e:#}")))?;
        Ok(records.into_iter().map(|r| r.config_hash).collect())
    }

    fn append(&mut self, record: &RunRecord) -> Result<(), ExperimentError> {
        let line = serde_json::to_string(record).map_err(|e| ExperimentError::Store(e.to_string()))?;
        append_line(&self.path, &line).map_err(|e| ExperimentError::Store(format!("{e:#}")))
    }
}

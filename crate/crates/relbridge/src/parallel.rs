//! Concurrent execution of the experiment matrix.
//!
//! Source checkpoints are trained first, then cells run on a pool of scoped
//! threads pulling from a shared index. Every run owns its model; the only
//! shared state is the record store behind a mutex.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{anyhow, Result};
use relbridge_core::experiment::{Cell, MatrixSpec, RecordStore, RunRecord, Runner, SourceKey, SourceModel};
use relbridge_core::regimes::MetricRecord;
use serde::Serialize;

use crate::io::atomic_write;

#[derive(Serialize)]
struct MetricLine<'a> {
    config_hash: &'a str,
    #[serde(flatten)]
    record: &'a MetricRecord,
}

/// JSON Lines metric log, each line tagged with the run's config hash.
pub fn metric_log(config_hash: &str, metrics: &[MetricRecord]) -> Result<String> {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(&MetricLine { config_hash, record: m })?);
        out.push('\n');
    }
    Ok(out)
}

pub fn source_label(key: &SourceKey) -> String {
    format!("source-{}-seed{}{}", key.design, key.seed, if key.mlm { "-mlm" } else { "" })
}

#[derive(Clone, Debug)]
pub struct MatrixOptions {
    pub workers: usize,
    /// Where per-run metric logs go; `None` skips them.
    pub log_dir: Option<PathBuf>,
    /// Zero wall times so repeated invocations produce identical records.
    pub deterministic: bool,
}

/// Runs `f` over `items` on up to `workers` threads; stops at the first error.
fn pool<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let results: Mutex<Vec<(usize, R)>> = Mutex::new(Vec::with_capacity(items.len()));
    let first_error: Mutex<Option<anyhow::Error>> = Mutex::new(None);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(item) = items.get(i) else { break };
                match f(item) {
                    Ok(r) => results.lock().unwrap().push((i, r)),
                    Err(e) => {
                        failed.store(true, Ordering::SeqCst);
                        first_error.lock().unwrap().get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);
    Ok(results.into_iter().map(|(_, r)| r).collect())
}

fn write_log(dir: Option<&Path>, name: &str, hash: &str, metrics: &[MetricRecord]) -> Result<()> {
    if let Some(dir) = dir {
        atomic_write(&dir.join(format!("{name}.metrics.jsonl")), metric_log(hash, metrics)?.as_bytes())?;
    }
    Ok(())
}

/// Trains the missing source checkpoints for `cells` concurrently.
pub fn train_sources(runner: &mut Runner<'_>, cells: &[Cell], opts: &MatrixOptions) -> Result<()> {
    let keys = runner.missing_sources(cells);
    let shared: &Runner<'_> = runner;
    let trained: Vec<(SourceKey, SourceModel)> = pool(&keys, opts.workers, |key| {
        let model = shared.train_source(*key)?;
        let hash = relbridge_core::hash::config_hash(&(source_label(key), &shared.hyper, &shared.model));
        write_log(opts.log_dir.as_deref(), &source_label(key), &hash, &model.metrics)?;
        Ok((*key, model))
    })?;
    for (key, model) in trained {
        runner.insert_source(key, model);
    }
    Ok(())
}

/// Runs every cell of `spec` not yet in `store`. Records are appended as runs
/// finish; the returned list is in cell order.
pub fn run_matrix<S: RecordStore + Send>(
    runner: &mut Runner<'_>,
    spec: &MatrixSpec,
    store: &mut S,
    opts: &MatrixOptions,
) -> Result<Vec<RunRecord>> {
    let done = store.completed()?;
    let todo: Vec<Cell> = spec
        .cells()
        .into_iter()
        .filter(|c| !done.contains(&runner.run_config(c).hash()))
        .collect();
    train_sources(runner, &todo, opts)?;
    let shared: &Runner<'_> = runner;
    let store = Mutex::new(store);
    pool(&todo, opts.workers, |cell| {
        let start = Instant::now();
        let mut out = shared.run_cell(cell)?;
        if !opts.deterministic {
            out.record.wall_time = start.elapsed().as_secs_f64();
        }
        write_log(opts.log_dir.as_deref(), &out.record.config_hash, &out.record.config_hash, &out.metrics)?;
        store
            .lock()
            .map_err(|_| anyhow!("record store lock poisoned"))?
            .append(&out.record)?;
        Ok(out.record)
    })
}

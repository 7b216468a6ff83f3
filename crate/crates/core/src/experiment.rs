//! Few-shot sampling, the experiment matrix, and aggregation into result
//! tables.
//!
//! Few-shot sets depend only on the master seed, the target corpus name, the
//! shot count and the sample index, so every regime and design sees the same
//! sentences. Training stochasticity comes from the per-run seed.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Split};
use crate::hash;
use crate::model::grid::{grid_search, GridOutcome, IMPLICIT_DIMS, IMPLICIT_LRS};
use crate::model::{Design, Example, ModelBundle, ModelConfig};
use crate::regimes::{self, Hyperparams, MetricRecord, Regime, RegimeConfig, RegimeError, Selection};
use crate::rng;
use crate::tagging::EvalResult;

pub const SHOT_LEVELS: [usize; 6] = [5, 10, 50, 100, 250, 500];
pub const SEEDS: [u64; 3] = [0, 1, 2];
pub const N_SAMPLES: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ExperimentError {
    #[error("{corpus}: {k} shots requested but only {pool} train sentences contain triggers")]
    PoolTooSmall { corpus: String, k: usize, pool: usize },
    #[error("no source checkpoint for design {design}, seed {seed} (mlm: {mlm})")]
    MissingCheckpoint { design: Design, seed: u64, mlm: bool },
    #[error("no records to aggregate")]
    NoRecords,
    #[error("record store: {0}")]
    Store(String),
    #[error(transparent)]
    Regime(#[from] RegimeError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSample {
    pub target_corpus: String,
    pub shots: usize,
    pub sample_index: usize,
    /// In corpus order.
    pub sentence_ids: Vec<String>,
}

/// Draws `k` distinct trigger-bearing train sentences. The result depends
/// only on `(corpus name, k, sample_index, master_seed)` and the corpus.
pub fn draw_fewshot(corpus: &Corpus, k: usize, sample_index: usize, master_seed: u64) -> Result<FewShotSample, ExperimentError> {
    let pool: Vec<&str> = corpus
        .split(Split::Train)
        .filter(|s| s.has_triggers())
        .map(|s| s.sentence_id.as_str())
        .collect();
    if k > pool.len() {
        return Err(ExperimentError::PoolTooSmall { corpus: corpus.name().into(), k, pool: pool.len() });
    }
    let seed = rng::derive(
        rng::derive(master_seed, corpus.name()),
        &format!("fewshot/{k}/{sample_index}"),
    );
    let mut picked = index::sample(&mut rng::seeded(seed), pool.len(), k).into_vec();
    picked.sort_unstable();
    Ok(FewShotSample {
        target_corpus: corpus.name().into(),
        shots: k,
        sample_index,
        sentence_ids: picked.into_iter().map(|i| pool[i].to_string()).collect(),
    })
}

/// One cell of the matrix. `regime == None` is a zero-shot evaluation.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub regime: Option<Regime>,
    pub design: Design,
    pub shots: usize,
    pub seed: u64,
    pub sample_index: Option<usize>,
    pub mlm: bool,
}

impl Cell {
    pub fn zero_shot(design: Design, seed: u64) -> Self {
        Cell { regime: None, design, shots: 0, seed, sample_index: None, mlm: false }
    }

    /// Source checkpoint this cell starts from, if any.
    pub fn source_key(&self) -> Option<SourceKey> {
        match self.regime {
            None => Some(SourceKey { design: self.design, seed: self.seed, mlm: false }),
            Some(r) if r.needs_source_checkpoint() => Some(SourceKey { design: self.design, seed: self.seed, mlm: self.mlm }),
            Some(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub designs: Vec<Design>,
    pub regimes: Vec<Regime>,
    /// `0` adds the zero-shot cells (one per design and seed).
    pub shots: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n_samples: usize,
    pub mlm: bool,
}

impl Default for MatrixSpec {
    fn default() -> Self {
        let mut shots = alloc::vec![0];
        shots.extend(SHOT_LEVELS);
        MatrixSpec {
            designs: Design::ALL.to_vec(),
            regimes: Regime::ALL.to_vec(),
            shots,
            seeds: SEEDS.to_vec(),
            n_samples: N_SAMPLES,
            mlm: false,
        }
    }
}

impl MatrixSpec {
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &design in &self.designs {
            if self.shots.contains(&0) {
                out.extend(self.seeds.iter().map(|&s| Cell::zero_shot(design, s)));
            }
            for &regime in &self.regimes {
                for &shots in self.shots.iter().filter(|&&k| k > 0) {
                    for &seed in &self.seeds {
                        for sample in 0..self.n_samples {
                            out.push(Cell {
                                regime: Some(regime),
                                design,
                                shots,
                                seed,
                                sample_index: Some(sample),
                                mlm: self.mlm,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

/// Everything that determines a run; its hash is the run's identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub source_corpus: String,
    pub target_corpus: String,
    pub extractor: String,
    pub master_seed: u64,
    pub cell: Cell,
    pub hyper: Hyperparams,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn hash(&self) -> String {
        hash::config_hash(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub regime: Option<Regime>,
    pub design: Design,
    pub extractor: String,
    pub shots: usize,
    pub seed: u64,
    pub sample_index: Option<usize>,
    pub mlm: bool,
    pub eval: EvalResult,
    pub wall_time: f64,
    pub selected_epoch: Option<usize>,
    /// `argmax_valid`, `final_epoch` or `source` (zero-shot).
    pub selection: String,
    /// Hyperparameters that differ from the reference values.
    pub overrides: Vec<String>,
    pub config: RunConfig,
}

/// Append-only run storage.
pub trait RecordStore {
    fn completed(&self) -> Result<BTreeSet<String>, ExperimentError>;
    fn append(&mut self, record: &RunRecord) -> Result<(), ExperimentError>;
}

#[derive(Clone, Debug, Default)]
pub struct MemoryStore {
    pub records: Vec<RunRecord>,
}

impl RecordStore for MemoryStore {
    fn completed(&self) -> Result<BTreeSet<String>, ExperimentError> {
        Ok(self.records.iter().map(|r| r.config_hash.clone()).collect())
    }

    fn append(&mut self, record: &RunRecord) -> Result<(), ExperimentError> {
        self.records.push(record.clone());
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SourceKey {
    pub design: Design,
    pub seed: u64,
    pub mlm: bool,
}

/// A source-trained model plus what its training selected.
#[derive(Clone, Debug)]
pub struct SourceModel {
    pub model: ModelBundle,
    pub valid_f1: Option<f64>,
    pub selected_epoch: Option<usize>,
    /// Relation embedding learning rate used for this model (grid result for
    /// the implicit design).
    pub lr_rel_embed: f64,
    pub grid: Option<GridOutcome>,
    pub metrics: Vec<MetricRecord>,
}

/// Prepared data for one source → target pair.
#[derive(Clone, Debug)]
pub struct Runner<'a> {
    pub source: &'a Corpus,
    pub target: &'a Corpus,
    pub extractor: String,
    pub master_seed: u64,
    pub hyper: Hyperparams,
    pub model: ModelConfig,
    source_train: Vec<Example>,
    source_valid: Vec<Example>,
    target_train: Vec<Example>,
    target_valid: Vec<Example>,
    target_test: Vec<Example>,
    target_index: BTreeMap<String, usize>,
    sources: BTreeMap<SourceKey, SourceModel>,
}

#[derive(Clone, Debug)]
pub struct CellOutput {
    pub record: RunRecord,
    pub metrics: Vec<MetricRecord>,
}

impl<'a> Runner<'a> {
    pub fn new(
        source: &'a Corpus,
        target: &'a Corpus,
        extractor: impl Into<String>,
        master_seed: u64,
        hyper: Hyperparams,
        model: ModelConfig,
    ) -> Self {
        let tok = model.tokenizer();
        let prep = |c: &Corpus, split| c.split(split).map(|s| Example::from_sentence(s, &tok)).collect::<Vec<_>>();
        let target_train = prep(target, Split::Train);
        let target_index = target_train.iter().enumerate().map(|(i, e)| (e.sentence_id.clone(), i)).collect();
        Runner {
            source,
            target,
            extractor: extractor.into(),
            master_seed,
            source_train: prep(source, Split::Train),
            source_valid: prep(source, Split::Valid),
            target_valid: prep(target, Split::Valid),
            target_test: prep(target, Split::Test),
            target_train,
            target_index,
            hyper,
            model,
            sources: BTreeMap::new(),
        }
    }

    pub fn target_test(&self) -> &[Example] {
        &self.target_test
    }

    pub fn target_valid(&self) -> &[Example] {
        &self.target_valid
    }

    pub fn source_valid(&self) -> &[Example] {
        &self.source_valid
    }

    pub fn run_config(&self, cell: &Cell) -> RunConfig {
        RunConfig {
            source_corpus: self.source.name().into(),
            target_corpus: self.target.name().into(),
            extractor: self.extractor.clone(),
            master_seed: self.master_seed,
            cell: cell.clone(),
            hyper: self.hyper.clone(),
            model: self.model.clone(),
        }
    }

    /// Registers an externally trained source model.
    pub fn insert_source(&mut self, key: SourceKey, model: SourceModel) {
        self.sources.insert(key, model);
    }

    pub fn source_model(&self, key: SourceKey) -> Option<&SourceModel> {
        self.sources.get(&key)
    }

    /// Trains a source model. The implicit design runs the dimension and
    /// learning-rate grid unless `implicit_dim_source` fixes the dimension.
    pub fn train_source(&self, key: SourceKey) -> Result<SourceModel, ExperimentError> {
        let mlm_target = key.mlm.then_some(&self.target_train[..]);
        let train = |dim: usize, lr: f64| {
            let hyper = Hyperparams { lr_rel_embed: lr, ..self.hyper.clone() };
            let model = ModelBundle::new(key.design, &self.model, dim, key.mlm, key.seed);
            regimes::train_on_source(model, &hyper, &self.source_train, &self.source_valid, mlm_target, key.seed)
        };
        if key.design != Design::Implicit || self.hyper.implicit_dim_source.is_some() {
            let dim = self.hyper.implicit_dim_source.unwrap_or(self.hyper.implicit_dim_in_domain);
            let out = train(dim, self.hyper.lr_rel_embed)?;
            return Ok(SourceModel {
                model: out.model,
                valid_f1: out.selection_f1,
                selected_epoch: out.selected_epoch,
                lr_rel_embed: self.hyper.lr_rel_embed,
                grid: None,
                metrics: out.metrics,
            });
        }
        let mut outcomes = Vec::new();
        let grid = grid_search(&IMPLICIT_DIMS, &IMPLICIT_LRS, |dim, lr| {
            let out = train(dim, lr)?;
            let f1 = out.selection_f1.unwrap_or(0.0);
            outcomes.push(out);
            Ok::<_, ExperimentError>(f1)
        })?;
        let pick = grid
            .log
            .iter()
            .position(|e| e == &grid.best)
            .expect("best entry is in the log");
        let out = outcomes.swap_remove(pick);
        Ok(SourceModel {
            model: out.model,
            valid_f1: out.selection_f1,
            selected_epoch: out.selected_epoch,
            lr_rel_embed: grid.best.lr_rel_embed,
            grid: Some(grid),
            metrics: out.metrics,
        })
    }

    /// Source checkpoints required by `cells` that are not yet available.
    pub fn missing_sources(&self, cells: &[Cell]) -> Vec<SourceKey> {
        let keys: BTreeSet<SourceKey> = cells.iter().filter_map(Cell::source_key).collect();
        keys.into_iter().filter(|k| !self.sources.contains_key(k)).collect()
    }

    /// Trains every missing source checkpoint needed by `cells`.
    pub fn ensure_sources(&mut self, cells: &[Cell]) -> Result<(), ExperimentError> {
        for key in self.missing_sources(cells) {
            let model = self.train_source(key)?;
            self.sources.insert(key, model);
        }
        Ok(())
    }

    fn fewshot_examples(&self, shots: usize, sample_index: usize) -> Result<Vec<Example>, ExperimentError> {
        let sample = draw_fewshot(self.target, shots, sample_index, self.master_seed)?;
        Ok(sample
            .sentence_ids
            .iter()
            .map(|id| self.target_train[self.target_index[id]].clone())
            .collect())
    }

    /// Runs one cell. Source checkpoints must already be present.
    pub fn run_cell(&self, cell: &Cell) -> Result<CellOutput, ExperimentError> {
        let config = self.run_config(cell);
        let source = match cell.source_key() {
            Some(key) => Some(self.sources.get(&key).ok_or(ExperimentError::MissingCheckpoint {
                design: key.design,
                seed: key.seed,
                mlm: key.mlm,
            })?),
            None => None,
        };
        let (eval, selected_epoch, selection, metrics) = match cell.regime {
            None => {
                let source = source.expect("zero-shot cells have a source key");
                let eval = regimes::zero_shot_eval(&source.model, &self.target_test)?;
                (eval, source.selected_epoch, "source", Vec::new())
            }
            Some(regime) => {
                let sample_index = cell.sample_index.unwrap_or(0);
                let fewshot = self.fewshot_examples(cell.shots, sample_index)?;
                let mut hyper = self.hyper.clone();
                if let Some(s) = source {
                    hyper.lr_rel_embed = s.lr_rel_embed;
                }
                let rc = RegimeConfig {
                    regime,
                    design: cell.design,
                    mlm: cell.mlm,
                    shots: cell.shots,
                    seed: cell.seed,
                    sample_index,
                    hyper: hyper.clone(),
                    model: self.model.clone(),
                };
                let start = regimes::initial_model(&rc, source.map(|s| &s.model))?;
                let mlm_target = cell.mlm.then_some(&self.target_train[..]);
                let valid = &self.target_valid[..];
                let seed = rng::derive(cell.seed, &format!("{regime}/{}/{sample_index}", cell.shots));
                let out = match regime {
                    Regime::InDomain => regimes::in_domain_training(start, &hyper, &fewshot, valid, mlm_target, seed)?,
                    Regime::JointTraining => {
                        regimes::joint_training(start, &hyper, &self.source_train, &fewshot, valid, mlm_target, seed)?
                    }
                    Regime::JointTransfer => regimes::joint_transfer(
                        &start,
                        cell.design,
                        &hyper,
                        &self.source_train,
                        &fewshot,
                        valid,
                        mlm_target,
                        seed,
                    )?,
                    Regime::SequentialTransfer => {
                        regimes::sequential_transfer(&start, cell.design, &hyper, &fewshot, valid, seed)?
                    }
                };
                let selection = match Selection::for_few_shot(cell.shots, valid, &hyper) {
                    Selection::Argmax(_) => "argmax_valid",
                    Selection::FinalEpoch(_) => "final_epoch",
                };
                let eval = regimes::evaluate(&out.model, &self.target_test)?;
                (eval, out.selected_epoch, selection, out.metrics)
            }
        };
        let record = RunRecord {
            config_hash: config.hash(),
            regime: cell.regime,
            design: cell.design,
            extractor: self.extractor.clone(),
            shots: cell.shots,
            seed: cell.seed,
            sample_index: cell.sample_index,
            mlm: cell.mlm,
            eval,
            wall_time: 0.0,
            selected_epoch,
            selection: selection.into(),
            overrides: self.hyper.overrides().into_iter().map(String::from).collect(),
            config,
        };
        Ok(CellOutput { record, metrics })
    }
}

/// Runs every cell of `spec` whose config hash is not yet in `store`,
/// appending each record as it completes. Returns the new records.
pub fn run_matrix<S: RecordStore>(runner: &mut Runner<'_>, spec: &MatrixSpec, store: &mut S) -> Result<Vec<RunRecord>, ExperimentError> {
    let done = store.completed()?;
    let todo: Vec<Cell> = spec
        .cells()
        .into_iter()
        .filter(|c| !done.contains(&runner.run_config(c).hash()))
        .collect();
    runner.ensure_sources(&todo)?;
    let mut out = Vec::with_capacity(todo.len());
    for cell in &todo {
        let record = runner.run_cell(cell)?.record;
        store.append(&record)?;
        out.push(record);
    }
    Ok(out)
}

/// Row of a result table: a regime (or zero-shot) at one shot level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RowKey {
    pub regime: Option<Regime>,
    pub mlm: bool,
    pub shots: usize,
}

impl RowKey {
    pub fn label(&self) -> String {
        let name = self.regime.map_or("zero_shot", |r| r.as_str());
        if self.mlm {
            format!("{name}+mlm")
        } else {
            name.into()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggCell {
    pub mean: f64,
    /// Sample standard deviation (0 for a single run).
    pub sd: f64,
    pub n: usize,
    pub expected: usize,
    pub partial: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub designs: Vec<Design>,
    pub rows: Vec<(RowKey, Vec<Option<AggCell>>)>,
}

/// Expected number of runs per cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Protocol {
    pub n_seeds: usize,
    pub n_samples: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol { n_seeds: SEEDS.len(), n_samples: N_SAMPLES }
    }
}

fn mean_sd(values: &mut [f64]) -> (f64, f64) {
    // sorted summation keeps the result independent of record order
    values.sort_by(f64::total_cmp);
    if values.first() == values.last() {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, libm::sqrt(dev.iter().sum::<f64>() / (n - 1.0)))
}

/// Mean and standard deviation of test F1 per (row, design). Duplicate
/// config hashes count once.
pub fn aggregate(records: &[RunRecord], protocol: Protocol) -> Result<Aggregate, ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::NoRecords);
    }
    let mut seen = BTreeSet::new();
    let mut groups: BTreeMap<(RowKey, Design), Vec<f64>> = BTreeMap::new();
    for r in records {
        if !seen.insert(r.config_hash.as_str()) {
            continue;
        }
        let key = RowKey { regime: r.regime, mlm: r.mlm && r.regime.is_some(), shots: r.shots };
        groups.entry((key, r.design)).or_default().push(r.eval.f1);
    }
    let designs: Vec<Design> = Design::ALL
        .into_iter()
        .filter(|d| groups.keys().any(|(_, gd)| gd == d))
        .collect();
    let mut rows: Vec<RowKey> = groups.keys().map(|(k, _)| *k).collect();
    rows.dedup();
    rows.sort_by_key(|k| {
        let order = k.regime.map_or(0, |r| 1 + Regime::ALL.iter().position(|x| *x == r).unwrap_or(0));
        (order, k.mlm, k.shots)
    });
    let rows = rows
        .into_iter()
        .map(|row| {
            let cells = designs
                .iter()
                .map(|&d| {
                    groups.get(&(row, d)).map(|vals| {
                        let mut vals = vals.clone();
                        let (mean, sd) = mean_sd(&mut vals);
                        let expected = if row.regime.is_none() {
                            protocol.n_seeds
                        } else {
                            protocol.n_seeds * protocol.n_samples
                        };
                        AggCell { mean, sd, n: vals.len(), expected, partial: vals.len() < expected }
                    })
                })
                .collect();
            (row, cells)
        })
        .collect();
    Ok(Aggregate { designs, rows })
}

impl Aggregate {
    pub fn cell(&self, regime: Option<Regime>, mlm: bool, shots: usize, design: Design) -> Option<&AggCell> {
        let col = self.designs.iter().position(|d| *d == design)?;
        let (_, cells) = self.rows.iter().find(|(k, _)| *k == RowKey { regime, mlm, shots })?;
        cells[col].as_ref()
    }

    /// `(shots, mean F1)` points of one curve, zero-shot first.
    pub fn series(&self, regime: Regime, mlm: bool, design: Design) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        if let Some(c) = self.cell(None, false, 0, design) {
            out.push((0, c.mean));
        }
        for (k, _) in &self.rows {
            if k.regime == Some(regime) && k.mlm == mlm {
                if let Some(c) = self.cell(Some(regime), mlm, k.shots, design) {
                    out.push((k.shots, c.mean));
                }
            }
        }
        out
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("regime\tshots");
        for d in &self.designs {
            let _ = write!(s, "\t{d}_mean\t{d}_sd\t{d}_n");
        }
        s.push('\n');
        for (row, cells) in &self.rows {
            let _ = write!(s, "{}\t{}", row.label(), row.shots);
            for c in cells {
                match c {
                    Some(c) => {
                        let _ = write!(s, "\t{:.4}\t{:.4}\t{}{}", c.mean, c.sd, c.n, if c.partial { "*" } else { "" });
                    }
                    None => s.push_str("\t\t\t0"),
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| regime | shots |");
        for d in &self.designs {
            let _ = write!(s, " {d} |");
        }
        s.push_str("\n|---|---:|");
        for _ in &self.designs {
            s.push_str("---:|");
        }
        s.push('\n');
        for (row, cells) in &self.rows {
            let _ = write!(s, "| {} | {} |", row.label(), row.shots);
            for c in cells {
                match c {
                    Some(c) => {
                        let flag = if c.partial { format!(" (partial {}/{})", c.n, c.expected) } else { String::new() };
                        let _ = write!(s, " {:.3} ± {:.3}{flag} |", c.mean, c.sd);
                    }
                    None => s.push_str(" - |"),
                }
            }
            s.push('\n');
        }
        s
    }
}

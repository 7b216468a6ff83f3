//! Command-line driver.
//!
//! Exit codes:
//!
//! | code | meaning                                              |
//! |------|------------------------------------------------------|
//! | 0    | success                                              |
//! | 1    | runtime failure (training, experiment, internal)     |
//! | 2    | usage error (unknown subcommand, bad flag)           |
//! | 3    | configuration error (schema violation, bad override) |
//! | 4    | input or output file missing or unreadable           |
//! | 5    | input data invalid (malformed record, length mismatch) |
//!
//! Failures print one JSON object `{"error": {"kind", "code", "message"}}` on
//! stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use relbridge_core::corpus::{resplit_holdout, split_by_article, Corpus, CorpusError, Split};
use relbridge_core::experiment::{aggregate, Cell, Protocol, RunRecord, Runner, SourceKey, SourceModel};
use relbridge_core::model::Checkpoint;
use relbridge_core::oie::{postprocess_corpus, OieError};
use relbridge_core::regimes::{Regime, RegimeError};
use relbridge_core::synth::{generate_pair, strip_relations};
use relbridge_core::tagging::{strict_micro_prf, TagError};
use relbridge_core::{Design, TagSequence};
use serde::Serialize;

use crate::config::{Config, ConfigError};
use crate::formats::{
    load_canonical, load_corpus, load_extractions, read_jsonl, to_jsonl, write_canonical, CorpusFormat, DataError,
    ExtractionFormat, Prediction,
};
use crate::io::{atomic_write, write_json_pretty};
use crate::parallel::{metric_log, run_matrix, source_label, MatrixOptions};
use crate::plot;
use crate::store::{load_records, JsonlStore, STORE_ENV};

#[derive(Debug, Parser)]
#[command(name = "relbridge", version, about = "Relation-coupled trigger detection transfer experiments")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.epochs=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Record zero wall times and run on one worker so repeated runs are
    /// byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print #Sent, #Tr, #Re per split as TSV.
    Stats(InputArgs),
    /// Load a corpus in any supported format and write canonical JSONL.
    Convert {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter and merge OIE extractions into a relation-augmented corpus.
    PostprocessTriples {
        /// Canonical JSONL corpus.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        extractions: PathBuf,
        #[arg(long, value_enum, default_value = "jsonl")]
        extractions_format: ExtractionFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a source model on `data.source` and write a checkpoint.
    TrainSource {
        #[arg(long, value_enum)]
        design: DesignArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Alternate with masked language modeling on the target train split.
        #[arg(long)]
        mlm: bool,
        /// Checkpoint path; the metric log goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one cell: a regime (or zero-shot) on one few-shot sample.
    Transfer {
        #[arg(long, value_enum)]
        regime: RegimeArg,
        #[arg(long, value_enum)]
        design: DesignArg,
        #[arg(long, default_value_t = 0)]
        shots: usize,
        #[arg(long, default_value_t = 0)]
        sample: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        mlm: bool,
        /// Source checkpoint, required by zero-shot and transfer regimes.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Run record JSON; the metric log goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the experiment matrix, skipping cells already in the record store.
    RunMatrix {
        #[arg(long)]
        workers: Option<usize>,
        /// Record store file. Defaults to `output.store`, then
        /// `$RELBRIDGE_STORE/records.jsonl`, then `<output.dir>/records.jsonl`.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Strict span micro P/R/F1 of predictions (or a checkpoint) against gold.
    Evaluate {
        /// Canonical JSONL; every sentence is scored.
        #[arg(long)]
        gold: PathBuf,
        /// JSONL of `{sentence_id, tags}` in gold order.
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        pred: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate the record store into a mean ± sd table.
    Report {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "tsv")]
        format: ReportFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// F1-versus-shots curves per design as CSV and SVG.
    Plot {
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "sequential-transfer")]
        regime: RegimeArg,
        #[arg(long)]
        mlm: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a synthetic source/target pair with OIE-style extraction files.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        /// Keep the generated relation layer instead of stripping it.
        #[arg(long)]
        with_relations: bool,
    },
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Canonical JSONL corpus.
    #[arg(long, conflicts_with = "input")]
    pub corpus: Option<PathBuf>,
    /// `split=path`, repeatable; splits are train, valid, test.
    #[arg(long, value_name = "SPLIT=PATH")]
    pub input: Vec<String>,
    #[arg(long, value_enum, default_value = "canonical-jsonl")]
    pub format: CorpusFormat,
    #[arg(long)]
    pub name: Option<String>,
    /// Move this fraction of train to valid (old valid becomes test).
    #[arg(long)]
    pub holdout: Option<f64>,
    /// Reassign whole articles, e.g. `0.8,0.1,0.1`.
    #[arg(long, value_name = "TRAIN,VALID,TEST", conflicts_with = "holdout")]
    pub article_split: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DesignArg {
    Vanilla,
    Implicit,
    Explicit,
}

impl From<DesignArg> for Design {
    fn from(d: DesignArg) -> Design {
        match d {
            DesignArg::Vanilla => Design::Vanilla,
            DesignArg::Implicit => Design::Implicit,
            DesignArg::Explicit => Design::Explicit,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum RegimeArg {
    ZeroShot,
    InDomain,
    JointTraining,
    JointTransfer,
    SequentialTransfer,
}

impl RegimeArg {
    fn regime(self) -> Option<Regime> {
        match self {
            RegimeArg::ZeroShot => None,
            RegimeArg::InDomain => Some(Regime::InDomain),
            RegimeArg::JointTraining => Some(Regime::JointTraining),
            RegimeArg::JointTransfer => Some(Regime::JointTransfer),
            RegimeArg::SequentialTransfer => Some(Regime::SequentialTransfer),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ReportFormat {
    Tsv,
    Markdown,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitKind {
    Runtime = 1,
    Usage = 2,
    Config = 3,
    Io = 4,
    Data = 5,
}

impl ExitKind {
    fn name(self) -> &'static str {
        match self {
            ExitKind::Runtime => "runtime",
            ExitKind::Usage => "usage",
            ExitKind::Config => "config",
            ExitKind::Io => "io",
            ExitKind::Data => "data",
        }
    }
}

/// Maps an error chain to its exit category.
pub fn classify(err: &anyhow::Error) -> ExitKind {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return ExitKind::Config;
        }
        if cause.is::<DataError>()
            || cause.is::<CorpusError>()
            || cause.is::<OieError>()
            || cause.is::<TagError>()
            || cause.is::<serde_json::Error>()
        {
            return ExitKind::Data;
        }
        if cause.is::<std::io::Error>() {
            return ExitKind::Io;
        }
    }
    ExitKind::Runtime
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    code: i32,
    message: String,
}

#[derive(Serialize)]
struct ErrorLine<'a> {
    error: ErrorBody<'a>,
}

fn report_error(kind: ExitKind, message: String) -> i32 {
    let code = kind as i32;
    let line = ErrorLine { error: ErrorBody { kind: kind.name(), code, message } };
    eprintln!("{}", serde_json::to_string(&line).unwrap_or_else(|_| "{\"error\":{}}".into()));
    code
}

/// Parses `args` and runs the subcommand. Returns the process exit code.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => return report_error(ExitKind::Usage, e.render().to_string().trim().to_string()),
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => report_error(classify(&e), format!("{e:#}")),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut config = Config::load(cli.config.as_deref(), &cli.overrides)?;
    if cli.deterministic {
        config.matrix.workers = 1;
    }
    match cli.command {
        Command::Stats(input) => stats(&input),
        Command::Convert { input, out } => convert(&input, &out, &config),
        Command::PostprocessTriples { corpus, extractions, extractions_format, out } => {
            postprocess(&corpus, &extractions, extractions_format, &out, &config)
        }
        Command::TrainSource { design, seed, mlm, out } => train_source(&config, design.into(), seed, mlm, &out),
        Command::Transfer { regime, design, shots, sample, seed, mlm, checkpoint, out } => {
            let cell = Cell {
                regime: regime.regime(),
                design: design.into(),
                shots: if regime == RegimeArg::ZeroShot { 0 } else { shots },
                seed,
                sample_index: regime.regime().map(|_| sample),
                mlm,
            };
            transfer(&config, &cell, checkpoint.as_deref(), &out, cli.deterministic)
        }
        Command::RunMatrix { workers, store } => matrix(&config, workers, store, cli.deterministic),
        Command::Evaluate { gold, pred, checkpoint, out } => {
            evaluate(&gold, pred.as_deref(), checkpoint.as_deref(), out.as_deref())
        }
        Command::Report { store, format, out } => report(&config, store, format, out.as_deref()),
        Command::Plot { store, regime, mlm, out_dir } => plot_cmd(&config, store, regime, mlm, &out_dir),
        Command::Synth { out_dir, with_relations } => synth(&config, &out_dir, with_relations),
    }
}

fn parse_split(s: &str) -> Result<Split> {
    match s {
        "train" => Ok(Split::Train),
        "valid" | "dev" => Ok(Split::Valid),
        "test" => Ok(Split::Test),
        _ => Err(anyhow!(ConfigError(format!("unknown split {s:?}")))),
    }
}

fn load_input(input: &InputArgs) -> Result<Corpus> {
    let mut corpus = match &input.corpus {
        Some(path) => {
            let c = load_canonical(path)?;
            match &input.name {
                Some(n) => Corpus::new(n.clone(), c.into_sentences())?,
                None => c,
            }
        }
        None => {
            let inputs = input
                .input
                .iter()
                .map(|s| {
                    let (split, path) =
                        s.split_once('=').ok_or_else(|| ConfigError(format!("--input {s:?} is not split=path")))?;
                    Ok((parse_split(split)?, PathBuf::from(path)))
                })
                .collect::<Result<Vec<_>>>()?;
            let name = input.name.clone().unwrap_or_else(|| "corpus".into());
            let (corpus, drops) = load_corpus(&name, &inputs, input.format)?;
            for (id, why) in &drops.dropped {
                eprintln!("dropped {id}: {why}");
            }
            corpus
        }
    };
    if let Some(f) = input.holdout {
        corpus = resplit_holdout(&corpus, f, input.seed)?;
    }
    if let Some(r) = &input.article_split {
        let parts: Vec<f64> = r
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| ConfigError(format!("--article-split {r:?} is not three numbers")))?;
        let ratios: [f64; 3] =
            parts.try_into().map_err(|_| ConfigError(format!("--article-split {r:?} is not three numbers")))?;
        corpus = split_by_article(&corpus, ratios, input.seed)?;
    }
    Ok(corpus)
}

pub fn stats_tsv(corpus: &Corpus) -> String {
    let mut out = String::from("split\t#Sent\t#Tr\t#Re\n");
    for split in Split::ALL {
        let s = corpus.stats().get(split);
        out.push_str(&format!("{split}\t{}\t{}\t{}\n", s.n_sentences, s.n_with_triggers, s.n_with_relations));
    }
    out
}

fn stats(input: &InputArgs) -> Result<()> {
    let corpus = if input.corpus.is_none() && input.input.is_empty() {
        return Err(anyhow!(ConfigError("stats needs --corpus or --input".into())));
    } else {
        load_input(input)?
    };
    print!("{}", stats_tsv(&corpus));
    Ok(())
}

fn convert(input: &InputArgs, out: &Path, config: &Config) -> Result<()> {
    let corpus = load_input(input)?;
    write_canonical(out, &corpus, Some(&config.hash()))?;
    print!("{}", stats_tsv(&corpus));
    Ok(())
}

fn postprocess(corpus: &Path, extractions: &Path, format: ExtractionFormat, out: &Path, config: &Config) -> Result<()> {
    let corpus = load_canonical(corpus)?;
    let extractions = load_extractions(extractions, format)?;
    let (augmented, report) = postprocess_corpus(&corpus, &extractions)?;
    write_canonical(out, &augmented, Some(&config.hash()))?;
    let mut report_path = out.as_os_str().to_owned();
    report_path.push(".report.json");
    write_json_pretty(Path::new(&report_path), &report)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

struct Data {
    source: Corpus,
    target: Corpus,
}

fn load_data(config: &Config) -> Result<Data> {
    Ok(Data { source: load_canonical(config.source_path()?)?, target: load_canonical(config.target_path()?)? })
}

fn runner<'a>(config: &Config, data: &'a Data) -> Runner<'a> {
    Runner::new(
        &data.source,
        &data.target,
        config.data.extractor.clone(),
        config.matrix.master_seed,
        config.train.clone(),
        config.model.clone(),
    )
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes the effective configuration beside an artifact.
fn write_effective_config(dir: &Path, config: &Config) -> Result<()> {
    atomic_write(&dir.join("config.toml"), config.to_toml()?.as_bytes())
}

fn parent(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn train_source(config: &Config, design: Design, seed: u64, mlm: bool, out: &Path) -> Result<()> {
    let data = load_data(config)?;
    let runner = runner(config, &data);
    let key = SourceKey { design, seed, mlm };
    let trained = runner.train_source(key)?;
    let hash = relbridge_core::hash::config_hash(&(source_label(&key), &config.train, &config.model, config.hash()));
    let mut ckpt = Checkpoint::from_bundle(&trained.model, &config.model, hash.clone(), trained.valid_f1, trained.selected_epoch);
    ckpt.lr_rel_embed = Some(trained.lr_rel_embed);
    write_json_pretty(out, &ckpt)?;
    atomic_write(&sibling(out, ".metrics.jsonl"), metric_log(&hash, &trained.metrics)?.as_bytes())?;
    if let Some(grid) = &trained.grid {
        write_json_pretty(&sibling(out, ".grid.json"), grid)?;
    }
    write_effective_config(parent(out), config)?;
    println!(
        "{}",
        serde_json::json!({
            "config_hash": hash,
            "source_valid_f1": trained.valid_f1,
            "selected_epoch": trained.selected_epoch,
            "lr_rel_embed": trained.lr_rel_embed,
        })
    );
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{}: malformed checkpoint", path.display()))
}

fn transfer(config: &Config, cell: &Cell, checkpoint: Option<&Path>, out: &Path, deterministic: bool) -> Result<()> {
    let data = load_data(config)?;
    let mut runner = runner(config, &data);
    if let Some(key) = cell.source_key() {
        let path = checkpoint.ok_or_else(|| ConfigError("this regime needs --checkpoint".into()))?;
        let ckpt = load_checkpoint(path)?;
        if ckpt.design != key.design {
            return Err(RegimeError::DesignMismatch { expected: key.design, found: ckpt.design }.into());
        }
        let lr_rel_embed = ckpt.lr_rel_embed.unwrap_or(config.train.lr_rel_embed);
        let (valid_f1, selected_epoch) = (ckpt.source_valid_f1, ckpt.selected_epoch);
        let model = ckpt.into_bundle()?;
        runner.insert_source(key, SourceModel { model, valid_f1, selected_epoch, lr_rel_embed, grid: None, metrics: Vec::new() });
    }
    let start = std::time::Instant::now();
    let mut output = runner.run_cell(cell)?;
    if !deterministic {
        output.record.wall_time = start.elapsed().as_secs_f64();
    }
    let hash = output.record.config_hash.clone();
    write_json_pretty(out, &output.record)?;
    atomic_write(&sibling(out, ".metrics.jsonl"), metric_log(&hash, &output.metrics)?.as_bytes())?;
    write_effective_config(parent(out), config)?;
    println!("{}", serde_json::to_string(&output.record.eval)?);
    Ok(())
}

fn store_path(config: &Config, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| config.output.store.clone())
        .or_else(|| std::env::var_os(STORE_ENV).map(|d| PathBuf::from(d).join("records.jsonl")))
        .unwrap_or_else(|| config.output.dir.join("records.jsonl"))
}

fn matrix(config: &Config, workers: Option<usize>, store: Option<PathBuf>, deterministic: bool) -> Result<()> {
    let data = load_data(config)?;
    let mut runner = runner(config, &data);
    let mut store = JsonlStore::open(store_path(config, store))?;
    let dir = &config.output.dir;
    write_effective_config(dir, config)?;
    let opts = MatrixOptions {
        workers: if deterministic { 1 } else { workers.unwrap_or(config.matrix.workers) },
        log_dir: Some(dir.join("logs")),
        deterministic,
    };
    let records = run_matrix(&mut runner, &config.matrix.spec(), &mut store, &opts)?;
    println!("{} runs completed, store {}", records.len(), store.path().display());
    Ok(())
}

fn evaluate(gold: &Path, pred: Option<&Path>, checkpoint: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let corpus = load_canonical(gold)?;
    let gold_tags: Vec<TagSequence> = corpus
        .sentences()
        .iter()
        .map(|s| relbridge_core::tagging::encode_iob2(&s.trigger_spans, s.tokens.len(), relbridge_core::SpanType::Trg))
        .collect::<Result<_, _>>()?;
    let pred_tags: Vec<TagSequence> = match (pred, checkpoint) {
        (Some(p), _) => {
            let preds: Vec<Prediction> = read_jsonl(p)?;
            if preds.len() != gold_tags.len() {
                return Err(anyhow!(DataError(format!(
                    "length mismatch: {} gold sentences but {} predictions",
                    gold_tags.len(),
                    preds.len()
                ))));
            }
            for (s, p) in corpus.sentences().iter().zip(&preds) {
                if s.sentence_id != p.sentence_id {
                    return Err(anyhow!(DataError(format!(
                        "prediction for {:?} where gold has {:?}",
                        p.sentence_id, s.sentence_id
                    ))));
                }
            }
            preds.into_iter().map(|p| p.tags).collect()
        }
        (None, Some(c)) => {
            let ckpt = load_checkpoint(c)?;
            let tok = ckpt.model.tokenizer();
            let model = ckpt.into_bundle()?;
            corpus
                .sentences()
                .iter()
                .map(|s| model.predict(&relbridge_core::model::Example::from_sentence(s, &tok)))
                .collect::<Result<_, _>>()?
        }
        (None, None) => return Err(anyhow!(ConfigError("evaluate needs --pred or --checkpoint".into()))),
    };
    let result = strict_micro_prf(&gold_tags, &pred_tags)?;
    let json = serde_json::to_string_pretty(&result)?;
    match out {
        Some(o) => atomic_write(o, format!("{json}\n").as_bytes())?,
        None => println!("{json}"),
    }
    Ok(())
}

fn read_store(config: &Config, flag: Option<PathBuf>) -> Result<Vec<RunRecord>> {
    let path = store_path(config, flag);
    if !path.exists() {
        return Err(anyhow!(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("record store {} does not exist", path.display())
        )));
    }
    load_records(&path)
}

fn protocol(config: &Config) -> Protocol {
    Protocol { n_seeds: config.matrix.seeds.len(), n_samples: config.matrix.n_samples }
}

fn report(config: &Config, store: Option<PathBuf>, format: ReportFormat, out: Option<&Path>) -> Result<()> {
    let records = read_store(config, store)?;
    let agg = aggregate(&records, protocol(config))?;
    let text = match format {
        ReportFormat::Tsv => agg.to_tsv(),
        ReportFormat::Markdown => agg.to_markdown(),
        ReportFormat::Json => serde_json::to_string_pretty(&serde_json::json!({
            "config_hash": config.hash(),
            "aggregate": agg,
        }))? + "\n",
    };
    match out {
        Some(o) => atomic_write(o, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn plot_cmd(config: &Config, store: Option<PathBuf>, regime: RegimeArg, mlm: bool, out_dir: &Path) -> Result<()> {
    let regime = regime.regime().ok_or_else(|| ConfigError("zero-shot has no shot axis to plot".into()))?;
    let records = read_store(config, store)?;
    let agg = aggregate(&records, protocol(config))?;
    let curves = plot::curves(&agg, regime, mlm);
    let hash = config.hash();
    let stem = format!("{regime}{}", if mlm { "-mlm" } else { "" });
    atomic_write(&out_dir.join(format!("{stem}.csv")), plot::to_csv(&curves, &hash).as_bytes())?;
    atomic_write(&out_dir.join(format!("{stem}.svg")), plot::to_svg(&curves, &stem, &hash).as_bytes())?;
    Ok(())
}

fn synth(config: &Config, out_dir: &Path, with_relations: bool) -> Result<()> {
    let cfg = &config.synth;
    cfg.validate().map_err(|e| ConfigError(format!("synth: {e}")))?;
    let pair = generate_pair(cfg)?;
    let hash = config.hash();
    for (corpus, extractions, tag) in
        [(&pair.source, &pair.source_extractions, "source"), (&pair.target, &pair.target_extractions, "target")]
    {
        let corpus = if with_relations { corpus.clone() } else { strip_relations(corpus) };
        write_canonical(&out_dir.join(format!("{tag}.jsonl")), &corpus, Some(&hash))?;
        atomic_write(&out_dir.join(format!("{tag}.triples.jsonl")), to_jsonl(extractions)?.as_bytes())?;
    }
    write_effective_config(out_dir, config)?;
    println!("{}", out_dir.display());
    Ok(())
}

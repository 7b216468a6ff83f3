//! Corpus, extraction and prediction file formats.
//!
//! The canonical corpus format is JSON Lines, one sentence per line:
//!
//! | field            | type                     | notes                                   |
//! |------------------|--------------------------|-----------------------------------------|
//! | `sentence_id`    | string                   | unique within the corpus                |
//! | `doc_id`         | string                   | article the sentence belongs to         |
//! | `tokens`         | list of strings          | non-empty                               |
//! | `trigger_spans`  | list of `[start, end]`   | token offsets, end exclusive            |
//! | `relation_spans` | list of `[start, end]`   | optional; absent until post-processing  |
//! | `split`          | `train`/`valid`/`test`   |                                         |
//!
//! A sidecar `<file>.meta.json` holds the corpus name, per-split stats and the
//! hash of the configuration that produced the file. When present, the stats
//! are checked on load.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use relbridge_core::corpus::{align_spans, Alignment, Corpus, Sentence, Split, Stats};
use relbridge_core::oie::{Extractor, TripleExtraction};
use relbridge_core::{Span, TagSequence};
use serde::{Deserialize, Serialize};

use crate::io::{atomic_write, write_json_pretty};

/// Input content that parses but violates the data model.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DataError(pub String);

macro_rules! invalid {
    ($($arg:tt)*) => {
        anyhow::Error::new(DataError(format!($($arg)*)))
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    /// One canonical sentence object per line.
    CanonicalJsonl,
    /// MAVEN documents, one JSON object per line.
    MavenJson,
    /// Token per line, blank line between sentences.
    ConllLike,
    /// JSON array produced by the common ACE 2005 preprocessing script.
    AceJson,
    /// JSON Lines with raw text, tokens and character-offset triggers.
    CharOffsetJsonl,
}

/// Sentences removed during loading with the reason.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    pub dropped: Vec<(String, String)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub name: String,
    pub stats: Stats,
    pub config_hash: Option<String>,
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("{}: read error", path.display()))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Reads a JSON Lines file of `T`.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| serde_json::from_str(&line).with_context(|| format!("{}:{n}: malformed record", path.display())))
        .collect()
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

fn default_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "corpus".into(), |s| s.to_string_lossy().into_owned())
}

/// Loads a canonical JSONL corpus, checking sidecar stats if present.
pub fn load_canonical(path: &Path) -> Result<Corpus> {
    let sentences: Vec<Sentence> = read_jsonl(path)?;
    let meta = meta_path(path);
    if meta.exists() {
        let meta: CorpusMeta = serde_json::from_str(&fs::read_to_string(&meta)?)
            .with_context(|| format!("{}: malformed metadata", meta.display()))?;
        return Corpus::with_stored_stats(meta.name, sentences, meta.stats).map_err(|e| invalid!("{}: {e}", path.display()));
    }
    Corpus::new(default_name(path), sentences).map_err(|e| invalid!("{}: {e}", path.display()))
}

/// Writes `corpus` as canonical JSONL plus its metadata sidecar.
pub fn write_canonical(path: &Path, corpus: &Corpus, config_hash: Option<&str>) -> Result<()> {
    atomic_write(path, to_jsonl(corpus.sentences())?.as_bytes())?;
    let meta = CorpusMeta { name: corpus.name().into(), stats: *corpus.stats(), config_hash: config_hash.map(String::from) };
    write_json_pretty(&meta_path(path), &meta)
}

// MAVEN: one document per line.
#[derive(Deserialize)]
struct MavenDoc {
    id: String,
    content: Vec<MavenSentence>,
    #[serde(default)]
    events: Vec<MavenEvent>,
}

#[derive(Deserialize)]
struct MavenSentence {
    tokens: Vec<String>,
}

#[derive(Deserialize)]
struct MavenEvent {
    mention: Vec<MavenMention>,
}

#[derive(Deserialize)]
struct MavenMention {
    sent_id: usize,
    offset: (usize, usize),
}

/// Collapses identical spans; partial overlaps stay and fail validation.
fn unique_sorted(mut spans: Vec<Span>) -> Vec<Span> {
    spans.sort();
    spans.dedup();
    spans
}

fn load_maven(path: &Path, split: Split) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (n, line) in read_lines(path)? {
        let doc: MavenDoc = serde_json::from_str(&line).with_context(|| format!("{}:{n}: malformed document", path.display()))?;
        let mut triggers: Vec<Vec<Span>> = vec![Vec::new(); doc.content.len()];
        for m in doc.events.iter().flat_map(|e| &e.mention) {
            let slot = triggers
                .get_mut(m.sent_id)
                .ok_or_else(|| invalid!("{}: document {} has no sentence {}", path.display(), doc.id, m.sent_id))?;
            slot.push(Span::new(m.offset.0, m.offset.1));
        }
        for (i, (s, t)) in doc.content.into_iter().zip(triggers).enumerate() {
            out.push(Sentence {
                sentence_id: format!("{}-{i}", doc.id),
                doc_id: doc.id.clone(),
                tokens: s.tokens,
                trigger_spans: unique_sorted(t),
                relation_spans: None,
                split,
            });
        }
    }
    Ok(out)
}

// ACE 2005 after the common preprocessing script.
#[derive(Deserialize)]
struct AceSentence {
    words: Vec<String>,
    #[serde(rename = "golden-event-mentions", default)]
    events: Vec<AceEvent>,
}

#[derive(Deserialize)]
struct AceEvent {
    trigger: AceTrigger,
}

#[derive(Deserialize)]
struct AceTrigger {
    start: usize,
    end: usize,
}

fn load_ace(path: &Path, split: Split) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
    let items: Vec<AceSentence> = serde_json::from_str(&text).with_context(|| format!("{}: malformed ACE JSON", path.display()))?;
    let stem = default_name(path);
    Ok(items
        .into_iter()
        .enumerate()
        .map(|(i, s)| Sentence {
            sentence_id: format!("{stem}-{i}"),
            doc_id: format!("{stem}-{i}"),
            tokens: s.words,
            trigger_spans: unique_sorted(s.events.iter().map(|e| Span::new(e.trigger.start, e.trigger.end)).collect()),
            relation_spans: None,
            split,
        })
        .collect())
}

/// CoNLL-like: `token<TAB>trigger-tag[<TAB>relation-tag]` per line. Comment
/// lines `# sent_id = ...` and `# doc_id = ...` set ids; tags may carry a
/// type suffix (`B-Attack`), which is ignored.
fn load_conll(path: &Path, split: Split) -> Result<Vec<Sentence>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot open {}", path.display()))?;
    let stem = default_name(path);
    let mut out = Vec::new();
    let mut tokens = Vec::new();
    let mut trg = Vec::new();
    let mut rel: Vec<String> = Vec::new();
    let mut ids: (Option<String>, Option<String>) = (None, None);
    let mut flush = |tokens: &mut Vec<String>, trg: &mut Vec<String>, rel: &mut Vec<String>, ids: &mut (Option<String>, Option<String>), line: usize| -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let n = out.len();
        let id = ids.0.take().unwrap_or_else(|| format!("{stem}-{n}"));
        let doc = ids.1.take().unwrap_or_else(|| id.clone());
        let spans = |tags: &[String], ty: &str| -> Result<Vec<Span>> {
            let seq: TagSequence = tags
                .iter()
                .map(|t| normalize_tag(t, ty).parse())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| invalid!("{}: sentence ending at line {line}: {e}", path.display()))?
                .into();
            relbridge_core::tagging::decode_iob2(&seq, relbridge_core::tagging::DecodeMode::Strict)
                .map_err(|e| invalid!("{}: sentence ending at line {line}: {e}", path.display()))
        };
        let trigger_spans = spans(trg, "TRG")?;
        let relation_spans = if rel.is_empty() { None } else { Some(spans(rel, "REL")?) };
        out.push(Sentence { sentence_id: id, doc_id: doc, tokens: std::mem::take(tokens), trigger_spans, relation_spans, split });
        trg.clear();
        rel.clear();
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.is_empty() {
            flush(&mut tokens, &mut trg, &mut rel, &mut ids, i + 1)?;
        } else if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                match k.trim() {
                    "sent_id" => ids.0 = Some(v.trim().into()),
                    "doc_id" => ids.1 = Some(v.trim().into()),
                    _ => {}
                }
            }
        } else {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 2 || cols.len() > 3 {
                return Err(invalid!("{}:{}: expected 2 or 3 tab-separated columns", path.display(), i + 1));
            }
            if cols.len() == 3 && tokens.len() != rel.len() {
                return Err(invalid!("{}:{}: relation column present on some lines only", path.display(), i + 1));
            }
            tokens.push(cols[0].to_string());
            trg.push(cols[1].to_string());
            if let Some(r) = cols.get(2) {
                rel.push(r.to_string());
            }
        }
    }
    flush(&mut tokens, &mut trg, &mut rel, &mut ids, text.lines().count())?;
    Ok(out)
}

fn normalize_tag(tag: &str, ty: &str) -> String {
    match tag.split_once('-') {
        Some((p @ ("B" | "I"), _)) => format!("{p}-{ty}"),
        _ if tag == "B" || tag == "I" => format!("{tag}-{ty}"),
        _ => tag.to_string(),
    }
}

#[derive(Deserialize)]
struct CharOffsetRecord {
    sentence_id: String,
    #[serde(default)]
    doc_id: Option<String>,
    text: String,
    tokens: Vec<String>,
    #[serde(default)]
    triggers: Vec<(usize, usize)>,
    #[serde(default)]
    split: Option<Split>,
}

/// Raw-text records with character-offset triggers. Sentences whose triggers
/// do not fall on token boundaries are dropped and reported.
fn load_char_offset(path: &Path, split: Split, drops: &mut DropReport) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (n, line) in read_lines(path)? {
        let r: CharOffsetRecord = serde_json::from_str(&line).with_context(|| format!("{}:{n}: malformed record", path.display()))?;
        match align_spans(&r.text, &r.tokens, &r.triggers).map_err(|e| invalid!("{}:{n}: {e}", path.display()))? {
            Alignment::Aligned(spans) => out.push(Sentence {
                doc_id: r.doc_id.unwrap_or_else(|| r.sentence_id.clone()),
                sentence_id: r.sentence_id,
                tokens: r.tokens,
                trigger_spans: unique_sorted(spans),
                relation_spans: None,
                split: r.split.unwrap_or(split),
            }),
            Alignment::Drop { span_index } => {
                let (s, e) = r.triggers[span_index];
                drops.dropped.push((r.sentence_id, format!("trigger characters {s}..{e} do not match token boundaries")));
            }
        }
    }
    Ok(out)
}

/// Loads one file in `format`, labeling its sentences with `split` unless the
/// format carries splits itself.
pub fn load_split(path: &Path, format: CorpusFormat, split: Split, drops: &mut DropReport) -> Result<Vec<Sentence>> {
    match format {
        CorpusFormat::CanonicalJsonl => Ok(load_canonical(path)?.into_sentences()),
        CorpusFormat::MavenJson => load_maven(path, split),
        CorpusFormat::ConllLike => load_conll(path, split),
        CorpusFormat::AceJson => load_ace(path, split),
        CorpusFormat::CharOffsetJsonl => load_char_offset(path, split, drops),
    }
}

/// Loads `(split, path)` inputs of one format into a single corpus.
pub fn load_corpus(name: &str, inputs: &[(Split, PathBuf)], format: CorpusFormat) -> Result<(Corpus, DropReport)> {
    let mut drops = DropReport::default();
    let mut sentences = Vec::new();
    for (split, path) in inputs {
        sentences.extend(load_split(path, format, *split, &mut drops)?);
    }
    let corpus = Corpus::new(name, sentences).map_err(|e| invalid!("{name}: {e}"))?;
    Ok((corpus, drops))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExtractionFormat {
    Jsonl,
    Tsv,
}

fn parse_indices(field: &str) -> Result<Vec<usize>> {
    if field.trim().is_empty() || field.trim() == "-" {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|x| x.trim().parse::<usize>().map_err(|_| invalid!("bad token index {x:?}")))
        .collect()
}

/// Extraction adapter. JSONL records mirror [`TripleExtraction`]; TSV lines
/// are `sentence_id, subject, relation, object, implicit[, extractor]` with
/// comma-separated token indices and `-` for an empty slot.
pub fn load_extractions(path: &Path, format: ExtractionFormat) -> Result<Vec<TripleExtraction>> {
    match format {
        ExtractionFormat::Jsonl => read_jsonl(path),
        ExtractionFormat::Tsv => read_lines(path)?
            .into_iter()
            .filter(|(_, l)| !l.starts_with('#'))
            .map(|(n, line)| {
                let c: Vec<&str> = line.split('\t').collect();
                if c.len() < 5 {
                    return Err(invalid!("{}:{n}: expected at least 5 columns", path.display()));
                }
                let ctx = |e: anyhow::Error| invalid!("{}:{n}: {e}", path.display());
                let extractor = match c.get(5).map(|s| s.trim()) {
                    None | Some("minie") => Extractor::Minie,
                    Some("stanford") => Extractor::Stanford,
                    Some(_) => Extractor::Other,
                };
                Ok(TripleExtraction {
                    sentence_id: c[0].into(),
                    subject: parse_indices(c[1]).map_err(ctx)?,
                    relation: parse_indices(c[2]).map_err(ctx)?,
                    object: parse_indices(c[3]).map_err(ctx)?,
                    is_implicit: matches!(c[4].trim(), "1" | "true" | "True"),
                    extractor,
                })
            })
            .collect(),
    }
}

/// One line of a prediction file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sentence_id: String,
    pub tags: TagSequence,
}

/// Unique split names of a corpus, in canonical order.
pub fn splits_present(corpus: &Corpus) -> BTreeSet<Split> {
    corpus.sentences().iter().map(|s| s.split).collect()
}

//! Canonical corpus model, split construction and character-to-token alignment.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::span::{first_overlap, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Split {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "valid" | "dev" | "validation" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(CorpusError::UnknownSplit(other.into())),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("sentence {0}: empty token list")]
    EmptySentence(String),
    #[error("sentence {id}: {kind} span {span} out of range for {len} tokens")]
    SpanOutOfRange {
        id: String,
        kind: &'static str,
        span: Span,
        len: usize,
    },
    #[error("sentence {id}: overlapping {kind} spans {a} and {b}")]
    OverlappingSpans {
        id: String,
        kind: &'static str,
        a: Span,
        b: Span,
    },
    #[error("duplicate sentence id {0}")]
    DuplicateId(String),
    #[error("unknown split {0:?}")]
    UnknownSplit(String),
    #[error("stored stats {stored:?} differ from recomputed {actual:?}")]
    StatsMismatch { stored: Box<Stats>, actual: Box<Stats> },
    #[error("train split is empty")]
    EmptyTrain,
    #[error("holdout fraction {0} must lie strictly between 0 and 1")]
    BadFraction(f64),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("article split needs at least 3 articles, found {0}")]
    TooFewArticles(usize),
    #[error("tokens do not reproduce the raw text at character {0}")]
    TokenTextMismatch(usize),
}

/// One annotated sentence.
///
/// `relation_spans` is `None` until relation post-processing has run; an empty
/// list means the sentence was processed and kept no relation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: String,
    pub doc_id: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub trigger_spans: Vec<Span>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relation_spans: Option<Vec<Span>>,
    pub split: Split,
}

impl Sentence {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.tokens.is_empty() {
            return Err(CorpusError::EmptySentence(self.sentence_id.clone()));
        }
        check_spans(&self.sentence_id, "trigger", &self.trigger_spans, self.tokens.len())?;
        if let Some(rel) = &self.relation_spans {
            check_spans(&self.sentence_id, "relation", rel, self.tokens.len())?;
        }
        Ok(())
    }

    pub fn has_triggers(&self) -> bool {
        !self.trigger_spans.is_empty()
    }

    pub fn has_relations(&self) -> bool {
        self.relation_spans.as_ref().is_some_and(|r| !r.is_empty())
    }
}

fn check_spans(id: &str, kind: &'static str, spans: &[Span], len: usize) -> Result<(), CorpusError> {
    if let Some(&span) = spans.iter().find(|s| !s.fits(len)) {
        return Err(CorpusError::SpanOutOfRange { id: id.into(), kind, span, len });
    }
    if let Some((a, b)) = first_overlap(spans) {
        return Err(CorpusError::OverlappingSpans { id: id.into(), kind, a, b });
    }
    Ok(())
}

/// Per-split counts: sentences, sentences with triggers, sentences with relations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    pub n_sentences: usize,
    pub n_with_triggers: usize,
    pub n_with_relations: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stats {
    pub train: SplitStats,
    pub valid: SplitStats,
    pub test: SplitStats,
}

impl Stats {
    pub fn compute(sentences: &[Sentence]) -> Self {
        let mut stats = Stats::default();
        for s in sentences {
            let slot = stats.get_mut(s.split);
            slot.n_sentences += 1;
            slot.n_with_triggers += usize::from(s.has_triggers());
            slot.n_with_relations += usize::from(s.has_relations());
        }
        stats
    }

    pub fn get(&self, split: Split) -> &SplitStats {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut SplitStats {
        match split {
            Split::Train => &mut self.train,
            Split::Valid => &mut self.valid,
            Split::Test => &mut self.test,
        }
    }
}

/// A validated, immutable collection of sentences.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    name: String,
    sentences: Vec<Sentence>,
    stats: Stats,
}

impl Corpus {
    /// Validates every sentence, checks id uniqueness and computes stats.
    pub fn new(name: impl Into<String>, sentences: Vec<Sentence>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for s in &sentences {
            s.validate()?;
            if !seen.insert(s.sentence_id.as_str()) {
                return Err(CorpusError::DuplicateId(s.sentence_id.clone()));
            }
        }
        let stats = Stats::compute(&sentences);
        Ok(Corpus { name: name.into(), sentences, stats })
    }

    /// Like [`Corpus::new`], but also checks the caller's stored stats.
    pub fn with_stored_stats(
        name: impl Into<String>,
        sentences: Vec<Sentence>,
        stored: Stats,
    ) -> Result<Self, CorpusError> {
        let corpus = Corpus::new(name, sentences)?;
        if corpus.stats != stored {
            return Err(CorpusError::StatsMismatch { stored: Box::new(stored), actual: Box::new(corpus.stats) });
        }
        Ok(corpus)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn into_sentences(self) -> Vec<Sentence> {
        self.sentences
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sentence> {
        self.sentences.iter().filter(move |s| s.split == split)
    }

    pub fn get(&self, sentence_id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.sentence_id == sentence_id)
    }

    /// `true` when every sentence carries post-processed relation spans.
    pub fn has_relation_layer(&self) -> bool {
        !self.sentences.is_empty() && self.sentences.iter().all(|s| s.relation_spans.is_some())
    }

    pub fn verify_stats(&self) -> Result<(), CorpusError> {
        let actual = Stats::compute(&self.sentences);
        if actual != self.stats {
            return Err(CorpusError::StatsMismatch { stored: Box::new(self.stats), actual: Box::new(actual) });
        }
        Ok(())
    }

    fn relabel(&self, assign: impl Fn(usize, &Sentence) -> Split) -> Corpus {
        let sentences: Vec<Sentence> = self
            .sentences
            .iter()
            .enumerate()
            .map(|(i, s)| Sentence { split: assign(i, s), ..s.clone() })
            .collect();
        let stats = Stats::compute(&sentences);
        Corpus { name: self.name.clone(), sentences, stats }
    }
}

/// Carves a validation set out of the train split.
///
/// `⌈fraction · n_train⌉` train sentences, chosen by a seeded shuffle, move to
/// `valid`. Sentences already in `valid` move to `test`; existing `test`
/// sentences stay where they are.
pub fn resplit_holdout(corpus: &Corpus, fraction: f64, seed: u64) -> Result<Corpus, CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::BadFraction(fraction));
    }
    let mut train_idx: Vec<usize> = corpus
        .sentences
        .iter()
        .enumerate()
        .filter(|(_, s)| s.split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    if train_idx.is_empty() {
        return Err(CorpusError::EmptyTrain);
    }
    let n_move = holdout_size(train_idx.len(), fraction);
    train_idx.shuffle(&mut rng::seeded(seed));
    let moved: BTreeSet<usize> = train_idx[..n_move].iter().copied().collect();
    Ok(corpus.relabel(|i, s| match s.split {
        Split::Train if moved.contains(&i) => Split::Valid,
        Split::Train => Split::Train,
        Split::Valid | Split::Test => Split::Test,
    }))
}

/// Number of held-out items: the ceiling of `fraction · n`, clamped to `n - 1`
/// so that the remaining train split is never empty.
pub fn holdout_size(n: usize, fraction: f64) -> usize {
    let exact = fraction * n as f64;
    let mut k = exact as usize;
    if (k as f64) < exact {
        k += 1;
    }
    k.min(n.saturating_sub(1))
}

/// Assigns whole articles to train/valid/test.
///
/// Articles are shuffled with `seed`, then the two cut points are placed on the
/// article prefix sums closest to the target sentence counts. Each split keeps
/// at least one article.
pub fn split_by_article(corpus: &Corpus, ratios: [f64; 3], seed: u64) -> Result<Corpus, CorpusError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| *r < 0.0 || !r.is_finite()) || libm::fabs(sum - 1.0) > 1e-9 {
        return Err(CorpusError::BadRatios(ratios));
    }
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for s in &corpus.sentences {
        let count = sizes.entry(s.doc_id.as_str()).or_insert(0);
        if *count == 0 {
            order.push(s.doc_id.as_str());
        }
        *count += 1;
    }
    if order.len() < 3 {
        return Err(CorpusError::TooFewArticles(order.len()));
    }
    order.shuffle(&mut rng::seeded(seed));

    let total = corpus.sentences.len() as f64;
    let mut prefix = Vec::with_capacity(order.len() + 1);
    prefix.push(0usize);
    for doc in &order {
        prefix.push(prefix.last().unwrap() + sizes[doc]);
    }
    let n = order.len();
    let nearest = |target: f64, lo: usize, hi: usize| -> usize {
        (lo..=hi)
            .min_by(|&a, &b| {
                let da = libm::fabs(prefix[a] as f64 - target);
                let db = libm::fabs(prefix[b] as f64 - target);
                da.partial_cmp(&db).unwrap().then(a.cmp(&b))
            })
            .unwrap()
    };
    let cut_train = nearest(ratios[0] * total, 1, n - 2);
    let cut_valid = nearest((ratios[0] + ratios[1]) * total, cut_train + 1, n - 1);

    let assignment: BTreeMap<&str, Split> = order
        .iter()
        .enumerate()
        .map(|(i, doc)| {
            let split = if i < cut_train {
                Split::Train
            } else if i < cut_valid {
                Split::Valid
            } else {
                Split::Test
            };
            (*doc, split)
        })
        .collect();
    Ok(corpus.relabel(|_, s| assignment[s.doc_id.as_str()]))
}

/// Outcome of aligning character spans onto tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Alignment {
    Aligned(Vec<Span>),
    /// At least one span did not start and end on token boundaries; the
    /// index points at the first offending input span.
    Drop { span_index: usize },
}

/// Character offsets `[start, end)` of each token in `raw_text`.
///
/// Any run of whitespace between tokens is accepted, which is equivalent to
/// collapsing whitespace before comparing. Offsets count Unicode scalar values.
pub fn token_char_offsets<S: AsRef<str>>(raw_text: &str, tokens: &[S]) -> Result<Vec<(usize, usize)>, CorpusError> {
    let chars: Vec<char> = raw_text.chars().collect();
    let mut pos = 0usize;
    let mut offsets = Vec::with_capacity(tokens.len());
    for tok in tokens {
        while pos < chars.len() && chars[pos].is_whitespace() {
            pos += 1;
        }
        let start = pos;
        for c in tok.as_ref().chars() {
            if pos >= chars.len() || chars[pos] != c {
                return Err(CorpusError::TokenTextMismatch(pos));
            }
            pos += 1;
        }
        offsets.push((start, pos));
    }
    while pos < chars.len() && chars[pos].is_whitespace() {
        pos += 1;
    }
    if pos != chars.len() {
        return Err(CorpusError::TokenTextMismatch(pos));
    }
    Ok(offsets)
}

/// Maps character spans to token spans that match token boundaries exactly.
pub fn align_spans<S: AsRef<str>>(
    raw_text: &str,
    tokens: &[S],
    char_spans: &[(usize, usize)],
) -> Result<Alignment, CorpusError> {
    let offsets = token_char_offsets(raw_text, tokens)?;
    let mut out = Vec::with_capacity(char_spans.len());
    for (i, &(cs, ce)) in char_spans.iter().enumerate() {
        let start = offsets.iter().position(|&(s, _)| s == cs);
        let end = offsets.iter().position(|&(_, e)| e == ce);
        match (start, end) {
            (Some(s), Some(e)) if s <= e => out.push(Span::new(s, e + 1)),
            _ => return Ok(Alignment::Drop { span_index: i }),
        }
    }
    Ok(Alignment::Aligned(out))
}

/// Inverse of [`align_spans`] for successfully aligned spans.
pub fn project_to_chars(offsets: &[(usize, usize)], spans: &[Span]) -> Vec<(usize, usize)> {
    spans.iter().map(|s| (offsets[s.start].0, offsets[s.end - 1].1)).collect()
}

//! Post-processing of raw subject-relation-object extractions into clean,
//! non-overlapping relation spans.
//!
//! The pipeline per sentence:
//! 1. drop implicit extractions, incomplete triples, non-consecutive slots,
//!    relations longer than [`MAX_RELATION_TOKENS`] and anything not in
//!    subject-relation-object order;
//! 2. keep only the relation slot;
//! 3. merge overlapping relations, keeping the longest of each overlap cluster;
//! 4. tag the survivors with IOB2 `REL` labels (all `O` when none survive).
//!
//! Identical sentences are removed afterwards, per split.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Sentence, Split};
use crate::span::Span;
use crate::tagging::{encode_iob2, SpanType, TagSequence};

/// Relations with more tokens than this are discarded. Every token counts,
/// punctuation included.
pub const MAX_RELATION_TOKENS: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extractor {
    #[default]
    Minie,
    Stanford,
    Other,
}

impl Extractor {
    pub fn as_str(&self) -> &'static str {
        match self {
            Extractor::Minie => "minie",
            Extractor::Stanford => "stanford",
            Extractor::Other => "other",
        }
    }
}

/// One raw extraction. Each slot is the list of sentence token indices the
/// extractor assigned to it; an empty list means the slot is missing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleExtraction {
    pub sentence_id: String,
    #[serde(default)]
    pub subject: Vec<usize>,
    #[serde(default)]
    pub relation: Vec<usize>,
    #[serde(default)]
    pub object: Vec<usize>,
    #[serde(default)]
    pub is_implicit: bool,
    #[serde(default)]
    pub extractor: Extractor,
}

/// Span of a slot if it is present and its indices are strictly consecutive.
pub fn consecutive_span(indices: &[usize]) -> Option<Span> {
    let first = *indices.first()?;
    let consecutive = indices.iter().enumerate().all(|(k, &i)| i == first + k);
    consecutive.then(|| Span::new(first, first + indices.len()))
}

impl TripleExtraction {
    pub fn subject_span(&self) -> Option<Span> {
        consecutive_span(&self.subject)
    }

    pub fn relation_span(&self) -> Option<Span> {
        consecutive_span(&self.relation)
    }

    pub fn object_span(&self) -> Option<Span> {
        consecutive_span(&self.object)
    }

    fn max_index(&self) -> Option<usize> {
        self.subject.iter().chain(&self.relation).chain(&self.object).copied().max()
    }
}

/// Why an extraction was removed by [`filter_extractions`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rejection {
    Implicit,
    Incomplete,
    NonConsecutive,
    RelationTooLong,
    WrongOrder,
}

/// Returns the first rule the extraction violates, or `None` if it survives.
pub fn rejection(ex: &TripleExtraction) -> Option<Rejection> {
    if ex.is_implicit {
        return Some(Rejection::Implicit);
    }
    if ex.subject.is_empty() || ex.relation.is_empty() || ex.object.is_empty() {
        return Some(Rejection::Incomplete);
    }
    let (Some(s), Some(r), Some(o)) = (ex.subject_span(), ex.relation_span(), ex.object_span()) else {
        return Some(Rejection::NonConsecutive);
    };
    if r.len() > MAX_RELATION_TOKENS {
        return Some(Rejection::RelationTooLong);
    }
    if !(s.end <= r.start && r.end <= o.start) {
        return Some(Rejection::WrongOrder);
    }
    None
}

/// Keeps the extractions that pass every rule, preserving order.
pub fn filter_extractions(extractions: &[TripleExtraction]) -> Vec<TripleExtraction> {
    extractions.iter().filter(|e| rejection(e).is_none()).cloned().collect()
}

/// Resolves overlapping relation spans.
///
/// Spans that share tokens, directly or through a chain of other spans, form
/// one cluster. Each cluster keeps a single span: the longest, then the one
/// with the smallest start, then the earliest in input order. Output is
/// sorted by start.
pub fn merge_relations(spans: &[Span]) -> Vec<Span> {
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&i| (spans[i].start, i));

    let mut out = Vec::new();
    let mut cluster: Vec<usize> = Vec::new();
    let mut cluster_end = 0usize;
    let flush = |cluster: &mut Vec<usize>, out: &mut Vec<Span>| {
        if let Some(&best) = cluster
            .iter()
            .min_by_key(|&&i| (core::cmp::Reverse(spans[i].len()), spans[i].start, i))
        {
            out.push(spans[best]);
        }
        cluster.clear();
    };
    for i in order {
        let s = spans[i];
        if !cluster.is_empty() && s.start >= cluster_end {
            flush(&mut cluster, &mut out);
        }
        if cluster.is_empty() {
            cluster_end = s.end;
        } else {
            cluster_end = cluster_end.max(s.end);
        }
        cluster.push(i);
    }
    flush(&mut cluster, &mut out);
    out
}

#[derive(Debug, Error, PartialEq)]
pub enum OieError {
    #[error("extraction for sentence {found} passed with sentence {expected}")]
    WrongSentence { expected: String, found: String },
    #[error("extraction for sentence {id} references token {index} but the sentence has {len} tokens")]
    OutOfRange { id: String, index: usize, len: usize },
    #[error("extraction references unknown sentence {0}")]
    UnknownSentence(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Relation layer of one sentence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationTagging {
    pub sentence_id: String,
    pub relation_spans: Vec<Span>,
    pub tags: TagSequence,
}

pub fn build_relation_tagging(sentence: &Sentence, extractions: &[TripleExtraction]) -> Result<RelationTagging, OieError> {
    let len = sentence.tokens.len();
    for ex in extractions {
        if ex.sentence_id != sentence.sentence_id {
            return Err(OieError::WrongSentence {
                expected: sentence.sentence_id.clone(),
                found: ex.sentence_id.clone(),
            });
        }
        if let Some(index) = ex.max_index().filter(|&i| i >= len) {
            return Err(OieError::OutOfRange { id: ex.sentence_id.clone(), index, len });
        }
    }
    let relations: Vec<Span> = filter_extractions(extractions)
        .iter()
        .filter_map(TripleExtraction::relation_span)
        .collect();
    let relation_spans = merge_relations(&relations);
    let tags = encode_iob2(&relation_spans, len, SpanType::Rel).expect("merged spans are disjoint and in range");
    Ok(RelationTagging { sentence_id: sentence.sentence_id.clone(), relation_spans, tags })
}

/// Drops sentences whose token sequence already occurred earlier in the same
/// split. Returns the reduced corpus and the number of dropped sentences.
pub fn dedupe_sentences(corpus: &Corpus) -> (Corpus, usize) {
    let mut seen: BTreeSet<(Split, &[String])> = BTreeSet::new();
    let mut kept = Vec::with_capacity(corpus.len());
    for s in corpus.sentences() {
        if seen.insert((s.split, s.tokens.as_slice())) {
            kept.push(s.clone());
        }
    }
    let dropped = corpus.len() - kept.len();
    let out = Corpus::new(corpus.name(), kept).expect("subset of a valid corpus is valid");
    (out, dropped)
}

/// Counters reported by [`postprocess_corpus`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostprocessReport {
    pub extractions_in: usize,
    pub rejected_implicit: usize,
    pub rejected_incomplete: usize,
    pub rejected_non_consecutive: usize,
    pub rejected_too_long: usize,
    pub rejected_order: usize,
    pub relations_kept: usize,
    pub relations_merged_away: usize,
    pub sentences_with_relations: usize,
    pub duplicates_dropped: usize,
}

/// Attaches relation spans to every sentence of `corpus` and deduplicates.
pub fn postprocess_corpus(corpus: &Corpus, extractions: &[TripleExtraction]) -> Result<(Corpus, PostprocessReport), OieError> {
    let index: BTreeMap<&str, usize> = corpus
        .sentences()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.sentence_id.as_str(), i))
        .collect();
    let mut grouped: Vec<Vec<TripleExtraction>> = alloc::vec![Vec::new(); corpus.len()];
    let mut report = PostprocessReport { extractions_in: extractions.len(), ..Default::default() };
    for ex in extractions {
        let &i = index
            .get(ex.sentence_id.as_str())
            .ok_or_else(|| OieError::UnknownSentence(ex.sentence_id.clone()))?;
        match rejection(ex) {
            Some(Rejection::Implicit) => report.rejected_implicit += 1,
            Some(Rejection::Incomplete) => report.rejected_incomplete += 1,
            Some(Rejection::NonConsecutive) => report.rejected_non_consecutive += 1,
            Some(Rejection::RelationTooLong) => report.rejected_too_long += 1,
            Some(Rejection::WrongOrder) => report.rejected_order += 1,
            None => {}
        }
        grouped[i].push(ex.clone());
    }
    let mut sentences = Vec::with_capacity(corpus.len());
    for (s, exs) in corpus.sentences().iter().zip(&grouped) {
        let tagging = build_relation_tagging(s, exs)?;
        let survivors = exs.iter().filter(|e| rejection(e).is_none()).count();
        report.relations_kept += tagging.relation_spans.len();
        report.relations_merged_away += survivors - tagging.relation_spans.len();
        report.sentences_with_relations += usize::from(!tagging.relation_spans.is_empty());
        sentences.push(Sentence { relation_spans: Some(tagging.relation_spans), ..s.clone() });
    }
    let tagged = Corpus::new(corpus.name(), sentences)?;
    let (deduped, dropped) = dedupe_sentences(&tagged);
    report.duplicates_dropped = dropped;
    report.sentences_with_relations = deduped.sentences().iter().filter(|s| s.has_relations()).count();
    Ok((deduped, report))
}

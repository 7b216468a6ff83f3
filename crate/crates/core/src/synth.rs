//! Synthetic source/target corpus pairs with a controllable overlap between
//! trigger and relation spans.
//!
//! Every sentence has two clauses joined by a conjunction and padded with
//! filler words:
//!
//! ```text
//! [fill] SUBJ [AUX] PRED [PREP] OBJ and SUBJ [AUX] STATE [PREP] OBJ [fill]
//! ```
//!
//! In trigger sentences the first predicate comes from the event slice of
//! the vocabulary and is the trigger; otherwise it is a state verb. A
//! sentence carries a relation with probability `relation_rate`. For trigger
//! sentences the relation covers the trigger with probability `overlap` and
//! otherwise sits on the second clause. A covering relation extends over the
//! adjacent auxiliary and preposition, each with probability
//! `relation_extend`.
//!
//! The target domain replaces a `vocab_shift` fraction of every content slice
//! with words the source never uses. Function words are shared.
//!
//! Relations are also emitted as raw extractions, mixed with noise that the
//! post-processing pipeline removes, so that running it reproduces exactly
//! the generated relation layer.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Sentence, Split};
use crate::oie::{Extractor, TripleExtraction};
use crate::rng::{self, Rng};
use crate::span::Span;

const AUX: [&str; 4] = ["has", "had", "was", "will"];
const PREP: [&str; 6] = ["into", "onto", "at", "with", "over", "from"];
const FILLER: [&str; 8] = ["the", "then", "also", "so", "yet", "very", "here", "now"];
const CONJ: &str = "and";

/// Shortest possible sentence: two three-word clauses and the conjunction.
pub const MIN_SENTENCE_LEN: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Content words per domain: 60% nouns, 20% event predicates, 20% state verbs.
    pub vocab_size: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub trigger_rate: f64,
    pub relation_rate: f64,
    /// Probability that a trigger sentence's relation contains its trigger.
    pub overlap: f64,
    /// Fraction of each target vocabulary slice unseen in the source.
    pub vocab_shift: f64,
    /// Probability of a covering relation absorbing each adjacent function word.
    pub relation_extend: f64,
    /// Probability per noise kind and sentence of an extra invalid or
    /// subsumed extraction.
    pub noise_rate: f64,
    pub aux_rate: f64,
    pub prep_rate: f64,
    pub seed: u64,
    pub source_name: String,
    pub target_name: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            vocab_size: 200,
            n_train: 1000,
            n_valid: 200,
            n_test: 400,
            min_len: 8,
            max_len: 14,
            trigger_rate: 0.7,
            relation_rate: 0.9,
            overlap: 1.0,
            vocab_shift: 0.7,
            relation_extend: 0.5,
            noise_rate: 0.2,
            aux_rate: 0.5,
            prep_rate: 0.5,
            seed: 0,
            source_name: "synth-source".into(),
            target_name: "synth-target".into(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{0} must lie in [0, 1], got {1}")]
    Rate(&'static str, f64),
    #[error("length range {min}..={max} cannot hold a {needed}-token sentence")]
    Length { min: usize, max: usize, needed: usize },
    #[error("vocabulary of {0} words is too small (need at least 5)")]
    Vocab(usize),
    #[error("cannot draw {0} distinct sentences")]
    Exhausted(usize),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (name, v) in [
            ("trigger_rate", self.trigger_rate),
            ("relation_rate", self.relation_rate),
            ("overlap", self.overlap),
            ("vocab_shift", self.vocab_shift),
            ("relation_extend", self.relation_extend),
            ("noise_rate", self.noise_rate),
            ("aux_rate", self.aux_rate),
            ("prep_rate", self.prep_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(SynthError::Rate(name, v));
            }
        }
        if self.min_len > self.max_len || self.max_len < MIN_SENTENCE_LEN {
            return Err(SynthError::Length { min: self.min_len, max: self.max_len, needed: MIN_SENTENCE_LEN });
        }
        if self.vocab_size < 5 {
            return Err(SynthError::Vocab(self.vocab_size));
        }
        Ok(())
    }
}

/// Generated pair. Both corpora carry their relation layer; the extraction
/// lists reproduce it through post-processing.
#[derive(Clone, Debug)]
pub struct SynthPair {
    pub source: Corpus,
    pub target: Corpus,
    pub source_extractions: Vec<TripleExtraction>,
    pub target_extractions: Vec<TripleExtraction>,
}

struct Lexicon {
    nouns: Vec<String>,
    events: Vec<String>,
    states: Vec<String>,
}

impl Lexicon {
    fn new(cfg: &SynthConfig, shifted: bool) -> Self {
        let n_events = (cfg.vocab_size / 5).max(1);
        let n_states = n_events;
        let n_nouns = (cfg.vocab_size - n_events - n_states).max(1);
        let slice = |prefix: &str, n: usize| -> Vec<String> {
            let fresh = if shifted { libm::round(cfg.vocab_shift * n as f64) as usize } else { 0 };
            (0..n)
                .map(|i| if i < fresh { format!("{prefix}x{i}") } else { format!("{prefix}{i}") })
                .collect()
        };
        Lexicon { nouns: slice("n", n_nouns), events: slice("v", n_events), states: slice("s", n_states) }
    }
}

struct Clause {
    tokens: Vec<String>,
    subj: usize,
    aux: bool,
    prep: bool,
    obj: usize,
}

impl Clause {
    fn draw(lex: &Lexicon, pred: &str, cfg: &SynthConfig, rng: &mut Rng) -> Self {
        let subj = rng.gen_range(1..=2);
        let obj = rng.gen_range(1..=2);
        let aux = coin(rng, cfg.aux_rate);
        let prep = coin(rng, cfg.prep_rate);
        let mut tokens = Vec::new();
        for _ in 0..subj {
            tokens.push(lex.nouns.choose(rng).unwrap().clone());
        }
        if aux {
            tokens.push(AUX.choose(rng).unwrap().to_string());
        }
        tokens.push(pred.into());
        if prep {
            tokens.push(PREP.choose(rng).unwrap().to_string());
        }
        for _ in 0..obj {
            tokens.push(lex.nouns.choose(rng).unwrap().clone());
        }
        Clause { tokens, subj, aux, prep, obj }
    }

    fn pred_index(&self) -> usize {
        self.subj + usize::from(self.aux)
    }
}

struct Draft {
    tokens: Vec<String>,
    trigger: Option<Span>,
    /// `(subject, relation, object)` of the relation triple.
    triple: Option<(Span, Span, Span)>,
}

fn draw_sentence(lex: &Lexicon, cfg: &SynthConfig, rng: &mut Rng) -> Draft {
    let has_trigger = coin(rng, cfg.trigger_rate);
    let pred1 = if has_trigger { lex.events.choose(rng) } else { lex.states.choose(rng) }.unwrap();
    let c1 = Clause::draw(lex, pred1, cfg, rng);
    let c2 = Clause::draw(lex, lex.states.choose(rng).unwrap(), cfg, rng);
    let core = c1.tokens.len() + 1 + c2.tokens.len();
    let target_len = rng.gen_range(cfg.min_len..=cfg.max_len);
    let n_fill = target_len.saturating_sub(core);
    let n_pre = rng.gen_range(0..=n_fill);

    let mut tokens: Vec<String> = (0..n_pre).map(|_| FILLER.choose(rng).unwrap().to_string()).collect();
    let off1 = tokens.len();
    tokens.extend(c1.tokens.iter().cloned());
    tokens.push(CONJ.into());
    let off2 = tokens.len();
    tokens.extend(c2.tokens.iter().cloned());
    tokens.extend((0..n_fill - n_pre).map(|_| FILLER.choose(rng).unwrap().to_string()));

    let trigger = has_trigger.then(|| {
        let p = off1 + c1.pred_index();
        Span::new(p, p + 1)
    });
    let triple = coin(rng, cfg.relation_rate).then(|| {
        let covering = !has_trigger || coin(rng, cfg.overlap);
        let (c, off) = if covering { (&c1, off1) } else { (&c2, off2) };
        let p = off + c.pred_index();
        let (ext_aux, ext_prep) = (coin(rng, cfg.relation_extend), coin(rng, cfg.relation_extend));
        let start = if c.aux && ext_aux { p - 1 } else { p };
        let end = if c.prep && ext_prep { p + 2 } else { p + 1 };
        let subj = Span::new(off, off + c.subj);
        let obj_start = off + c.tokens.len() - c.obj;
        (subj, Span::new(start, end), Span::new(obj_start, off + c.tokens.len()))
    });
    Draft { tokens, trigger, triple }
}

/// Bernoulli draw that always consumes exactly one value, so configurations
/// differing only in a rate stay aligned on the same random stream.
fn coin(rng: &mut Rng, p: f64) -> bool {
    rng.gen::<f64>() < p
}

fn indices(span: Span) -> Vec<usize> {
    (span.start..span.end).collect()
}

/// Raw extractions for one sentence: the real triple plus noise that the
/// filter rejects or the merge step absorbs.
fn extractions(id: &str, draft: &Draft, noise: f64, rng: &mut Rng) -> Vec<TripleExtraction> {
    let Some((s, r, o)) = draft.triple else {
        return Vec::new();
    };
    let triple = |subject: Vec<usize>, relation: Vec<usize>, object: Vec<usize>, is_implicit| TripleExtraction {
        sentence_id: id.into(),
        subject,
        relation,
        object,
        is_implicit,
        extractor: Extractor::Other,
    };
    let mut out = alloc::vec![triple(indices(s), indices(r), indices(o), false)];
    if coin(rng, noise) {
        // relation token inserted by the extractor
        out.push(triple(indices(s), alloc::vec![r.start], indices(o), true));
    }
    if coin(rng, noise) && r.len() > 1 {
        // strictly inside the real relation; merged away
        out.push(triple(indices(s), alloc::vec![r.start + 1], indices(o), false));
    }
    let n = draft.tokens.len();
    if coin(rng, noise) && r.end + 1 < n {
        // relation slot with a gap
        out.push(triple(indices(s), alloc::vec![r.start, r.end + 1], indices(o), false));
    }
    if coin(rng, noise) {
        // object before subject
        out.push(triple(indices(o), indices(r), indices(s), false));
    }
    if coin(rng, noise) && n >= 8 {
        out.push(triple(alloc::vec![0], (1..7).collect(), alloc::vec![7], false));
    }
    if coin(rng, noise) {
        out.push(triple(Vec::new(), indices(r), indices(o), false));
    }
    out.shuffle(rng);
    out
}

fn domain(cfg: &SynthConfig, name: &str, shifted: bool, seed: u64) -> Result<(Corpus, Vec<TripleExtraction>), SynthError> {
    let lex = Lexicon::new(cfg, shifted);
    let mut rng = rng::seeded(seed);
    let mut noise_rng = rng::seeded(rng::derive(seed, "extractions"));
    let mut sentences = Vec::new();
    let mut triples = Vec::new();
    for (split, n) in [(Split::Train, cfg.n_train), (Split::Valid, cfg.n_valid), (Split::Test, cfg.n_test)] {
        let mut seen = BTreeSet::new();
        for i in 0..n {
            let mut tries = 0;
            let draft = loop {
                let d = draw_sentence(&lex, cfg, &mut rng);
                if seen.insert(d.tokens.clone()) {
                    break d;
                }
                tries += 1;
                if tries > 1000 {
                    return Err(SynthError::Exhausted(n));
                }
            };
            let id = format!("{name}-{split}-{i}");
            triples.extend(extractions(&id, &draft, cfg.noise_rate, &mut noise_rng));
            sentences.push(Sentence {
                sentence_id: id,
                doc_id: format!("{name}-{split}-d{}", i / 20),
                tokens: draft.tokens,
                trigger_spans: draft.trigger.into_iter().collect(),
                relation_spans: Some(draft.triple.map(|(_, r, _)| r).into_iter().collect()),
                split,
            });
        }
    }
    Ok((Corpus::new(name, sentences)?, triples))
}

/// Generates the source and target corpora. Deterministic given the config.
pub fn generate_pair(cfg: &SynthConfig) -> Result<SynthPair, SynthError> {
    cfg.validate()?;
    let (source, source_extractions) = domain(cfg, &cfg.source_name, false, rng::derive(cfg.seed, "source"))?;
    let (target, target_extractions) = domain(cfg, &cfg.target_name, true, rng::derive(cfg.seed, "target"))?;
    Ok(SynthPair { source, target, source_extractions, target_extractions })
}

/// Fraction of sentences with both a trigger and a relation where some
/// relation span contains the trigger span.
pub fn measured_overlap(corpus: &Corpus) -> Option<f64> {
    let mut both = 0usize;
    let mut covering = 0usize;
    for s in corpus.sentences() {
        let Some(rel) = s.relation_spans.as_ref() else { continue };
        if s.trigger_spans.is_empty() || rel.is_empty() {
            continue;
        }
        both += 1;
        if s.trigger_spans.iter().all(|t| rel.iter().any(|r| r.contains(t))) {
            covering += 1;
        }
    }
    (both > 0).then(|| covering as f64 / both as f64)
}

/// Copy of `corpus` without its relation layer.
pub fn strip_relations(corpus: &Corpus) -> Corpus {
    let sentences = corpus
        .sentences()
        .iter()
        .map(|s| Sentence { relation_spans: None, ..s.clone() })
        .collect();
    Corpus::new(corpus.name(), sentences).expect("stripping keeps a valid corpus")
}

//! IOB2 encoding and decoding, strict span-level scoring, and the subword
//! loss mask.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::span::{first_overlap, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SpanType {
    #[serde(rename = "TRG")]
    Trg,
    #[serde(rename = "REL")]
    Rel,
}

impl SpanType {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpanType::Trg => "TRG",
            SpanType::Rel => "REL",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Tag {
    O,
    B(SpanType),
    I(SpanType),
}

impl Tag {
    /// Class index used by the classification heads: O=0, B=1, I=2.
    pub fn class(&self) -> usize {
        match self {
            Tag::O => 0,
            Tag::B(_) => 1,
            Tag::I(_) => 2,
        }
    }

    pub fn from_class(class: usize, ty: SpanType) -> Tag {
        match class {
            1 => Tag::B(ty),
            2 => Tag::I(ty),
            _ => Tag::O,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(t) => write!(f, "B-{}", t.as_str()),
            Tag::I(t) => write!(f, "I-{}", t.as_str()),
        }
    }
}

impl FromStr for Tag {
    type Err = TagError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let ty = |rest: &str| match rest {
            "TRG" => Ok(SpanType::Trg),
            "REL" => Ok(SpanType::Rel),
            _ => Err(TagError::UnknownTag(s.into())),
        };
        match s {
            "O" => Ok(Tag::O),
            _ if s.starts_with("B-") => Ok(Tag::B(ty(&s[2..])?)),
            _ if s.starts_with("I-") => Ok(Tag::I(ty(&s[2..])?)),
            _ => Err(TagError::UnknownTag(s.into())),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TagError {
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("overlapping spans {0} and {1}")]
    Overlap(Span, Span),
    #[error("span {span} out of range for length {len}")]
    OutOfRange { span: Span, len: usize },
    #[error("invalid IOB2 transition {prev} -> {tag} at position {pos}")]
    InvalidTransition { pos: usize, prev: String, tag: Tag },
    #[error("sentence {index}: gold length {gold} != predicted length {pred}")]
    LengthMismatch { index: usize, gold: usize, pred: usize },
    #[error("{gold} gold sequences but {pred} predicted sequences")]
    CountMismatch { gold: usize, pred: usize },
    #[error("word {0} has no subwords")]
    AlignmentGap(usize),
    #[error("subword alignment is not non-decreasing at subword {0}")]
    AlignmentOrder(usize),
}

/// IOB2 labels for one task over the words of one sentence.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagSequence {
    pub tags: Vec<Tag>,
}

impl TagSequence {
    pub fn all_o(len: usize) -> Self {
        TagSequence { tags: alloc::vec![Tag::O; len] }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Position of the first invalid `I-X`, if any.
    pub fn first_invalid(&self) -> Option<usize> {
        let mut prev = Tag::O;
        for (i, &tag) in self.tags.iter().enumerate() {
            if let Tag::I(ty) = tag {
                match prev {
                    Tag::B(p) | Tag::I(p) if p == ty => {}
                    _ => return Some(i),
                }
            }
            prev = tag;
        }
        None
    }

    pub fn is_valid(&self) -> bool {
        self.first_invalid().is_none()
    }

    /// Rewrites every stray `I-X` as `B-X`. Valid sequences are returned unchanged.
    pub fn repaired(&self) -> TagSequence {
        let mut tags = self.tags.clone();
        let mut prev = Tag::O;
        for tag in tags.iter_mut() {
            if let Tag::I(ty) = *tag {
                let continues = matches!(prev, Tag::B(p) | Tag::I(p) if p == ty);
                if !continues {
                    *tag = Tag::B(ty);
                }
            }
            prev = *tag;
        }
        TagSequence { tags }
    }

    pub fn class_ids(&self) -> Vec<usize> {
        self.tags.iter().map(Tag::class).collect()
    }
}

impl From<Vec<Tag>> for TagSequence {
    fn from(tags: Vec<Tag>) -> Self {
        TagSequence { tags }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecodeMode {
    /// Reject sequences with an `I-X` that does not continue an `X` span.
    Strict,
    /// Treat a stray `I-X` as `B-X`.
    Repair,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypedSpan {
    pub span: Span,
    pub ty: SpanType,
}

pub fn encode_iob2(spans: &[Span], len: usize, ty: SpanType) -> Result<TagSequence, TagError> {
    if let Some(&span) = spans.iter().find(|s| !s.fits(len)) {
        return Err(TagError::OutOfRange { span, len });
    }
    if let Some((a, b)) = first_overlap(spans) {
        return Err(TagError::Overlap(a, b));
    }
    let mut tags = alloc::vec![Tag::O; len];
    for s in spans {
        tags[s.start] = Tag::B(ty);
        for t in &mut tags[s.start + 1..s.end] {
            *t = Tag::I(ty);
        }
    }
    Ok(TagSequence { tags })
}

/// Decodes maximal B-led runs into typed spans, in left-to-right order.
pub fn decode_typed(tags: &TagSequence, mode: DecodeMode) -> Result<Vec<TypedSpan>, TagError> {
    if mode == DecodeMode::Strict {
        if let Some(pos) = tags.first_invalid() {
            let prev = if pos == 0 { String::from("<start>") } else { alloc::format!("{}", tags.tags[pos - 1]) };
            return Err(TagError::InvalidTransition { pos, prev, tag: tags.tags[pos] });
        }
    }
    let mut out = Vec::new();
    let mut open: Option<(usize, SpanType)> = None;
    for (i, &tag) in tags.tags.iter().enumerate() {
        match tag {
            Tag::O => {
                if let Some((s, ty)) = open.take() {
                    out.push(TypedSpan { span: Span::new(s, i), ty });
                }
            }
            Tag::B(ty) => {
                if let Some((s, pty)) = open.take() {
                    out.push(TypedSpan { span: Span::new(s, i), ty: pty });
                }
                open = Some((i, ty));
            }
            Tag::I(ty) => match open {
                Some((_, pty)) if pty == ty => {}
                _ => {
                    if let Some((s, pty)) = open.take() {
                        out.push(TypedSpan { span: Span::new(s, i), ty: pty });
                    }
                    open = Some((i, ty));
                }
            },
        }
    }
    if let Some((s, ty)) = open {
        out.push(TypedSpan { span: Span::new(s, tags.len()), ty });
    }
    Ok(out)
}

/// Decodes spans, ignoring the span type.
pub fn decode_iob2(tags: &TagSequence, mode: DecodeMode) -> Result<Vec<Span>, TagError> {
    Ok(decode_typed(tags, mode)?.into_iter().map(|t| t.span).collect())
}

/// Span-level scoring counts with derived precision, recall and F1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl EvalResult {
    /// Precision and recall are 0 when their denominators are 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        EvalResult { precision, recall, f1, tp, fp, fn_ }
    }

    /// Associative merge of counts.
    pub fn merge(&self, other: &EvalResult) -> EvalResult {
        EvalResult::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

fn check_lengths(gold: &[TagSequence], pred: &[TagSequence]) -> Result<(), TagError> {
    if gold.len() != pred.len() {
        return Err(TagError::CountMismatch { gold: gold.len(), pred: pred.len() });
    }
    for (index, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.len() != p.len() {
            return Err(TagError::LengthMismatch { index, gold: g.len(), pred: p.len() });
        }
    }
    Ok(())
}

/// Counts for one sentence: exact `(start, end, type)` matches.
pub fn strict_counts(gold: &TagSequence, pred: &TagSequence) -> Result<EvalResult, TagError> {
    let g: BTreeSet<TypedSpan> = decode_typed(gold, DecodeMode::Strict)?.into_iter().collect();
    let p: BTreeSet<TypedSpan> = decode_typed(pred, DecodeMode::Repair)?.into_iter().collect();
    let tp = g.intersection(&p).count();
    Ok(EvalResult::from_counts(tp, p.len() - tp, g.len() - tp))
}

/// Strict span-level micro precision, recall and F1.
///
/// Gold sequences must be valid IOB2; predicted sequences are repaired.
pub fn strict_micro_prf(gold: &[TagSequence], pred: &[TagSequence]) -> Result<EvalResult, TagError> {
    check_lengths(gold, pred)?;
    gold.iter()
        .zip(pred)
        .try_fold(EvalResult::default(), |acc, (g, p)| Ok(acc.merge(&strict_counts(g, p)?)))
}

/// Token-level micro scores over non-`O` tags. Diagnostic only.
pub fn token_micro_prf(gold: &[TagSequence], pred: &[TagSequence]) -> Result<EvalResult, TagError> {
    check_lengths(gold, pred)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        for (gt, pt) in g.tags.iter().zip(&p.tags) {
            let g_pos = *gt != Tag::O;
            let p_pos = *pt != Tag::O;
            if g_pos && gt == pt {
                tp += 1;
            } else {
                fp += usize::from(p_pos);
                fn_ += usize::from(g_pos);
            }
        }
    }
    Ok(EvalResult::from_counts(tp, fp, fn_))
}

/// Marks the first subword of every word.
///
/// `subword_to_word[j]` is the word index of subword `j`. Indices must start
/// at 0, be non-decreasing, never skip a word, and end at `n_words - 1`.
pub fn first_subword_mask(n_words: usize, subword_to_word: &[usize]) -> Result<Vec<bool>, TagError> {
    let mut mask = Vec::with_capacity(subword_to_word.len());
    let mut next_word = 0usize;
    for (j, &w) in subword_to_word.iter().enumerate() {
        if w == next_word {
            mask.push(true);
            next_word += 1;
        } else if w + 1 == next_word {
            mask.push(false);
        } else if w < next_word {
            return Err(TagError::AlignmentOrder(j));
        } else {
            return Err(TagError::AlignmentGap(next_word));
        }
    }
    if next_word != n_words {
        return Err(TagError::AlignmentGap(next_word));
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    const B: Tag = Tag::B(SpanType::Trg);
    const I: Tag = Tag::I(SpanType::Trg);
    const O: Tag = Tag::O;

    #[test]
    fn encode_examples() {
        assert_eq!(encode_iob2(&[Span::new(1, 3)], 5, SpanType::Trg).unwrap().tags, vec![O, B, I, O, O]);
        assert_eq!(encode_iob2(&[], 4, SpanType::Trg).unwrap().tags, vec![O; 4]);
        assert!(matches!(
            encode_iob2(&[Span::new(0, 2), Span::new(1, 3)], 4, SpanType::Trg),
            Err(TagError::Overlap(..))
        ));
        assert!(matches!(encode_iob2(&[Span::new(2, 5)], 4, SpanType::Trg), Err(TagError::OutOfRange { .. })));
    }

    #[test]
    fn decode_examples() {
        let seq = TagSequence::from(vec![O, B, I, I, O]);
        assert_eq!(decode_iob2(&seq, DecodeMode::Strict).unwrap(), vec![Span::new(1, 4)]);
        let seq = TagSequence::from(vec![B, B]);
        assert_eq!(decode_iob2(&seq, DecodeMode::Strict).unwrap(), vec![Span::new(0, 1), Span::new(1, 2)]);
    }

    #[test]
    fn strict_decode_rejects_stray_inside() {
        let seq = TagSequence::from(vec![O, I, I]);
        assert!(matches!(decode_iob2(&seq, DecodeMode::Strict), Err(TagError::InvalidTransition { pos: 1, .. })));
        assert_eq!(decode_iob2(&seq, DecodeMode::Repair).unwrap(), vec![Span::new(1, 3)]);
        assert_eq!(seq.repaired().tags, vec![O, B, I]);
        let mixed = TagSequence::from(vec![Tag::B(SpanType::Rel), I]);
        assert_eq!(mixed.first_invalid(), Some(1));
    }

    #[test]
    fn tag_text_round_trip() {
        for t in [O, B, I, Tag::B(SpanType::Rel), Tag::I(SpanType::Rel)] {
            assert_eq!(alloc::format!("{t}").parse::<Tag>().unwrap(), t);
        }
        assert!("B-LOC".parse::<Tag>().is_err());
    }

    #[test]
    fn identity_and_all_o_scores() {
        let gold = vec![TagSequence::from(vec![O, B, I, O]), TagSequence::from(vec![B, O])];
        let r = strict_micro_prf(&gold, &gold).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let pred: Vec<_> = gold.iter().map(|g| TagSequence::all_o(g.len())).collect();
        let r = strict_micro_prf(&gold, &pred).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert_eq!(r.fn_, 2);
    }

    #[test]
    fn length_mismatch_is_error() {
        let gold = vec![TagSequence::all_o(3)];
        let pred = vec![TagSequence::all_o(2)];
        assert!(matches!(strict_micro_prf(&gold, &pred), Err(TagError::LengthMismatch { .. })));
        assert!(matches!(strict_micro_prf(&gold, &[]), Err(TagError::CountMismatch { .. })));
    }

    #[test]
    fn boundary_mismatch_is_not_credited() {
        let gold = vec![TagSequence::from(vec![B, I, O])];
        let pred = vec![TagSequence::from(vec![B, O, O])];
        let r = strict_micro_prf(&gold, &pred).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_), (0, 1, 1));
        let tok = token_micro_prf(&gold, &pred).unwrap();
        assert_eq!((tok.tp, tok.fp, tok.fn_), (1, 0, 1));
    }

    #[test]
    fn subword_mask_examples() {
        assert_eq!(first_subword_mask(2, &[0, 0, 1]).unwrap(), vec![true, false, true]);
        assert_eq!(first_subword_mask(3, &[0, 1, 2]).unwrap(), vec![true; 3]);
        assert_eq!(first_subword_mask(3, &[0, 2]), Err(TagError::AlignmentGap(1)));
        assert_eq!(first_subword_mask(3, &[0, 1]), Err(TagError::AlignmentGap(2)));
        assert_eq!(first_subword_mask(2, &[0, 1, 0]), Err(TagError::AlignmentOrder(2)));
    }

    fn arb_tags() -> impl Strategy<Value = TagSequence> {
        proptest::collection::vec(
            prop_oneof![
                Just(O),
                Just(B),
                Just(I),
                Just(Tag::B(SpanType::Rel)),
                Just(Tag::I(SpanType::Rel))
            ],
            0..20,
        )
        .prop_map(TagSequence::from)
    }

    proptest! {
        #[test]
        fn repair_is_idempotent_and_valid(seq in arb_tags()) {
            let once = seq.repaired();
            prop_assert!(once.is_valid());
            prop_assert_eq!(once.repaired(), once.clone());
            let typed = decode_typed(&seq, DecodeMode::Repair).unwrap();
            prop_assert_eq!(decode_typed(&once, DecodeMode::Strict).unwrap(), typed);
        }

        #[test]
        fn subword_mask_popcount(lengths in proptest::collection::vec(1usize..4, 1..15)) {
            let alignment: Vec<usize> = lengths.iter().enumerate().flat_map(|(w, &n)| core::iter::repeat_n(w, n)).collect();
            let mask = first_subword_mask(lengths.len(), &alignment).unwrap();
            prop_assert_eq!(mask.iter().filter(|m| **m).count(), lengths.len());
        }

        #[test]
        fn swapping_gold_and_pred_swaps_p_and_r(a in proptest::collection::vec(0usize..3, 1..12), b in proptest::collection::vec(0usize..3, 1..12)) {
            let n = a.len().min(b.len());
            let to_seq = |v: &[usize]| TagSequence::from(v[..n].iter().map(|&c| Tag::from_class(c, SpanType::Trg)).collect::<Vec<_>>()).repaired();
            let (g, p) = (vec![to_seq(&a)], vec![to_seq(&b)]);
            let fwd = strict_micro_prf(&g, &p).unwrap();
            let bwd = strict_micro_prf(&p, &g).unwrap();
            prop_assert_eq!(fwd.precision, bwd.recall);
            prop_assert_eq!(fwd.recall, bwd.precision);
            prop_assert_eq!(fwd.f1, bwd.f1);
        }
    }
}

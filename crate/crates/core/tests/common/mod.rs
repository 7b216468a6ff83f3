//! Independent reference implementations used as test oracles. Nothing here
//! calls the library code it is compared against.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::Rng;
use relbridge_core::model::{Design, Encoder, Example, ModelBundle};
use relbridge_core::oie::TripleExtraction;
use relbridge_core::rng::Rng as ChaCha;
use relbridge_core::tagging::{SpanType, Tag, TagSequence};
use relbridge_core::Span;

// ---------------------------------------------------------------- OIE

/// Filter rules written directly over the raw index lists.
pub fn brute_keep(ex: &TripleExtraction) -> bool {
    let slots = [&ex.subject, &ex.relation, &ex.object];
    if ex.is_implicit || slots.iter().any(|s| s.is_empty()) {
        return false;
    }
    let consecutive = |s: &Vec<usize>| s.windows(2).all(|w| w[1] == w[0] + 1);
    if !slots.iter().all(|s| consecutive(s)) {
        return false;
    }
    if ex.relation.len() > 5 {
        return false;
    }
    let max = |s: &Vec<usize>| *s.iter().max().unwrap();
    let min = |s: &Vec<usize>| *s.iter().min().unwrap();
    max(&ex.subject) < min(&ex.relation) && max(&ex.relation) < min(&ex.object)
}

/// Overlap clusters by connected components over the pairwise-overlap
/// graph; one winner per cluster by (longest, smallest start, input order).
pub fn brute_merge(spans: &[Span]) -> Vec<Span> {
    let n = spans.len();
    let mut comp: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                let share = (spans[i].start..spans[i].end).any(|t| t >= spans[j].start && t < spans[j].end);
                if share && comp[j] > comp[i] {
                    comp[j] = comp[i];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = Vec::new();
    for c in comp.iter().copied().collect::<BTreeSet<_>>() {
        let members: Vec<usize> = (0..n).filter(|&i| comp[i] == c).collect();
        let mut best = members[0];
        for &i in &members[1..] {
            let (a, b) = (spans[i], spans[best]);
            if a.len() > b.len() || (a.len() == b.len() && a.start < b.start) {
                best = i;
            }
        }
        out.push(spans[best]);
    }
    out.sort_by_key(|s| s.start);
    out
}

/// Random extraction for a sentence of `len` tokens, biased toward the
/// boundary cases of every rule.
pub fn random_extraction(rng: &mut ChaCha, len: usize) -> TripleExtraction {
    let slot = |rng: &mut ChaCha| -> Vec<usize> {
        match rng.gen_range(0..10) {
            0 => Vec::new(),
            1 => {
                let k = rng.gen_range(2..4);
                let mut v: Vec<usize> = (0..k).map(|_| rng.gen_range(0..len)).collect();
                v.sort_unstable();
                v
            }
            _ => {
                let l = rng.gen_range(1..=7.min(len));
                let s = rng.gen_range(0..=len - l);
                (s..s + l).collect()
            }
        }
    };
    // Mostly well-ordered triples so that enough survive the filter.
    let ordered = rng.gen_bool(0.7) && len >= 3;
    let (subject, relation, object) = if ordered {
        let a = rng.gen_range(1..len - 1);
        let b = rng.gen_range(a + 1..len);
        let rel_len = rng.gen_range(1..=(b - a).min(7));
        let rel_start = rng.gen_range(a..=b - rel_len);
        let subj_start = rng.gen_range(0..a);
        let obj_end = rng.gen_range(b + 1..=len);
        (
            (subj_start..a).collect(),
            (rel_start..rel_start + rel_len).collect(),
            (b..obj_end).collect::<Vec<usize>>(),
        )
    } else {
        (slot(rng), slot(rng), slot(rng))
    };
    TripleExtraction {
        sentence_id: "s".into(),
        subject,
        relation,
        object,
        is_implicit: rng.gen_bool(0.1),
        extractor: Default::default(),
    }
}

pub fn random_spans(rng: &mut ChaCha, len: usize, max_count: usize) -> Vec<Span> {
    let n = rng.gen_range(0..=max_count);
    (0..n)
        .map(|_| {
            let l = rng.gen_range(1..=6.min(len));
            let s = rng.gen_range(0..=len - l);
            Span::new(s, s + l)
        })
        .collect()
}

// ---------------------------------------------------------------- tagging

/// Random disjoint spans built by walking left to right.
pub fn random_disjoint(rng: &mut ChaCha, len: usize) -> Vec<Span> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < len {
        if rng.gen_bool(0.3) {
            let l = rng.gen_range(1..=4.min(len - i));
            out.push(Span::new(i, i + l));
            i += l;
        } else {
            i += 1;
        }
    }
    out
}

pub fn random_tags(rng: &mut ChaCha, len: usize, typed: bool) -> TagSequence {
    let ty = |rng: &mut ChaCha| if typed && rng.gen_bool(0.3) { SpanType::Rel } else { SpanType::Trg };
    (0..len)
        .map(|_| match rng.gen_range(0..3) {
            0 => Tag::O,
            1 => Tag::B(ty(rng)),
            _ => Tag::I(ty(rng)),
        })
        .collect::<Vec<_>>()
        .into()
}

pub fn tags_from_spans(spans: &[Span], len: usize) -> TagSequence {
    let mut t = vec![Tag::O; len];
    for s in spans {
        for (k, slot) in t[s.start..s.end].iter_mut().enumerate() {
            *slot = if k == 0 { Tag::B(SpanType::Trg) } else { Tag::I(SpanType::Trg) };
        }
    }
    t.into()
}

fn continues(prev: Option<Tag>, ty: SpanType) -> bool {
    matches!(prev, Some(Tag::B(p)) | Some(Tag::I(p)) if p == ty)
}

/// Every `(start, end, type)` that the tags denote, found by testing each of
/// the O(n²) candidate ranges against the definition of a span. A stray `I`
/// opens a span, which is what repair does.
pub fn brute_spans(tags: &TagSequence) -> BTreeSet<(usize, usize, SpanType)> {
    let t = &tags.tags;
    let n = t.len();
    let mut out = BTreeSet::new();
    for s in 0..n {
        let ty = match t[s] {
            Tag::O => continue,
            Tag::B(ty) => ty,
            Tag::I(ty) => {
                if continues(s.checked_sub(1).map(|p| t[p]), ty) {
                    continue;
                }
                ty
            }
        };
        for e in s + 1..=n {
            let inner = (s + 1..e).all(|k| t[k] == Tag::I(ty));
            let closed = e == n || t[e] != Tag::I(ty);
            if inner && closed {
                out.insert((s, e, ty));
            }
        }
    }
    out
}

/// `(tp, fp, fn)` from span-set intersection.
pub fn brute_counts(gold: &[TagSequence], pred: &[TagSequence]) -> (usize, usize, usize) {
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (g, p) in gold.iter().zip(pred) {
        let g = brute_spans(g);
        let p = brute_spans(p);
        let hit = g.iter().filter(|s| p.contains(s)).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += g.len() - hit;
    }
    (tp, fp, fn_)
}

pub fn brute_prf(gold: &[TagSequence], pred: &[TagSequence]) -> (f64, f64, f64) {
    let (tp, fp, fn_) = brute_counts(gold, pred);
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

// ---------------------------------------------------------------- model

/// TD loss of a batch recomputed from the raw parameter vectors with naive
/// loops. Encoder layout: token table, Wq, Wk, Wv, Wo (each `in × out`),
/// output bias, relative-position bias of `2w + 1` entries. Heads are
/// `out × in` then bias.
#[allow(clippy::needless_range_loop)]
pub fn reference_td_loss(model: &ModelBundle, batch: &[Example], window: usize) -> f64 {
    let h = model.hidden_size();
    let p = model.encoder.params();
    let vocab = model.encoder.vocab_size();
    let wq = vocab * h;
    let wk = wq + h * h;
    let wv = wk + h * h;
    let wo = wv + h * h;
    let bo = wo + h * h;
    let rb = bo + h;
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in batch {
        let n = ex.ids.len();
        let x: Vec<Vec<f64>> = ex.ids.iter().map(|&id| p[id as usize * h..id as usize * h + h].to_vec()).collect();
        let lin = |m: &Vec<f64>, off: usize| -> Vec<f64> {
            (0..h).map(|o| (0..h).map(|k| m[k] * p[off + k * h + o]).sum()).collect()
        };
        let q: Vec<Vec<f64>> = x.iter().map(|r| lin(r, wq)).collect();
        let k: Vec<Vec<f64>> = x.iter().map(|r| lin(r, wk)).collect();
        let v: Vec<Vec<f64>> = x.iter().map(|r| lin(r, wv)).collect();
        let mut hidden = Vec::with_capacity(n);
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| {
                    let d = (j as i64 - i as i64).clamp(-(window as i64), window as i64);
                    let qk: f64 = (0..h).map(|c| q[i][c] * k[j][c]).sum();
                    qk / (h as f64).sqrt() + p[rb + (d + window as i64) as usize]
                })
                .collect();
            let m = scores.iter().cloned().fold(f64::MIN, f64::max);
            let z: f64 = scores.iter().map(|s| (s - m).exp()).sum();
            let a: Vec<f64> = scores.iter().map(|s| (s - m).exp() / z).collect();
            let ctx: Vec<f64> = (0..h).map(|c| (0..n).map(|j| a[j] * v[j][c]).sum()).collect();
            let proj = lin(&ctx, wo);
            hidden.push((0..h).map(|c| (x[i][c] + proj[c] + p[bo + c]).tanh()).collect::<Vec<f64>>());
        }
        let head = &model.td_head;
        for i in 0..n {
            if i > 0 && ex.subword_word[i] == ex.subword_word[i - 1] {
                continue;
            }
            let word = ex.subword_word[i];
            let mut input = hidden[i].clone();
            if model.design == Design::Implicit {
                let e = model.rel_embed.as_ref().unwrap();
                let class = match ex.relations.as_ref().unwrap().tags[word] {
                    Tag::O => 0,
                    Tag::B(_) => 1,
                    Tag::I(_) => 2,
                };
                input.extend_from_slice(&e.params[class * e.dim..(class + 1) * e.dim]);
            }
            let logits: Vec<f64> = (0..3)
                .map(|o| {
                    (0..head.in_dim).map(|c| head.params[o * head.in_dim + c] * input[c]).sum::<f64>()
                        + head.params[head.in_dim * 3 + o]
                })
                .collect();
            let gold = match ex.triggers.tags[word] {
                Tag::O => 0,
                Tag::B(_) => 1,
                Tag::I(_) => 2,
            };
            let m = logits.iter().cloned().fold(f64::MIN, f64::max);
            let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
            total += lse - logits[gold];
            count += 1;
        }
    }
    total / count as f64
}

// ---------------------------------------------------------------- data

/// Sentence with random words, disjoint triggers and disjoint relations.
pub fn random_sentence(rng: &mut ChaCha, id: usize, split: relbridge_core::Split) -> relbridge_core::Sentence {
    let len = rng.gen_range(3..12);
    let tokens: Vec<String> = (0..len).map(|_| format!("w{}", rng.gen_range(0..40))).collect();
    relbridge_core::Sentence {
        sentence_id: format!("s{id}"),
        doc_id: format!("d{}", id / 4),
        trigger_spans: random_disjoint(rng, len),
        relation_spans: Some(random_disjoint(rng, len)),
        tokens,
        split,
    }
}

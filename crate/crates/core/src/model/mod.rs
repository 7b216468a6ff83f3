//! Trigger detection models: `vanilla`, `implicit` and `explicit` designs
//! over a shared encoder, plus an optional masked-language-modeling head.
//!
//! * vanilla: encoder + TD head.
//! * implicit: each token's hidden vector is concatenated with the row of a
//!   3-row relation label embedding matrix selected by the token's relation
//!   tag (`O`, `B-REL`, `I-REL`) before the TD head. The matrix is trained by
//!   the TD loss and read-only at inference.
//! * explicit: encoder + TD head + RD head; training averages the TD and RD
//!   losses per mini-batch, inference uses the TD head only.
//!
//! Losses and predictions are read from the first subword of every word.

pub mod encoder;
pub mod grid;
pub mod linear;
pub mod math;
pub mod mlm;
pub mod optim;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sentence;
use crate::hash;
use crate::rng;
use crate::tagging::{encode_iob2, SpanType, Tag, TagSequence};
pub use encoder::{Encoder, ToyEncoder, ToyTokenizer};
pub use linear::Linear;
use math::{argmax, cross_entropy, Matrix};
use mlm::MaskedSequence;

/// Number of IOB2 classes per task: `O`, `B-X`, `I-X`.
pub const N_CLASSES: usize = 3;

/// Range of the uniform initialization of the relation embedding matrix.
pub const REL_EMBED_INIT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Design {
    Vanilla,
    Implicit,
    Explicit,
}

impl Design {
    pub const ALL: [Design; 3] = [Design::Vanilla, Design::Implicit, Design::Explicit];

    pub fn as_str(&self) -> &'static str {
        match self {
            Design::Vanilla => "vanilla",
            Design::Implicit => "implicit",
            Design::Explicit => "explicit",
        }
    }

    /// Whether the design consumes relation tags at all.
    pub fn uses_relations(&self) -> bool {
        !matches!(self, Design::Vanilla)
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Design {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vanilla" => Ok(Design::Vanilla),
            "implicit" => Ok(Design::Implicit),
            "explicit" => Ok(Design::Explicit),
            _ => Err(ModelError::UnknownDesign(s.into())),
        }
    }
}

/// Encoder and head shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub vocab_size: usize,
    pub max_piece_chars: usize,
    pub max_subwords: usize,
    pub attention_window: usize,
    /// Seed of the shared starting encoder weights ("base" model).
    pub base_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_size: 16,
            vocab_size: 2048,
            max_piece_chars: 8,
            max_subwords: 256,
            attention_window: 3,
            base_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn tokenizer(&self) -> ToyTokenizer {
        ToyTokenizer {
            vocab_size: self.vocab_size,
            max_piece_chars: self.max_piece_chars,
            max_subwords: self.max_subwords,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("operation needs the {expected} design, model is {found}")]
    DesignMismatch { expected: Design, found: Design },
    #[error("sentence {0}: relation tags are required by this design")]
    MissingRelationTags(String),
    #[error("sentence {id}: {what} has length {found}, expected {expected}")]
    LengthMismatch {
        id: String,
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("the RD head is not used at inference")]
    RdAtInference,
    #[error("model has no MLM head")]
    NoMlmHead,
    #[error("unknown design {0:?}")]
    UnknownDesign(String),
    #[error("relation embedding dimension {found} does not match TD head input {expected}")]
    EmbeddingDim { expected: usize, found: usize },
    #[error("checkpoint is malformed: {0}")]
    BadCheckpoint(&'static str),
}

/// The 3 × d relation label embedding matrix, rows indexed by `O`, `B-REL`, `I-REL`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationEmbedding {
    pub dim: usize,
    pub params: Vec<f64>,
}

impl RelationEmbedding {
    pub fn new(dim: usize, rng: &mut rng::Rng) -> Self {
        let params = (0..N_CLASSES * dim).map(|_| rng.gen_range(-REL_EMBED_INIT..=REL_EMBED_INIT)).collect();
        RelationEmbedding { dim, params }
    }

    pub fn row(&self, class: usize) -> &[f64] {
        &self.params[class * self.dim..(class + 1) * self.dim]
    }

    pub fn digest(&self) -> String {
        hash::weights_digest(&self.params)
    }
}

/// A sentence prepared for the model: subword ids and word-level gold tags.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub sentence_id: String,
    pub ids: Vec<u32>,
    pub subword_word: Vec<usize>,
    pub first_mask: Vec<bool>,
    /// Words in the sentence.
    pub n_words: usize,
    /// Words that kept at least one subword after truncation.
    pub n_kept_words: usize,
    pub triggers: TagSequence,
    pub relations: Option<TagSequence>,
    pub truncated: bool,
}

impl Example {
    pub fn from_sentence(sentence: &Sentence, tokenizer: &ToyTokenizer) -> Self {
        let enc = tokenizer.encode(&sentence.tokens);
        let n = sentence.tokens.len();
        let first_mask = crate::tagging::first_subword_mask(enc.n_words, &enc.subword_word)
            .expect("tokenizer alignment is contiguous");
        let triggers = encode_iob2(&sentence.trigger_spans, n, SpanType::Trg).expect("validated sentence");
        let relations = sentence
            .relation_spans
            .as_ref()
            .map(|r| encode_iob2(r, n, SpanType::Rel).expect("validated sentence"));
        Example {
            sentence_id: sentence.sentence_id.clone(),
            ids: enc.ids,
            subword_word: enc.subword_word,
            first_mask,
            n_words: n,
            n_kept_words: enc.n_words,
            triggers,
            relations,
            truncated: enc.truncated,
        }
    }

    /// Positions that carry a loss.
    pub fn n_loss_positions(&self) -> usize {
        self.first_mask.iter().filter(|m| **m).count()
    }

    fn relation_classes(&self) -> Option<&TagSequence> {
        self.relations.as_ref()
    }
}

/// Which head a pass targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Td,
    Rd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// Gradient buffers laid out like the bundle's parameter groups.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<f64>,
    pub td_head: Vec<f64>,
    pub rd_head: Vec<f64>,
    pub rel_embed: Vec<f64>,
    pub mlm_head: Vec<f64>,
}

impl Gradients {
    pub fn slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            &mut self.encoder,
            &mut self.td_head,
            &mut self.rd_head,
            &mut self.rel_embed,
            &mut self.mlm_head,
        ]
    }

    pub fn norm(&self) -> f64 {
        let sq: f64 = [&self.encoder, &self.td_head, &self.rd_head, &self.rel_embed, &self.mlm_head]
            .iter()
            .map(|g| math::l2_norm_sq(g))
            .sum();
        libm::sqrt(sq)
    }
}

/// A group of examples contributing `weight × mean loss` to a step.
#[derive(Clone, Debug)]
pub struct LossPart<'a> {
    pub examples: Vec<&'a Example>,
    pub task: Task,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Unweighted mean loss of each part, in input order.
    pub part_losses: Vec<f64>,
    pub grads: Gradients,
}

/// Encoder plus task heads.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle<E: Encoder = ToyEncoder> {
    pub design: Design,
    pub encoder: E,
    pub td_head: Linear,
    pub rd_head: Option<Linear>,
    pub rel_embed: Option<RelationEmbedding>,
    pub mlm_head: Option<Linear>,
}

impl ModelBundle<ToyEncoder> {
    /// Fresh model: encoder weights come from `config.base_seed`, heads and
    /// the relation embedding matrix from `seed`. `rel_embed_dim` is used by
    /// the implicit design only.
    pub fn new(design: Design, config: &ModelConfig, rel_embed_dim: usize, mlm: bool, seed: u64) -> Self {
        let h = config.hidden_size;
        let encoder = ToyEncoder::new(
            h,
            config.vocab_size,
            config.attention_window,
            &mut rng::seeded(rng::derive(config.base_seed, "encoder")),
        );
        let mut head_rng = rng::seeded(rng::derive(seed, "heads"));
        let rel_embed = (design == Design::Implicit)
            .then(|| RelationEmbedding::new(rel_embed_dim, &mut rng::seeded(rng::derive(seed, "rel_embed"))));
        let td_in = h + rel_embed.as_ref().map_or(0, |e| e.dim);
        let td_head = Linear::new(td_in, N_CLASSES, &mut head_rng);
        let rd_head = (design == Design::Explicit).then(|| Linear::new(h, N_CLASSES, &mut head_rng));
        let mlm_head = mlm.then(|| {
            let mut mlm_rng = rng::seeded(rng::derive(config.base_seed, "mlm_head"));
            Linear::new(h, config.vocab_size, &mut mlm_rng)
        });
        ModelBundle { design, encoder, td_head, rd_head, rel_embed, mlm_head }
    }
}

impl<E: Encoder> ModelBundle<E> {
    pub fn hidden_size(&self) -> usize {
        self.encoder.hidden_size()
    }

    /// Input width of the TD head: `H`, or `H + d` for the implicit design.
    pub fn td_input_dim(&self) -> usize {
        self.td_head.in_dim
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let expected = self.hidden_size() + self.rel_embed.as_ref().map_or(0, |e| e.dim);
        if self.td_head.in_dim != expected {
            return Err(ModelError::EmbeddingDim { expected: self.td_head.in_dim, found: expected });
        }
        let ok = match self.design {
            Design::Vanilla => self.rd_head.is_none() && self.rel_embed.is_none(),
            Design::Implicit => self.rd_head.is_none() && self.rel_embed.is_some(),
            Design::Explicit => self.rd_head.is_some() && self.rel_embed.is_none(),
        };
        if !ok || self.td_head.out_dim != N_CLASSES {
            return Err(ModelError::BadCheckpoint("heads do not match the design"));
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            encoder: alloc::vec![0.0; self.encoder.params().len()],
            td_head: alloc::vec![0.0; self.td_head.params.len()],
            rd_head: alloc::vec![0.0; self.rd_head.as_ref().map_or(0, |h| h.params.len())],
            rel_embed: alloc::vec![0.0; self.rel_embed.as_ref().map_or(0, |e| e.params.len())],
            mlm_head: alloc::vec![0.0; self.mlm_head.as_ref().map_or(0, |h| h.params.len())],
        }
    }

    /// Parameter vectors in the same order as [`Gradients::slices_mut`].
    pub fn param_slices_mut(&mut self) -> [&mut [f64]; 5] {
        [
            self.encoder.params_mut(),
            &mut self.td_head.params,
            self.rd_head.as_mut().map_or(&mut [][..], |h| &mut h.params[..]),
            self.rel_embed.as_mut().map_or(&mut [][..], |e| &mut e.params[..]),
            self.mlm_head.as_mut().map_or(&mut [][..], |h| &mut h.params[..]),
        ]
    }

    pub fn group_sizes(&self) -> [usize; 5] {
        let g = self.zero_grads();
        [g.encoder.len(), g.td_head.len(), g.rd_head.len(), g.rel_embed.len(), g.mlm_head.len()]
    }

    fn relation_tags<'a>(&self, ex: &'a Example) -> Result<&'a TagSequence, ModelError> {
        let tags = ex
            .relation_classes()
            .ok_or_else(|| ModelError::MissingRelationTags(ex.sentence_id.clone()))?;
        if tags.len() != ex.n_words {
            return Err(ModelError::LengthMismatch {
                id: ex.sentence_id.clone(),
                what: "relation tags",
                expected: ex.n_words,
                found: tags.len(),
            });
        }
        Ok(tags)
    }

    /// Builds the head input for subword `i`.
    fn head_input(&self, hidden: &Matrix, i: usize, task: Task, rel: Option<&TagSequence>, word: usize) -> Vec<f64> {
        let mut input = hidden.row(i).to_vec();
        if task == Task::Td {
            if let (Some(e), Some(rel)) = (&self.rel_embed, rel) {
                input.extend_from_slice(e.row(rel.tags[word].class()));
            }
        }
        input
    }

    fn head(&self, task: Task) -> &Linear {
        match task {
            Task::Td => &self.td_head,
            Task::Rd => self.rd_head.as_ref().expect("checked by caller"),
        }
    }

    /// Logits of the selected head at every subword (`n_subwords × 3`).
    /// For the implicit design each subword uses its word's relation tag.
    pub fn logits(&self, ex: &Example, task: Task) -> Result<Matrix, ModelError> {
        if task == Task::Rd && self.rd_head.is_none() {
            return Err(ModelError::DesignMismatch { expected: Design::Explicit, found: self.design });
        }
        let rel = if self.design == Design::Implicit { Some(self.relation_tags(ex)?) } else { None };
        let (hidden, _) = self.encoder.forward(&ex.ids);
        let head = self.head(task);
        let mut out = Matrix::zeros(ex.ids.len(), N_CLASSES);
        for i in 0..ex.ids.len() {
            let input = self.head_input(&hidden, i, task, rel, ex.subword_word[i]);
            out.row_mut(i).copy_from_slice(&head.forward(&input));
        }
        Ok(out)
    }

    fn require(&self, design: Design) -> Result<(), ModelError> {
        if self.design != design {
            return Err(ModelError::DesignMismatch { expected: design, found: self.design });
        }
        Ok(())
    }

    pub fn forward_vanilla(&self, batch: &[Example]) -> Result<Vec<Matrix>, ModelError> {
        self.require(Design::Vanilla)?;
        batch.iter().map(|ex| self.logits(ex, Task::Td)).collect()
    }

    /// `relation_tags[k]` replaces the relation layer of `batch[k]`.
    pub fn forward_implicit(&self, batch: &[Example], relation_tags: &[TagSequence]) -> Result<Vec<Matrix>, ModelError> {
        self.require(Design::Implicit)?;
        if relation_tags.len() != batch.len() {
            return Err(ModelError::LengthMismatch {
                id: String::from("<batch>"),
                what: "relation tag list",
                expected: batch.len(),
                found: relation_tags.len(),
            });
        }
        batch
            .iter()
            .zip(relation_tags)
            .map(|(ex, tags)| {
                let ex = Example { relations: Some(tags.clone()), ..ex.clone() };
                self.logits(&ex, Task::Td)
            })
            .collect()
    }

    pub fn forward_explicit(&self, batch: &[Example], task: Task, mode: Mode) -> Result<Vec<Matrix>, ModelError> {
        self.require(Design::Explicit)?;
        if task == Task::Rd && mode == Mode::Inference {
            return Err(ModelError::RdAtInference);
        }
        batch.iter().map(|ex| self.logits(ex, task)).collect()
    }

    /// Summed cross-entropy over first-subword positions of one example; when
    /// `grads` is given, backpropagates `scale ×` that sum.
    fn example_pass(&self, ex: &Example, task: Task, grads: Option<(&mut Gradients, f64)>) -> Result<(f64, usize), ModelError> {
        let rel = if self.design == Design::Implicit && task == Task::Td { Some(self.relation_tags(ex)?) } else { None };
        let labels = match task {
            Task::Td => &ex.triggers,
            Task::Rd => {
                if self.rd_head.is_none() {
                    return Err(ModelError::DesignMismatch { expected: Design::Explicit, found: self.design });
                }
                self.relation_tags(ex)?
            }
        };
        let (hidden, cache) = self.encoder.forward(&ex.ids);
        let head = self.head(task);
        let h = self.hidden_size();
        let mut total = 0.0;
        let mut count = 0;
        let mut grads = grads;
        let mut d_hidden = Matrix::zeros(ex.ids.len(), h);
        for i in 0..ex.ids.len() {
            if !ex.first_mask[i] {
                continue;
            }
            let word = ex.subword_word[i];
            let input = self.head_input(&hidden, i, task, rel, word);
            let (loss, mut dlogits) = cross_entropy(&head.forward(&input), labels.tags[word].class());
            total += loss;
            count += 1;
            if let Some((g, scale)) = grads.as_mut() {
                for d in &mut dlogits {
                    *d *= *scale;
                }
                let mut dinput = alloc::vec![0.0; input.len()];
                let head_grad = match task {
                    Task::Td => &mut g.td_head,
                    Task::Rd => &mut g.rd_head,
                };
                head.backward(&input, &dlogits, head_grad, &mut dinput);
                for (d, v) in d_hidden.row_mut(i).iter_mut().zip(&dinput[..h]) {
                    *d += v;
                }
                if let (Some(e), Some(rel)) = (&self.rel_embed, rel) {
                    let row = rel.tags[word].class() * e.dim;
                    for (k, v) in dinput[h..].iter().enumerate() {
                        g.rel_embed[row + k] += v;
                    }
                }
            }
        }
        if let Some((g, _)) = grads {
            self.encoder.backward(&ex.ids, &cache, &d_hidden, &mut g.encoder);
        }
        Ok((total, count))
    }

    /// Weighted sum of per-part mean losses and its gradient.
    pub fn loss_and_grad(&self, parts: &[LossPart<'_>]) -> Result<LossOutput, ModelError> {
        let mut grads = self.zero_grads();
        let mut loss = 0.0;
        let mut part_losses = Vec::with_capacity(parts.len());
        for part in parts {
            let count: usize = part.examples.iter().map(|e| e.n_loss_positions()).sum();
            let scale = if count == 0 { 0.0 } else { part.weight / count as f64 };
            let mut sum = 0.0;
            for ex in &part.examples {
                sum += self.example_pass(ex, part.task, Some((&mut grads, scale)))?.0;
            }
            let mean = if count == 0 { 0.0 } else { sum / count as f64 };
            part_losses.push(mean);
            loss += part.weight * mean;
        }
        Ok(LossOutput { loss, part_losses, grads })
    }

    /// Loss only, no gradients.
    pub fn loss(&self, parts: &[LossPart<'_>]) -> Result<f64, ModelError> {
        let mut loss = 0.0;
        for part in parts {
            let mut sum = 0.0;
            let mut count = 0;
            for ex in &part.examples {
                let (s, c) = self.example_pass(ex, part.task, None)?;
                sum += s;
                count += c;
            }
            if count > 0 {
                loss += part.weight * sum / count as f64;
            }
        }
        Ok(loss)
    }

    /// Mean MLM cross-entropy over all selected positions in `seqs`, with
    /// gradient. Returns `(loss, grads, n_sequences_without_targets)`.
    pub fn mlm_loss_and_grad(&self, seqs: &[MaskedSequence]) -> Result<(f64, Gradients, usize), ModelError> {
        let head = self.mlm_head.as_ref().ok_or(ModelError::NoMlmHead)?;
        let mut grads = self.zero_grads();
        let count: usize = seqs.iter().map(|s| s.targets.len()).sum();
        let skipped = seqs.iter().filter(|s| s.targets.is_empty()).count();
        if count == 0 {
            return Ok((0.0, grads, skipped));
        }
        let scale = 1.0 / count as f64;
        let h = self.hidden_size();
        let mut total = 0.0;
        for seq in seqs.iter().filter(|s| !s.targets.is_empty()) {
            let (hidden, cache) = self.encoder.forward(&seq.input_ids);
            let mut d_hidden = Matrix::zeros(seq.input_ids.len(), h);
            for &(pos, original, _) in &seq.targets {
                let input = hidden.row(pos);
                let (loss, mut dlogits) = cross_entropy(&head.forward(input), original as usize);
                total += loss;
                for d in &mut dlogits {
                    *d *= scale;
                }
                let mut dinput = alloc::vec![0.0; h];
                head.backward(input, &dlogits, &mut grads.mlm_head, &mut dinput);
                for (d, v) in d_hidden.row_mut(pos).iter_mut().zip(&dinput) {
                    *d += v;
                }
            }
            self.encoder.backward(&seq.input_ids, &cache, &d_hidden, &mut grads.encoder);
        }
        Ok((total * scale, grads, skipped))
    }

    /// Word-level TD tags for one sentence. Words lost to truncation are `O`;
    /// invalid transitions are repaired.
    pub fn predict(&self, ex: &Example) -> Result<TagSequence, ModelError> {
        let logits = self.logits(ex, Task::Td)?;
        let mut tags = alloc::vec![Tag::O; ex.n_words];
        for i in 0..ex.ids.len() {
            if ex.first_mask[i] {
                tags[ex.subword_word[i]] = Tag::from_class(argmax(logits.row(i)), SpanType::Trg);
            }
        }
        Ok(TagSequence::from(tags).repaired())
    }
}

/// Versioned on-disk form of a toy-encoder bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub design: Design,
    pub model: ModelConfig,
    pub encoder: Vec<f64>,
    pub td_head: Linear,
    pub rd_head: Option<Linear>,
    pub rel_embed: Option<RelationEmbedding>,
    pub mlm_head: Option<Linear>,
    pub config_hash: String,
    pub source_valid_f1: Option<f64>,
    pub selected_epoch: Option<usize>,
    /// Relation embedding learning rate picked for this model, if any.
    #[serde(default)]
    pub lr_rel_embed: Option<f64>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn from_bundle(
        bundle: &ModelBundle,
        model: &ModelConfig,
        config_hash: String,
        source_valid_f1: Option<f64>,
        selected_epoch: Option<usize>,
    ) -> Self {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            design: bundle.design,
            model: model.clone(),
            encoder: bundle.encoder.params().to_vec(),
            td_head: bundle.td_head.clone(),
            rd_head: bundle.rd_head.clone(),
            rel_embed: bundle.rel_embed.clone(),
            mlm_head: bundle.mlm_head.clone(),
            config_hash,
            source_valid_f1,
            selected_epoch,
            lr_rel_embed: None,
        }
    }

    pub fn into_bundle(self) -> Result<ModelBundle, ModelError> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(ModelError::BadCheckpoint("unsupported format version"));
        }
        let m = &self.model;
        let encoder = ToyEncoder::from_params(m.hidden_size, m.vocab_size, m.attention_window, self.encoder)
            .ok_or(ModelError::BadCheckpoint("encoder weight count"))?;
        let bundle = ModelBundle {
            design: self.design,
            encoder,
            td_head: self.td_head,
            rd_head: self.rd_head,
            rel_embed: self.rel_embed,
            mlm_head: self.mlm_head,
        };
        bundle.check()?;
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Split;
    use crate::span::Span;
    use alloc::string::ToString;
    use alloc::vec;

    fn small_config() -> ModelConfig {
        ModelConfig { hidden_size: 6, vocab_size: 64, max_piece_chars: 3, ..ModelConfig::default() }
    }

    fn example(tokens: &[&str], triggers: &[(usize, usize)], relations: Option<&[(usize, usize)]>) -> Example {
        let s = Sentence {
            sentence_id: "s".into(),
            doc_id: "d".into(),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            trigger_spans: triggers.iter().map(|&t| Span::from(t)).collect(),
            relation_spans: relations.map(|r| r.iter().map(|&t| Span::from(t)).collect()),
            split: Split::Train,
        };
        Example::from_sentence(&s, &small_config().tokenizer())
    }

    #[test]
    fn zero_head_gives_ln3() {
        let mut m = ModelBundle::new(Design::Vanilla, &small_config(), 10, false, 1);
        m.td_head = Linear::zeros(m.td_head.in_dim, 3);
        let ex = example(&["prices", "collapsed", "today"], &[(1, 2)], None);
        let logits = m.forward_vanilla(core::slice::from_ref(&ex)).unwrap();
        assert!(logits[0].data.iter().all(|&l| l == 0.0));
        let loss = m.loss(&[LossPart { examples: vec![&ex], task: Task::Td, weight: 1.0 }]).unwrap();
        assert!((loss - libm::log(3.0)).abs() < 1e-12);
    }

    #[test]
    fn single_token_shape() {
        let m = ModelBundle::new(Design::Vanilla, &small_config(), 10, false, 1);
        let ex = example(&["ok"], &[], None);
        let logits = m.forward_vanilla(&[ex]).unwrap();
        assert_eq!((logits.len(), logits[0].rows, logits[0].cols), (1, 1, 3));
    }

    #[test]
    fn design_guards() {
        let m = ModelBundle::new(Design::Explicit, &small_config(), 10, false, 1);
        let ex = example(&["a", "b"], &[], Some(&[]));
        assert!(matches!(m.forward_vanilla(core::slice::from_ref(&ex)), Err(ModelError::DesignMismatch { .. })));
        assert_eq!(m.forward_explicit(core::slice::from_ref(&ex), Task::Rd, Mode::Inference), Err(ModelError::RdAtInference));
        assert!(m.forward_explicit(&[ex], Task::Rd, Mode::Train).is_ok());

        let imp = ModelBundle::new(Design::Implicit, &small_config(), 10, false, 1);
        let bare = example(&["a", "b"], &[], None);
        assert!(matches!(imp.predict(&bare), Err(ModelError::MissingRelationTags(_))));
        assert!(matches!(
            imp.forward_implicit(core::slice::from_ref(&bare), &[TagSequence::all_o(3)]),
            Err(ModelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn implicit_input_dims() {
        let cfg = ModelConfig { hidden_size: 768, vocab_size: 8, ..ModelConfig::default() };
        let m = ModelBundle::new(Design::Implicit, &cfg, 300, false, 1);
        assert_eq!(m.td_input_dim(), 1068);
    }

    #[test]
    fn all_o_relations_use_row_zero() {
        let m = ModelBundle::new(Design::Implicit, &small_config(), 4, false, 1);
        let ex = example(&["a", "b", "c"], &[], Some(&[]));
        let (hidden, _) = m.encoder.forward(&ex.ids);
        let rel = ex.relations.clone().unwrap();
        for i in 0..ex.ids.len() {
            let input = m.head_input(&hidden, i, Task::Td, Some(&rel), ex.subword_word[i]);
            assert_eq!(&input[6..], m.rel_embed.as_ref().unwrap().row(0));
        }
    }

    #[test]
    fn non_first_subwords_do_not_affect_loss() {
        let mut m = ModelBundle::new(Design::Vanilla, &small_config(), 10, false, 3);
        m.td_head = Linear::new(6, 3, &mut rng::seeded(4));
        // "collapsed" splits into three subwords
        let ex = example(&["prices", "collapsed"], &[(1, 2)], None);
        assert!(ex.first_mask.iter().any(|m| !m));
        let part = |e| vec![LossPart { examples: vec![e], task: Task::Td, weight: 1.0 }];
        let base = m.loss(&part(&ex)).unwrap();
        let out = m.loss_and_grad(&part(&ex)).unwrap();
        assert!((out.loss - base).abs() < 1e-15);
        assert_eq!(out.part_losses, vec![base]);
    }

    #[test]
    fn checkpoint_round_trip() {
        let cfg = small_config();
        let m = ModelBundle::new(Design::Implicit, &cfg, 5, true, 9);
        let ck = Checkpoint::from_bundle(&m, &cfg, "abc".into(), Some(0.5), Some(2));
        assert_eq!(ck.clone().into_bundle().unwrap(), m);
        let mut bad = ck;
        bad.encoder.pop();
        assert!(bad.into_bundle().is_err());
    }
}

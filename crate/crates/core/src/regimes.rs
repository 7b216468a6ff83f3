//! Training regimes, MLM alternation, the optimizer/scheduler contract and
//! checkpoint selection.
//!
//! Every regime runs the same epoch loop:
//!
//! 1. optional MLM pass over unlabeled target sentences;
//! 2. TD pass, either standard batches or mixed source/target batches;
//! 3. evaluation on the selection split and snapshot of the best epoch;
//! 4. learning rate multiplied by the decay factor.
//!
//! Each step clips the global gradient norm and applies Adam. The relation
//! embedding matrix has its own base learning rate; both rates follow the
//! same schedule.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::mlm::mask_tokens;
use crate::model::optim::{clip_grad_norm, Adam, AdamParams, MultiplicativeSchedule};
use crate::model::{Design, Example, LossPart, ModelBundle, ModelConfig, ModelError, Task};
use crate::rng;
use crate::tagging::{strict_micro_prf, EvalResult, TagError, TagSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    InDomain,
    JointTraining,
    JointTransfer,
    SequentialTransfer,
}

impl Regime {
    pub const ALL: [Regime; 4] = [
        Regime::JointTraining,
        Regime::JointTransfer,
        Regime::InDomain,
        Regime::SequentialTransfer,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::InDomain => "in_domain",
            Regime::JointTraining => "joint_training",
            Regime::JointTransfer => "joint_transfer",
            Regime::SequentialTransfer => "sequential_transfer",
        }
    }

    /// Starts from a source-trained checkpoint rather than base weights.
    pub fn needs_source_checkpoint(&self) -> bool {
        matches!(self, Regime::JointTransfer | Regime::SequentialTransfer)
    }

    pub fn uses_mixed_batches(&self) -> bool {
        matches!(self, Regime::JointTraining | Regime::JointTransfer)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Regime {
    type Err = RegimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| RegimeError::UnknownRegime(s.into()))
    }
}

/// Optimization hyperparameters. Defaults are the reference full-scale values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub grad_clip: f64,
    /// Base learning rate of the relation embedding matrix.
    pub lr_rel_embed: f64,
    pub source_per_batch: usize,
    pub target_per_batch: usize,
    pub mask_prob: f64,
    pub mlm_batch_size: usize,
    pub implicit_dim_in_domain: usize,
    pub implicit_dim_joint: usize,
    /// Fixed implicit dimension for source training; `None` runs the grid search.
    pub implicit_dim_source: Option<usize>,
    /// Few-shot stages with at least this many shots select by target valid F1;
    /// smaller ones keep the final epoch.
    pub argmax_min_shots: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            epochs: 10,
            batch_size: 32,
            lr: 1e-5,
            lr_decay: 0.99,
            grad_clip: 1.0,
            lr_rel_embed: 1e-4,
            source_per_batch: 27,
            target_per_batch: 5,
            mask_prob: 0.15,
            mlm_batch_size: 32,
            implicit_dim_in_domain: 10,
            implicit_dim_joint: 300,
            implicit_dim_source: None,
            argmax_min_shots: 50,
        }
    }
}

impl Hyperparams {
    /// Names of fields that differ from the reference values.
    pub fn overrides(&self) -> Vec<&'static str> {
        let d = Hyperparams::default();
        let mut out = Vec::new();
        macro_rules! cmp {
            ($($f:ident),*) => {$(if self.$f != d.$f { out.push(stringify!($f)); })*};
        }
        cmp!(
            epochs,
            batch_size,
            lr,
            lr_decay,
            grad_clip,
            lr_rel_embed,
            source_per_batch,
            target_per_batch,
            mask_prob,
            mlm_batch_size,
            implicit_dim_in_domain,
            implicit_dim_joint,
            implicit_dim_source,
            argmax_min_shots
        );
        out
    }

    pub fn schedule(&self) -> MultiplicativeSchedule {
        MultiplicativeSchedule { base: self.lr, factor: self.lr_decay }
    }
}

/// Everything that determines one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeConfig {
    pub regime: Regime,
    pub design: Design,
    pub mlm: bool,
    pub shots: usize,
    pub seed: u64,
    pub sample_index: usize,
    pub hyper: Hyperparams,
    pub model: ModelConfig,
}

#[derive(Debug, Error, PartialEq)]
pub enum RegimeError {
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("{regime} needs at least {min} shots, got {shots}")]
    TooFewShots { regime: Regime, shots: usize, min: usize },
    #[error("checkpoint design {found} does not match requested design {expected}")]
    DesignMismatch { expected: Design, found: Design },
    #[error("sentence {0} has no relation layer but the {1} design needs one")]
    MissingRelations(String, Design),
    #[error("MLM alternation needs target sentences")]
    NoTargetSentences,
    #[error("unknown regime {0:?}")]
    UnknownRegime(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tagging(#[from] TagError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Mlm,
    Td,
}

/// One optimizer update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub kind: StepKind,
    pub loss: f64,
    /// Mean loss of each weighted part (TD parts, then RD parts per side).
    pub part_losses: Vec<f64>,
    pub n_source: usize,
    pub n_target: usize,
    pub pre_clip_norm: f64,
    pub post_clip_norm: f64,
    pub lr: f64,
}

/// One line of the per-run metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub epoch: usize,
    pub split: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub train_loss: f64,
    pub td_loss: f64,
    pub rd_loss: Option<f64>,
    pub mlm_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Clone, Copy, Debug)]
pub enum TdSchedule<'a> {
    /// Shuffled batches of `batch_size`.
    Standard(&'a [Example]),
    /// `source_per_batch` source items plus `target_per_batch` items drawn
    /// from the target pool. The epoch ends once the source split is covered.
    Mixed { source: &'a [Example], target_pool: &'a [Example] },
}

#[derive(Clone, Copy, Debug)]
pub enum Selection<'a> {
    /// Keep the epoch with the highest F1 on these examples; ties go to the
    /// earlier epoch.
    Argmax(&'a [Example]),
    /// Keep the last epoch, optionally logging F1 on a monitor split.
    FinalEpoch(Option<&'a [Example]>),
}

impl<'a> Selection<'a> {
    /// Rule for few-shot stages.
    pub fn for_few_shot(shots: usize, valid: &'a [Example], hyper: &Hyperparams) -> Self {
        if shots >= hyper.argmax_min_shots && !valid.is_empty() {
            Selection::Argmax(valid)
        } else {
            Selection::FinalEpoch((!valid.is_empty()).then_some(valid))
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainPlan<'a> {
    pub hyper: &'a Hyperparams,
    pub td: TdSchedule<'a>,
    pub mlm_corpus: Option<&'a [Example]>,
    pub selection: Selection<'a>,
    pub seed: u64,
}

impl<'a> TrainPlan<'a> {
    pub fn new(hyper: &'a Hyperparams, td: TdSchedule<'a>, selection: Selection<'a>, seed: u64) -> Self {
        TrainPlan { hyper, td, mlm_corpus: None, selection, seed }
    }
}

/// Adds an MLM pass over `target` before the TD pass of every epoch.
pub fn alternate_with_mlm<'a>(plan: TrainPlan<'a>, target: &'a [Example]) -> Result<TrainPlan<'a>, RegimeError> {
    if target.is_empty() {
        return Err(RegimeError::NoTargetSentences);
    }
    Ok(TrainPlan { mlm_corpus: Some(target), ..plan })
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Snapshot of the selected epoch (the input model when no epoch ran).
    pub model: ModelBundle,
    pub selected_epoch: Option<usize>,
    pub selection_f1: Option<f64>,
    pub metrics: Vec<MetricRecord>,
    pub steps: Vec<StepRecord>,
    pub mlm_skipped: usize,
}

pub fn evaluate(model: &ModelBundle, examples: &[Example]) -> Result<EvalResult, RegimeError> {
    let gold: Vec<TagSequence> = examples.iter().map(|e| e.triggers.clone()).collect();
    let pred = examples.iter().map(|e| model.predict(e)).collect::<Result<Vec<_>, _>>()?;
    Ok(strict_micro_prf(&gold, &pred)?)
}

fn td_parts<'e>(design: Design, examples: Vec<&'e Example>, weight: f64) -> Vec<LossPart<'e>> {
    match design {
        Design::Explicit => alloc::vec![
            LossPart { examples: examples.clone(), task: Task::Td, weight: weight / 2.0 },
            LossPart { examples, task: Task::Rd, weight: weight / 2.0 },
        ],
        _ => alloc::vec![LossPart { examples, task: Task::Td, weight }],
    }
}

fn require_relations(design: Design, examples: &[Example]) -> Result<(), RegimeError> {
    if design.uses_relations() {
        if let Some(ex) = examples.iter().find(|e| e.relations.is_none()) {
            return Err(RegimeError::MissingRelations(ex.sentence_id.clone(), design));
        }
    }
    Ok(())
}

struct Optimizer {
    adam: Adam,
    schedule: MultiplicativeSchedule,
    rel_schedule: MultiplicativeSchedule,
    clip: f64,
}

impl Optimizer {
    fn new(model: &ModelBundle, hyper: &Hyperparams) -> Self {
        Optimizer {
            adam: Adam::new(&model.group_sizes(), AdamParams::default()),
            schedule: hyper.schedule(),
            rel_schedule: MultiplicativeSchedule { base: hyper.lr_rel_embed, factor: hyper.lr_decay },
            clip: hyper.grad_clip,
        }
    }

    /// Clips `grads` in place and applies one update; returns the clip stats.
    fn apply(&mut self, model: &mut ModelBundle, grads: &mut crate::model::Gradients, epoch: usize) -> (f64, f64, f64) {
        let stats = clip_grad_norm(&mut grads.slices_mut(), self.clip);
        debug_assert!(stats.post_norm <= self.clip + 1e-6);
        let lr = self.schedule.lr_at(epoch);
        let lr_rel = self.rel_schedule.lr_at(epoch);
        let [pe, pt, pr, pe2, pm] = model.param_slices_mut();
        let mut groups = [
            (pe, &grads.encoder[..], lr),
            (pt, &grads.td_head[..], lr),
            (pr, &grads.rd_head[..], lr),
            (pe2, &grads.rel_embed[..], lr_rel),
            (pm, &grads.mlm_head[..], lr),
        ];
        self.adam.step(&mut groups);
        (stats.pre_norm, stats.post_norm, lr)
    }
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs the epoch loop described in the module docs. A fresh optimizer is
/// created for every call.
pub fn train(model: ModelBundle, plan: &TrainPlan<'_>) -> Result<TrainOutcome, RegimeError> {
    let hyper = plan.hyper;
    let design = model.design;
    match plan.td {
        TdSchedule::Standard(ex) => require_relations(design, ex)?,
        TdSchedule::Mixed { source, target_pool } => {
            require_relations(design, source)?;
            require_relations(design, target_pool)?;
            if target_pool.len() < hyper.target_per_batch {
                return Err(RegimeError::TooFewShots {
                    regime: Regime::JointTraining,
                    shots: target_pool.len(),
                    min: hyper.target_per_batch,
                });
            }
        }
    }
    if plan.mlm_corpus.is_some() && model.mlm_head.is_none() {
        return Err(ModelError::NoMlmHead.into());
    }

    let mut model = model;
    let mut opt = Optimizer::new(&model, hyper);
    let mut rng = rng::seeded(rng::derive(plan.seed, "train"));
    let mut mlm_rng = rng::seeded(rng::derive(plan.seed, "mlm"));
    let mut steps = Vec::new();
    let mut metrics = Vec::new();
    let mut best: Option<(usize, f64, ModelBundle)> = None;
    let mut mlm_skipped = 0;

    for epoch in 0..hyper.epochs {
        let mut mlm_losses = Vec::new();
        if let Some(corpus) = plan.mlm_corpus {
            let mut order: Vec<usize> = (0..corpus.len()).collect();
            order.shuffle(&mut rng);
            for chunk in order.chunks(hyper.mlm_batch_size.max(1)) {
                let seqs: Vec<_> = chunk
                    .iter()
                    .map(|&i| mask_tokens(&corpus[i].ids, hyper.mask_prob, model.encoder_vocab(), &mut mlm_rng))
                    .collect();
                let (loss, mut grads, skipped) = model.mlm_loss_and_grad(&seqs)?;
                mlm_skipped += skipped;
                let (pre, post, lr) = opt.apply(&mut model, &mut grads, epoch);
                mlm_losses.push(loss);
                steps.push(StepRecord {
                    epoch,
                    kind: StepKind::Mlm,
                    loss,
                    part_losses: alloc::vec![loss],
                    n_source: 0,
                    n_target: chunk.len(),
                    pre_clip_norm: pre,
                    post_clip_norm: post,
                    lr,
                });
            }
        }

        let mut td_losses = Vec::new();
        let mut rd_losses = Vec::new();
        let mut step_losses = Vec::new();
        let batches: Vec<(Vec<&Example>, Vec<&Example>)> = match plan.td {
            TdSchedule::Standard(examples) => {
                let mut order: Vec<usize> = (0..examples.len()).collect();
                order.shuffle(&mut rng);
                order
                    .chunks(hyper.batch_size.max(1))
                    .map(|c| (c.iter().map(|&i| &examples[i]).collect(), Vec::new()))
                    .collect()
            }
            TdSchedule::Mixed { source, target_pool } => mixed_batches(source, target_pool, hyper, &mut rng),
        };
        for (src, tgt) in batches {
            let (n_source, n_target) = (src.len(), tgt.len());
            let parts = if tgt.is_empty() {
                td_parts(design, src, 1.0)
            } else {
                let mut p = td_parts(design, src, 0.5);
                p.extend(td_parts(design, tgt, 0.5));
                p
            };
            let mut out = model.loss_and_grad(&parts)?;
            for (part, &l) in parts.iter().zip(&out.part_losses) {
                match part.task {
                    Task::Td => td_losses.push(l),
                    Task::Rd => rd_losses.push(l),
                }
            }
            step_losses.push(out.loss);
            let (pre, post, lr) = opt.apply(&mut model, &mut out.grads, epoch);
            steps.push(StepRecord {
                epoch,
                kind: StepKind::Td,
                loss: out.loss,
                part_losses: out.part_losses,
                n_source,
                n_target,
                pre_clip_norm: pre,
                post_clip_norm: post,
                lr,
            });
        }

        let (split, monitor) = match plan.selection {
            Selection::Argmax(v) => ("valid", Some(v)),
            Selection::FinalEpoch(m) => ("valid", m),
        };
        let eval = monitor.map(|m| evaluate(&model, m)).transpose()?;
        let f1 = eval.map_or(0.0, |e| e.f1);
        metrics.push(MetricRecord {
            epoch,
            split: String::from(split),
            precision: eval.map_or(0.0, |e| e.precision),
            recall: eval.map_or(0.0, |e| e.recall),
            f1,
            train_loss: mean(&step_losses).unwrap_or(0.0),
            td_loss: mean(&td_losses).unwrap_or(0.0),
            rd_loss: mean(&rd_losses),
            mlm_loss: mean(&mlm_losses),
            lr: opt.schedule.lr_at(epoch),
        });
        let replace = match (&plan.selection, &best) {
            (Selection::FinalEpoch(_), _) | (_, None) => true,
            (Selection::Argmax(_), Some((_, best_f1, _))) => f1 > *best_f1,
        };
        if replace {
            best = Some((epoch, f1, model.clone()));
        }
    }

    let (model, selected_epoch, selection_f1) = match best {
        Some((epoch, f1, snapshot)) => {
            let f1 = match plan.selection {
                Selection::Argmax(_) | Selection::FinalEpoch(Some(_)) => Some(f1),
                Selection::FinalEpoch(None) => None,
            };
            (snapshot, Some(epoch), f1)
        }
        None => (model, None, None),
    };
    Ok(TrainOutcome { model, selected_epoch, selection_f1, metrics, steps, mlm_skipped })
}

/// Builds one epoch of mixed batches.
///
/// Source items are shuffled and cut into `source_per_batch` chunks; the last
/// chunk wraps around to the start of the shuffled order so every batch has
/// the full source share. Target items are the whole pool when it holds
/// exactly `target_per_batch` sentences, otherwise a fresh sample without
/// replacement for every batch.
pub fn mixed_batches<'e>(
    source: &'e [Example],
    target_pool: &'e [Example],
    hyper: &Hyperparams,
    rng: &mut rng::Rng,
) -> Vec<(Vec<&'e Example>, Vec<&'e Example>)> {
    let per = hyper.source_per_batch.max(1);
    let mut order: Vec<usize> = (0..source.len()).collect();
    order.shuffle(rng);
    let n_steps = source.len().div_ceil(per);
    (0..n_steps)
        .map(|s| {
            let src = (0..per).map(|k| &source[order[(s * per + k) % source.len()]]).collect();
            let tgt = if target_pool.len() == hyper.target_per_batch {
                target_pool.iter().collect()
            } else {
                index::sample(rng, target_pool.len(), hyper.target_per_batch)
                    .into_iter()
                    .map(|i| &target_pool[i])
                    .collect()
            };
            (src, tgt)
        })
        .collect()
}

fn nonempty(examples: &[Example], what: &'static str) -> Result<(), RegimeError> {
    if examples.is_empty() {
        Err(RegimeError::EmptySplit(what))
    } else {
        Ok(())
    }
}

fn check_design(model: &ModelBundle, design: Design) -> Result<(), RegimeError> {
    if model.design != design {
        return Err(RegimeError::DesignMismatch { expected: design, found: model.design });
    }
    Ok(())
}

/// Source-domain TD training with selection on source valid F1. With
/// `mlm_target`, every epoch starts with an MLM pass over target sentences.
pub fn train_on_source(
    model: ModelBundle,
    hyper: &Hyperparams,
    source_train: &[Example],
    source_valid: &[Example],
    mlm_target: Option<&[Example]>,
    seed: u64,
) -> Result<TrainOutcome, RegimeError> {
    nonempty(source_train, "source train")?;
    nonempty(source_valid, "source valid")?;
    let mut plan = TrainPlan::new(hyper, TdSchedule::Standard(source_train), Selection::Argmax(source_valid), seed);
    if let Some(target) = mlm_target {
        plan = alternate_with_mlm(plan, target)?;
    }
    train(model, &plan)
}

/// Few-shot fine-tuning of a base model on target examples only.
pub fn in_domain_training(
    model: ModelBundle,
    hyper: &Hyperparams,
    fewshot: &[Example],
    target_valid: &[Example],
    mlm_target: Option<&[Example]>,
    seed: u64,
) -> Result<TrainOutcome, RegimeError> {
    nonempty(fewshot, "few-shot")?;
    let selection = Selection::for_few_shot(fewshot.len(), target_valid, hyper);
    let mut plan = TrainPlan::new(hyper, TdSchedule::Standard(fewshot), selection, seed);
    if let Some(target) = mlm_target {
        plan = alternate_with_mlm(plan, target)?;
    }
    train(model, &plan)
}

#[allow(clippy::too_many_arguments)]
fn joint(
    model: ModelBundle,
    regime: Regime,
    hyper: &Hyperparams,
    source_train: &[Example],
    fewshot: &[Example],
    target_valid: &[Example],
    mlm_target: Option<&[Example]>,
    seed: u64,
) -> Result<TrainOutcome, RegimeError> {
    nonempty(source_train, "source train")?;
    if fewshot.len() < hyper.target_per_batch {
        return Err(RegimeError::TooFewShots { regime, shots: fewshot.len(), min: hyper.target_per_batch });
    }
    let selection = Selection::for_few_shot(fewshot.len(), target_valid, hyper);
    let mut plan = TrainPlan::new(
        hyper,
        TdSchedule::Mixed { source: source_train, target_pool: fewshot },
        selection,
        seed,
    );
    if let Some(target) = mlm_target {
        plan = alternate_with_mlm(plan, target)?;
    }
    train(model, &plan)
}

/// Mixed-batch training from base weights.
pub fn joint_training(
    model: ModelBundle,
    hyper: &Hyperparams,
    source_train: &[Example],
    fewshot: &[Example],
    target_valid: &[Example],
    mlm_target: Option<&[Example]>,
    seed: u64,
) -> Result<TrainOutcome, RegimeError> {
    joint(model, Regime::JointTraining, hyper, source_train, fewshot, target_valid, mlm_target, seed)
}

/// Mixed-batch training starting from a source-trained checkpoint.
#[allow(clippy::too_many_arguments)]
pub fn joint_transfer(
    source_model: &ModelBundle,
    design: Design,
    hyper: &Hyperparams,
    source_train: &[Example],
    fewshot: &[Example],
    target_valid: &[Example],
    mlm_target: Option<&[Example]>,
    seed: u64,
) -> Result<TrainOutcome, RegimeError> {
    check_design(source_model, design)?;
    joint(source_model.clone(), Regime::JointTransfer, hyper, source_train, fewshot, target_valid, mlm_target, seed)
}

/// Fine-tunes a source-trained checkpoint on the whole few-shot set.
pub fn sequential_transfer(
    source_model: &ModelBundle,
    design: Design,
    hyper: &Hyperparams,
    fewshot: &[Example],
    target_valid: &[Example],
    seed: u64,
) -> Result<TrainOutcome, RegimeError> {
    check_design(source_model, design)?;
    nonempty(fewshot, "few-shot")?;
    let selection = Selection::for_few_shot(fewshot.len(), target_valid, hyper);
    let plan = TrainPlan::new(hyper, TdSchedule::Standard(fewshot), selection, seed);
    train(source_model.clone(), &plan)
}

/// Scores a source-trained model on target data without target training.
pub fn zero_shot_eval(source_model: &ModelBundle, target_test: &[Example]) -> Result<EvalResult, RegimeError> {
    if source_model.design == Design::Implicit {
        require_relations(Design::Implicit, target_test)?;
    }
    evaluate(source_model, target_test)
}

/// Starting model for a regime: base weights for in-domain and joint
/// training (implicit dimension fixed per regime), the source checkpoint
/// otherwise.
pub fn initial_model(config: &RegimeConfig, source: Option<&ModelBundle>) -> Result<ModelBundle, RegimeError> {
    if config.regime.needs_source_checkpoint() {
        let source = source.ok_or(RegimeError::EmptySplit("source checkpoint"))?;
        check_design(source, config.design)?;
        return Ok(source.clone());
    }
    let dim = match config.regime {
        Regime::InDomain => config.hyper.implicit_dim_in_domain,
        _ => config.hyper.implicit_dim_joint,
    };
    Ok(ModelBundle::new(config.design, &config.model, dim, config.mlm, config.seed))
}

impl ModelBundle {
    fn encoder_vocab(&self) -> usize {
        use crate::model::Encoder;
        self.encoder.vocab_size()
    }
}

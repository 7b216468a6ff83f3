use std::collections::BTreeSet;

use relbridge_core::corpus::{Corpus, Split};
use relbridge_core::experiment::{aggregate, run_matrix, Cell, MatrixSpec, MemoryStore, Protocol, RecordStore, Runner, SourceKey};
use relbridge_core::model::{Design, Example, ModelBundle, ModelConfig};
use relbridge_core::regimes::{
    self, alternate_with_mlm, evaluate, in_domain_training, initial_model, joint_training, sequential_transfer, train,
    zero_shot_eval, Hyperparams, Regime, RegimeConfig, Selection, StepKind, TdSchedule, TrainPlan,
};
use relbridge_core::synth::{generate_pair, SynthConfig, SynthPair};

fn pair() -> SynthPair {
    generate_pair(&SynthConfig { n_train: 240, n_valid: 60, n_test: 80, ..SynthConfig::default() }).unwrap()
}

fn model_cfg() -> ModelConfig {
    ModelConfig { hidden_size: 8, ..ModelConfig::default() }
}

fn hyper(epochs: usize) -> Hyperparams {
    Hyperparams { epochs, lr: 1e-2, lr_rel_embed: 1e-2, implicit_dim_source: Some(10), ..Hyperparams::default() }
}

fn examples(c: &Corpus, split: Split) -> Vec<Example> {
    let tok = model_cfg().tokenizer();
    c.split(split).map(|s| Example::from_sentence(s, &tok)).collect()
}

#[test]
fn mlm_precedes_td_in_every_epoch() {
    let p = pair();
    let train_ex = examples(&p.target, Split::Train);
    let valid = examples(&p.target, Split::Valid);
    let h = hyper(3);
    let model = ModelBundle::new(Design::Vanilla, &model_cfg(), 10, true, 0);
    let out = in_domain_training(model, &h, &train_ex[..50], &valid, Some(&train_ex), 1).unwrap();
    for epoch in 0..3 {
        let kinds: Vec<StepKind> = out.steps.iter().filter(|s| s.epoch == epoch).map(|s| s.kind).collect();
        let first_td = kinds.iter().position(|k| *k == StepKind::Td).unwrap();
        assert!(first_td > 0);
        assert!(kinds[..first_td].iter().all(|k| *k == StepKind::Mlm));
        assert!(kinds[first_td..].iter().all(|k| *k == StepKind::Td));
    }
    // epochs are contiguous in the step log
    assert!(out.steps.windows(2).all(|w| w[0].epoch <= w[1].epoch));
}

#[test]
fn mlm_off_is_the_plain_regime() {
    let p = pair();
    let train_ex = examples(&p.target, Split::Train);
    let valid = examples(&p.target, Split::Valid);
    let h = hyper(2);
    let plain = ModelBundle::new(Design::Explicit, &model_cfg(), 10, false, 3);
    let with_head = ModelBundle::new(Design::Explicit, &model_cfg(), 10, true, 3);
    let a = in_domain_training(plain, &h, &train_ex[..60], &valid, None, 9).unwrap();
    let b = in_domain_training(with_head, &h, &train_ex[..60], &valid, None, 9).unwrap();
    assert_eq!(a.steps, b.steps);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.model.td_head, b.model.td_head);
    assert_eq!(a.model.encoder, b.model.encoder);
}

#[test]
fn mlm_changes_hash_not_log_schema() {
    let p = pair();
    let mut runner = Runner::new(&p.source, &p.target, "minie", 0, hyper(1), model_cfg());
    let plain = Cell { regime: Some(Regime::InDomain), design: Design::Vanilla, shots: 10, seed: 0, sample_index: Some(0), mlm: false };
    let mlm = Cell { mlm: true, ..plain.clone() };
    assert_ne!(runner.run_config(&plain).hash(), runner.run_config(&mlm).hash());
    runner.ensure_sources(&[plain.clone(), mlm.clone()]).unwrap();
    let keys = |c: &Cell| -> Vec<BTreeSet<String>> {
        runner
            .run_cell(c)
            .unwrap()
            .metrics
            .iter()
            .map(|m| serde_json::to_value(m).unwrap().as_object().unwrap().keys().cloned().collect())
            .collect()
    };
    assert_eq!(keys(&plain), keys(&mlm));
}

#[test]
fn same_seed_same_log() {
    let p = pair();
    let run = || {
        let mut runner = Runner::new(&p.source, &p.target, "minie", 4, hyper(2), model_cfg());
        let cell = Cell { regime: Some(Regime::SequentialTransfer), design: Design::Implicit, shots: 10, seed: 1, sample_index: Some(2), mlm: false };
        runner.ensure_sources(std::slice::from_ref(&cell)).unwrap();
        let out = runner.run_cell(&cell).unwrap();
        serde_json::to_string(&(out.metrics, out.record)).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn lr_schedule_and_clipping() {
    let p = pair();
    let source = examples(&p.source, Split::Train);
    let valid = examples(&p.source, Split::Valid);
    let h = Hyperparams { epochs: 6, lr: 1e-5, ..Hyperparams::default() };
    let model = ModelBundle::new(Design::Explicit, &model_cfg(), 10, false, 0);
    let out = regimes::train_on_source(model, &h, &source, &valid, None, 0).unwrap();
    let mut decay = 1.0;
    for (k, m) in out.metrics.iter().enumerate() {
        let expect = 1e-5 * decay;
        assert_eq!(m.lr, expect, "epoch {k}");
        for s in out.steps.iter().filter(|s| s.epoch == k) {
            assert_eq!(s.lr, expect);
        }
        decay *= 0.99;
    }
    assert!(out.steps.iter().all(|s| s.post_clip_norm <= 1.0 + 1e-6));

    // a large step size drives gradient norms above the threshold
    let h = Hyperparams { epochs: 3, lr: 0.3, ..Hyperparams::default() };
    let model = ModelBundle::new(Design::Explicit, &model_cfg(), 10, false, 0);
    let out = regimes::train_on_source(model, &h, &source, &valid, None, 0).unwrap();
    assert!(out.steps.iter().any(|s| s.pre_clip_norm > 1.0), "clipping was never exercised");
    assert!(out.steps.iter().all(|s| s.post_clip_norm <= 1.0 + 1e-6));
}

#[test]
fn argmax_selection_audit() {
    let p = pair();
    let fewshot = examples(&p.target, Split::Train);
    let valid = examples(&p.target, Split::Valid);
    let h = hyper(6);
    let model = ModelBundle::new(Design::Vanilla, &model_cfg(), 10, false, 2);
    let out = in_domain_training(model, &h, &fewshot[..60], &valid, None, 5).unwrap();
    let f1s: Vec<f64> = out.metrics.iter().map(|m| m.f1).collect();
    let best = f1s.iter().cloned().fold(f64::MIN, f64::max);
    let first = f1s.iter().position(|f| *f == best).unwrap();
    assert_eq!(out.selected_epoch, Some(first));
    assert_eq!(out.selection_f1, Some(best));
    assert_eq!(evaluate(&out.model, &valid).unwrap().f1, best);
}

#[test]
fn few_shot_selection_rule() {
    let h = Hyperparams::default();
    let valid = examples(&pair().target, Split::Valid);
    assert!(matches!(Selection::for_few_shot(50, &valid, &h), Selection::Argmax(_)));
    assert!(matches!(Selection::for_few_shot(49, &valid, &h), Selection::FinalEpoch(Some(_))));
    assert!(matches!(Selection::for_few_shot(50, &[], &h), Selection::FinalEpoch(None)));
}

#[test]
fn fifty_shots_beat_all_o() {
    let p = pair();
    let fewshot = examples(&p.target, Split::Train);
    let valid = examples(&p.target, Split::Valid);
    let test = examples(&p.target, Split::Test);
    let model = ModelBundle::new(Design::Vanilla, &model_cfg(), 10, false, 0);
    let out = in_domain_training(model, &hyper(10), &fewshot[..50], &valid, None, 0).unwrap();
    assert!(evaluate(&out.model, &test).unwrap().f1 > 0.0);
}

#[test]
fn transfer_starts_from_checkpoint_and_zero_epochs_is_zero_shot() {
    let p = pair();
    let src_train = examples(&p.source, Split::Train);
    let src_valid = examples(&p.source, Split::Valid);
    let fewshot = examples(&p.target, Split::Train);
    let valid = examples(&p.target, Split::Valid);
    let test = examples(&p.target, Split::Test);
    for design in Design::ALL {
        let base = ModelBundle::new(design, &model_cfg(), 10, false, 0);
        let src = regimes::train_on_source(base, &hyper(2), &src_train, &src_valid, None, 0).unwrap().model;
        let rc = RegimeConfig {
            regime: Regime::SequentialTransfer,
            design,
            mlm: false,
            shots: 10,
            seed: 0,
            sample_index: 0,
            hyper: hyper(0),
            model: model_cfg(),
        };
        let start = initial_model(&rc, Some(&src)).unwrap();
        assert_eq!(start, src);
        let out = sequential_transfer(&start, design, &hyper(0), &fewshot[..10], &valid, 0).unwrap();
        assert_eq!(out.model, src);
        assert_eq!(evaluate(&out.model, &test).unwrap(), zero_shot_eval(&src, &test).unwrap());
    }
}

#[test]
fn joint_batches_and_step_losses() {
    let p = pair();
    let source = examples(&p.source, Split::Train);
    let target = examples(&p.target, Split::Train);
    let valid = examples(&p.target, Split::Valid);
    for design in Design::ALL {
        let h = hyper(2);
        let model = ModelBundle::new(design, &model_cfg(), 300, false, 0);
        let out = joint_training(model, &h, &source, &target[..5], &valid, None, 0).unwrap();
        let td: Vec<_> = out.steps.iter().filter(|s| s.kind == StepKind::Td).collect();
        assert_eq!(td.len(), 2 * source.len().div_ceil(27));
        for s in td {
            assert_eq!((s.n_source, s.n_target), (27, 5));
            let mean = s.part_losses.iter().sum::<f64>() / s.part_losses.len() as f64;
            assert!((s.loss - mean).abs() < 1e-6, "{design}: {} vs {mean}", s.loss);
            assert_eq!(s.part_losses.len(), if design == Design::Explicit { 4 } else { 2 });
        }
    }
    // with the pool exactly five, each batch's target items are that pool
    let h = hyper(1);
    let mut rng = relbridge_core::rng::seeded(0);
    let pool = &target[..5];
    for (src, tgt) in regimes::mixed_batches(&source, pool, &h, &mut rng) {
        assert_eq!(src.len(), 27);
        let ids: BTreeSet<&str> = tgt.iter().map(|e| e.sentence_id.as_str()).collect();
        assert_eq!(ids, pool.iter().map(|e| e.sentence_id.as_str()).collect());
    }
    // larger pools sample five distinct items per batch
    for (_, tgt) in regimes::mixed_batches(&source, &target[..50], &h, &mut rng) {
        let ids: BTreeSet<&str> = tgt.iter().map(|e| e.sentence_id.as_str()).collect();
        assert_eq!(ids.len(), 5);
    }
}

#[test]
fn explicit_loss_is_td_rd_average() {
    let p = pair();
    let fewshot = examples(&p.target, Split::Train);
    let valid = examples(&p.target, Split::Valid);
    let model = ModelBundle::new(Design::Explicit, &model_cfg(), 10, false, 0);
    let out = in_domain_training(model, &hyper(1), &fewshot[..64], &valid, None, 0).unwrap();
    for s in &out.steps {
        assert_eq!(s.part_losses.len(), 2);
        assert!((s.loss - (s.part_losses[0] + s.part_losses[1]) / 2.0).abs() < 1e-6);
    }
    let m = &out.metrics[0];
    assert!(m.rd_loss.is_some());
}

#[test]
fn grid_best_is_best_in_log_and_reproduces() {
    let p = pair();
    let h = Hyperparams { implicit_dim_source: None, ..hyper(1) };
    let runner = Runner::new(&p.source, &p.target, "minie", 0, h, model_cfg());
    let src = runner.train_source(SourceKey { design: Design::Implicit, seed: 0, mlm: false }).unwrap();
    let grid = src.grid.as_ref().unwrap();
    assert_eq!(grid.log.len(), 12);
    assert!(grid.log.iter().all(|e| grid.best.valid_f1 >= e.valid_f1));
    assert_eq!(src.model.rel_embed.as_ref().unwrap().dim, grid.best.dim);
    assert_eq!(src.lr_rel_embed, grid.best.lr_rel_embed);
    let f1 = evaluate(&src.model, runner.source_valid()).unwrap().f1;
    assert_eq!(Some(f1), src.valid_f1);
    assert_eq!(f1, grid.best.valid_f1);
}

#[test]
fn plan_with_mlm_needs_target() {
    let h = hyper(1);
    let ex: Vec<Example> = Vec::new();
    let plan = TrainPlan::new(&h, TdSchedule::Standard(&ex), Selection::FinalEpoch(None), 0);
    assert!(alternate_with_mlm(plan, &ex).is_err());
    let model = ModelBundle::new(Design::Vanilla, &model_cfg(), 10, false, 0);
    let plan = TrainPlan::new(&h, TdSchedule::Standard(&ex), Selection::FinalEpoch(None), 0);
    assert!(train(model, &plan).is_ok());
}

#[test]
fn matrix_resumes_without_duplicates() {
    let p = pair();
    let spec = MatrixSpec {
        designs: vec![Design::Vanilla, Design::Explicit],
        regimes: vec![Regime::InDomain, Regime::SequentialTransfer],
        shots: vec![0, 5, 10],
        seeds: vec![0],
        n_samples: 2,
        mlm: false,
    };
    let cells = spec.cells();
    // 2 designs × (1 zero-shot + 2 regimes × 2 shot levels × 2 samples)
    assert_eq!(cells.len(), 2 * (1 + 2 * 2 * 2));

    let mut runner = Runner::new(&p.source, &p.target, "minie", 0, hyper(1), model_cfg());
    let mut store = MemoryStore::default();
    let first = run_matrix(&mut runner, &spec, &mut store).unwrap();
    assert_eq!(first.len(), cells.len());
    // simulate an interruption by dropping the last few records
    store.records.truncate(cells.len() - 3);
    let mut runner = Runner::new(&p.source, &p.target, "minie", 0, hyper(1), model_cfg());
    let second = run_matrix(&mut runner, &spec, &mut store).unwrap();
    assert_eq!(second.len(), 3);
    let hashes: BTreeSet<String> = store.completed().unwrap();
    assert_eq!(hashes.len(), store.records.len());
    assert_eq!(store.records.len(), cells.len());
    // resumed records equal the uninterrupted ones
    for r in &second {
        assert!(first.contains(r));
    }
    let agg = aggregate(&store.records, Protocol { n_seeds: 1, n_samples: 2 }).unwrap();
    assert_eq!(agg.rows.len(), 1 + 2 * 2);
    assert!(agg.rows.iter().all(|(_, cells)| cells.iter().all(|c| c.as_ref().is_some_and(|c| !c.partial))));
}

#[test]
fn protocol_cell_count() {
    let spec = MatrixSpec {
        designs: vec![Design::Vanilla],
        regimes: vec![Regime::SequentialTransfer],
        shots: vec![0, 5, 10, 50, 100, 250, 500],
        ..MatrixSpec::default()
    };
    assert_eq!(spec.cells().len(), 6 * 3 * 5 + 3);
}

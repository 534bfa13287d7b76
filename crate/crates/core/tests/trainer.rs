use fingerspell::datakit::{heldout_styles, make_splits, make_unlabeled_pool, Dataset, DatasetSpec, Example, Protocol};
use fingerspell::evalcli::Checkpoint;
use fingerspell::numcore::SeedTree;
use fingerspell::trainer::{adapt, pretrain_unlabeled, train_labeled, train_labeled_with, Control, StopReason, TrainConfig};
use fingerspell::{Error, FeatureMode, Model, ModelConfig};

fn small(mode: FeatureMode) -> TrainConfig {
    let mut cfg = TrainConfig::new(ModelConfig {
        mlp_hidden: 16,
        latent_dim: 8,
        lstm_hidden: 16,
        embed_dim: 8,
        attention_dim: 16,
        ..ModelConfig::compact(mode)
    });
    cfg.max_epochs = 3;
    cfg.learning_rate = 3e-3;
    cfg
}

fn corpus() -> Dataset {
    Dataset::generate(&DatasetSpec::synthetic(3, 10, 2, 4).unwrap()).unwrap()
}

fn examples(d: &Dataset, ids: &[usize]) -> Vec<Example> {
    d.examples(ids).unwrap()
}

fn model(cfg: &TrainConfig) -> Model {
    Model::new(cfg.model.clone(), SeedTree::new(cfg.seed)).unwrap()
}

#[test]
fn learning_rate_trace_decays_by_exact_factor() {
    let d = corpus();
    let mut cfg = small(FeatureMode::Mlp);
    cfg.patience = 1;
    cfg.max_epochs = 8;
    cfg.learning_rate = 1e-6;
    cfg.lr_floor = 0.0;
    let train = examples(&d, &[0, 1, 2, 3]);
    let val = examples(&d, &[20, 21]);
    let mut m = model(&cfg);
    let report = train_labeled(&mut m, &train, &val, &cfg).unwrap();
    assert_eq!(report.epochs.len(), 8);
    let trace: Vec<f64> = report.epochs.iter().map(|e| e.learning_rate).collect();
    let mut drops = 0;
    for w in trace.windows(2) {
        assert!(w[1] <= w[0]);
        if w[1] < w[0] {
            assert_eq!(w[1], w[0] * 0.9);
            drops += 1;
        }
    }
    assert!(drops > 0, "tiny learning rate should plateau: {trace:?}");
    assert_eq!(report.to_jsonl().lines().count(), 8);
}

#[test]
fn stops_below_learning_rate_floor() {
    let d = corpus();
    let mut cfg = small(FeatureMode::Mlp);
    cfg.patience = 1;
    cfg.max_epochs = 50;
    cfg.learning_rate = 1e-6;
    cfg.lr_floor = 0.85e-6;
    let mut m = model(&cfg);
    let report = train_labeled(&mut m, &examples(&d, &[0, 1]), &examples(&d, &[20]), &cfg).unwrap();
    assert_eq!(report.stop, StopReason::LearningRateFloor);
    assert!(report.epochs.len() < 50);
}

#[test]
fn callback_can_stop_training() {
    let d = corpus();
    let cfg = small(FeatureMode::Ae);
    let mut m = model(&cfg);
    let report = train_labeled_with(&mut m, &examples(&d, &[0, 1]), &[], &cfg, |_, r| {
        if r.epoch == 1 {
            Control::Stop
        } else {
            Control::Continue
        }
    })
    .unwrap();
    assert_eq!(report.epochs.len(), 2);
    assert_eq!(report.stop, StopReason::Requested);
    assert!(report.epochs.iter().all(|e| e.validation_accuracy.is_none()));
}

#[test]
fn zero_weight_never_evaluates_auto_encoder_loss() {
    let d = corpus();
    let train = examples(&d, &[0, 1, 2]);
    let cfg = small(FeatureMode::Mlp);
    let report = train_labeled(&mut model(&cfg), &train, &[], &cfg).unwrap();
    assert_eq!(report.ae_evaluations, 0);
    let mut cfg = small(FeatureMode::Vae);
    cfg.lambda_ae = 0.0;
    let report = train_labeled(&mut model(&cfg), &train, &[], &cfg).unwrap();
    assert_eq!(report.ae_evaluations, 0);
    let cfg = small(FeatureMode::Vae);
    let report = train_labeled(&mut model(&cfg), &train, &[], &cfg).unwrap();
    assert_eq!(report.ae_evaluations, 9);
}

#[test]
fn invalid_runs_rejected() {
    let d = corpus();
    let cfg = small(FeatureMode::Ae);
    assert!(matches!(train_labeled(&mut model(&cfg), &[], &[], &cfg), Err(Error::Data(_))));
    for bad in [
        TrainConfig { decay: 1.0, ..cfg.clone() },
        TrainConfig { decay: 0.0, ..cfg.clone() },
        TrainConfig { patience: 0, ..cfg.clone() },
        TrainConfig { lambda_ae: -1.0, ..cfg.clone() },
        TrainConfig { lambda_ae: 1.0, ..small(FeatureMode::Mlp) },
    ] {
        let mut m = Model::new(bad.model.clone(), SeedTree::new(0)).unwrap();
        assert!(matches!(train_labeled(&mut m, &examples(&d, &[0]), &[], &bad), Err(Error::Config(_))));
    }
    let other = small(FeatureMode::Dae);
    assert!(matches!(
        train_labeled(&mut model(&other), &examples(&d, &[0]), &[], &cfg),
        Err(Error::ArchitectureMismatch(_))
    ));
}

#[test]
fn training_is_deterministic() {
    let d = corpus();
    let train = examples(&d, &[0, 1, 2, 3, 4]);
    let val = examples(&d, &[20, 21]);
    let cfg = small(FeatureMode::Dae);
    let (mut a, mut b) = (model(&cfg), model(&cfg));
    let ra = train_labeled(&mut a, &train, &val, &cfg).unwrap();
    let rb = train_labeled(&mut b, &train, &val, &cfg).unwrap();
    assert_eq!(a.params(), b.params());
    let losses = |r: &fingerspell::trainer::TrainReport| r.epochs.iter().map(|e| e.loss).collect::<Vec<_>>();
    assert_eq!(losses(&ra), losses(&rb));
}

#[test]
fn pretraining_leaves_sequence_model_untouched() {
    let cfg = TrainConfig {
        pretrain_epochs: 2,
        ..small(FeatureMode::Vae)
    };
    let pool = make_unlabeled_pool(64, &heldout_styles(2, 1), 1).unwrap();
    let mut m = model(&cfg);
    let before = m.clone();
    let report = pretrain_unlabeled(&mut m, &pool, &cfg).unwrap();
    assert_eq!(report.epochs.len(), 2);
    for id in m.sequence_param_ids() {
        assert_eq!(m.params().get(id), before.params().get(id), "{}", m.params().name(id));
    }
    assert_ne!(m.params(), before.params());
}

#[test]
fn pretraining_reduces_loss_and_is_deterministic() {
    let cfg = TrainConfig {
        pretrain_epochs: 10,
        pretrain_batch: 50,
        ..small(FeatureMode::Ae)
    };
    let pool = make_unlabeled_pool(500, &heldout_styles(4, 2), 2).unwrap();
    let (mut a, mut b) = (model(&cfg), model(&cfg));
    let report = pretrain_unlabeled(&mut a, &pool, &cfg).unwrap();
    pretrain_unlabeled(&mut b, &pool, &cfg).unwrap();
    assert!(report.epochs.last().unwrap().loss < report.epochs[0].loss);
    assert_eq!(a.params(), b.params());
}

#[test]
fn pretraining_needs_an_auto_encoder_and_a_pool() {
    let cfg = small(FeatureMode::Mlp);
    let pool = make_unlabeled_pool(4, &heldout_styles(1, 1), 1).unwrap();
    assert!(matches!(pretrain_unlabeled(&mut model(&cfg), &pool, &cfg), Err(Error::Config(_))));
    let cfg = small(FeatureMode::Ae);
    assert!(matches!(pretrain_unlabeled(&mut model(&cfg), &[], &cfg), Err(Error::Data(_))));
    assert!(pretrain_unlabeled(&mut model(&cfg), &[vec![0.0; 7]], &cfg).is_err());
}

#[test]
fn adaptation_reads_only_the_target_signer() {
    let d = corpus();
    let cfg = small(FeatureMode::Ae);
    let si = make_splits(&d, Protocol::Si { target: 2 }, 1).unwrap();
    let mut base = model(&cfg);
    train_labeled(&mut base, &examples(&d, &si.train[..6]), &[], &cfg).unwrap();
    let sa = make_splits(&d, Protocol::Sa { target: 2 }, 1).unwrap();
    let (adapted, report) = adapt(
        Checkpoint::from_model(&base, Default::default()),
        &examples(&d, &sa.adaptation),
        &examples(&d, &sa.validation),
        &cfg,
    )
    .unwrap();
    assert_eq!(report.signers_seen.iter().copied().collect::<Vec<_>>(), vec![2]);
    assert_ne!(adapted.params(), base.params());
}

#[test]
fn zero_epoch_adaptation_is_identity() {
    let d = corpus();
    let cfg = small(FeatureMode::Vae);
    let base = model(&cfg);
    let zero = TrainConfig { max_epochs: 0, ..cfg.clone() };
    let (adapted, report) = adapt(
        Checkpoint::from_model(&base, Default::default()),
        &examples(&d, &[0]),
        &[],
        &zero,
    )
    .unwrap();
    assert!(report.epochs.is_empty());
    assert_eq!(adapted.params(), base.params());
}

#[test]
fn adaptation_rejects_mismatched_checkpoint() {
    let d = corpus();
    let base = model(&small(FeatureMode::Vae));
    let cfg = TrainConfig {
        model: ModelConfig { lstm_hidden: 12, ..small(FeatureMode::Vae).model },
        ..small(FeatureMode::Vae)
    };
    let err = adapt(Checkpoint::from_model(&base, Default::default()), &examples(&d, &[0]), &[], &cfg);
    assert!(matches!(err, Err(Error::ArchitectureMismatch(_))));
}

//! Training loops: auto-encoder pretraining on unlabeled frames, labeled
//! training on the joint objective and warm-started adaptation.
//!
//! Every run is a deterministic function of its configuration, seeds and
//! data. Per-example forward passes draw their dropout, corruption and
//! sampling noise from a seed derived from `(epoch, example id)`, and batch
//! gradients are summed in batch order.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::datakit::Example;
use crate::decode::greedy_decode;
use crate::error::{Error, Result};
use crate::evalcli::checkpoint::Checkpoint;
use crate::evalcli::metrics::edit_distance;
use crate::features::{features_forward, Pass};
use crate::model::{FeatureMode, Model, ModelConfig};
use crate::numcore::{adam_step, AdamConfig, AdamState, Gradients, SeedTree, Tape, Tensor};
use crate::seq2seq::loss_and_grads;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Architecture, feature mode and dropout retain probability.
    pub model: ModelConfig,
    pub lambda_ae: f64,
    /// Word instances per labeled batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning-rate factor applied on a validation plateau.
    pub decay: f64,
    /// Epochs without validation improvement before decaying.
    pub patience: usize,
    pub max_epochs: usize,
    /// Training stops once the learning rate falls below this.
    pub lr_floor: f64,
    /// Global gradient-norm bound; `0` disables clipping.
    pub clip_norm: f64,
    pub seed: u64,
    pub pretrain_epochs: usize,
    /// Frames per unlabeled batch.
    pub pretrain_batch: usize,
    /// Decoding cap used for validation.
    pub max_len: usize,
    /// Restore the best parameters on validation at the end, counting the
    /// starting point as a candidate.
    pub keep_best: bool,
}

impl TrainConfig {
    pub fn new(model: ModelConfig) -> Self {
        let lambda_ae = if model.mode.has_decoder() { 1.0 } else { 0.0 };
        TrainConfig {
            model,
            lambda_ae,
            batch_size: 8,
            learning_rate: 1e-3,
            decay: 0.9,
            patience: 3,
            max_epochs: 100,
            lr_floor: 1e-5,
            clip_norm: 5.0,
            seed: 0,
            pretrain_epochs: 20,
            pretrain_batch: 32,
            max_len: crate::decode::DEFAULT_MAX_LEN,
            keep_best: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let fail = |m: String| Err(Error::Config(m));
        if !(self.lambda_ae >= 0.0 && self.lambda_ae.is_finite()) {
            return fail(format!("lambda_ae {} must be ≥ 0", self.lambda_ae));
        }
        if self.lambda_ae > 0.0 && !self.model.mode.has_decoder() {
            return fail("mlp feature mode requires lambda_ae = 0".into());
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return fail(format!("decay {} outside (0, 1)", self.decay));
        }
        if self.patience == 0 || self.batch_size == 0 || self.pretrain_batch == 0 || self.max_len == 0 {
            return fail("patience, batch sizes and max_len must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !(self.lr_floor >= 0.0) || !(self.clip_norm >= 0.0) {
            return fail("learning rate must be positive; floor and clip non-negative".into());
        }
        Ok(())
    }
}

/// Summary of one completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub nll: Option<f64>,
    pub ae: Option<f64>,
    /// `1 - LER / 100` from greedy decoding of the validation set.
    pub validation_accuracy: Option<f64>,
    pub learning_rate: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    MaxEpochs,
    LearningRateFloor,
    Requested,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Number of auto-encoder loss evaluations (one per frame batch or word
    /// instance).
    pub ae_evaluations: u64,
    /// Signers whose examples were read.
    pub signers_seen: BTreeSet<u32>,
    /// Validation accuracy before the first update, when measured.
    pub initial_validation_accuracy: Option<f64>,
    /// Epoch whose parameters were best on validation; `None` when no
    /// epoch beat the starting point.
    pub best_epoch: Option<usize>,
    pub stop: StopReason,
}

impl TrainReport {
    fn new() -> Self {
        TrainReport {
            epochs: Vec::new(),
            ae_evaluations: 0,
            signers_seen: BTreeSet::new(),
            initial_validation_accuracy: None,
            best_epoch: None,
            stop: StopReason::MaxEpochs,
        }
    }

    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("plain data serializes") + "\n")
            .collect()
    }
}

/// Returned by an epoch callback.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

fn check_model(model: &Model, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if model.config() != &cfg.model {
        return Err(Error::ArchitectureMismatch(format!(
            "model is {} but the run is configured for {}",
            model.config().mode,
            cfg.model.mode
        )));
    }
    Ok(())
}

fn shuffled(n: usize, seed: SeedTree) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.rng());
    order
}

fn adam(model: &Model, lr: f64) -> AdamState {
    AdamState::new(
        model.params(),
        AdamConfig {
            learning_rate: lr,
            ..AdamConfig::default()
        },
    )
}

fn apply(model: &mut Model, grads: &mut Gradients, state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    if !grads.all_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    if cfg.clip_norm > 0.0 {
        grads.clip_global_norm(cfg.clip_norm);
    }
    adam_step(model.params_mut(), grads, state)
}

/// Optimizes only the auto-encoder loss over unlabeled frames for
/// `cfg.pretrain_epochs` epochs. Sequence-model parameters receive zero
/// gradients and are left bitwise unchanged.
pub fn pretrain_unlabeled(model: &mut Model, pool: &[Vec<f64>], cfg: &TrainConfig) -> Result<TrainReport> {
    check_model(model, cfg)?;
    if !cfg.model.mode.has_decoder() {
        return Err(Error::Config(
            "pretraining needs an auto-encoder loss; mlp features have none".into(),
        ));
    }
    if pool.is_empty() {
        return Err(Error::Data("unlabeled pool is empty".into()));
    }
    let dim = cfg.model.input_dim;
    if let Some(bad) = pool.iter().position(|f| f.len() != dim) {
        return Err(Error::Data(format!("pool frame {bad} does not have {dim} values")));
    }
    let seeds = SeedTree::new(cfg.seed).child("pretrain");
    let mut state = adam(model, cfg.learning_rate);
    let mut report = TrainReport::new();
    for epoch in 0..cfg.pretrain_epochs {
        let started = Instant::now();
        let order = shuffled(pool.len(), seeds.child("shuffle").index(epoch as u64));
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.pretrain_batch).enumerate() {
            let data: Vec<f64> = batch.iter().flat_map(|&i| pool[i].iter().copied()).collect();
            let frames = Tensor::new(&[batch.len(), dim], data)?;
            let pass = Pass::train(seeds.child("pass").index(epoch as u64).index(b as u64));
            let mut tape = Tape::new(model.params());
            let out = features_forward(&mut tape, model, &frames, &pass, true)?;
            let loss = out.ae_loss.expect("loss requested");
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("auto-encoder loss {value}")));
            }
            let mut grads = tape.backprop(loss)?;
            report.ae_evaluations += 1;
            total += value * batch.len() as f64;
            apply(model, &mut grads, &mut state, cfg)?;
        }
        report.epochs.push(EpochRecord {
            epoch,
            loss: total / pool.len() as f64,
            nll: None,
            ae: Some(total / pool.len() as f64),
            validation_accuracy: None,
            learning_rate: cfg.learning_rate,
            seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(report)
}

/// Letter accuracy `1 - LER / 100` of greedy decoding.
pub fn letter_accuracy(model: &Model, examples: &[Example], max_len: usize) -> Result<f64> {
    let mut edits = 0usize;
    let mut letters = 0usize;
    for ex in examples {
        let hyp = greedy_decode(model, &ex.frames, max_len)?.letters(model.vocab());
        edits += edit_distance(&hyp, &ex.letters).distance();
        letters += ex.letters.len();
    }
    if letters == 0 {
        return Err(Error::invalid("no reference letters"));
    }
    Ok(1.0 - edits as f64 / letters as f64)
}

pub fn train_labeled(
    model: &mut Model,
    train: &[Example],
    validation: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_labeled_with(model, train, validation, cfg, |_, _| Control::Continue)
}

/// Minimizes the joint objective with Adam. After every epoch the
/// validation set (when nonempty) is greedily decoded; the learning rate is
/// multiplied by `cfg.decay` after `cfg.patience` epochs without a new best
/// accuracy. Stops at `cfg.max_epochs`, when the rate drops below
/// `cfg.lr_floor`, or when `on_epoch` returns [`Control::Stop`].
pub fn train_labeled_with<F>(
    model: &mut Model,
    train: &[Example],
    validation: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    F: FnMut(&Model, &EpochRecord) -> Control,
{
    check_model(model, cfg)?;
    if train.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let seeds = SeedTree::new(cfg.seed).child("train");
    let mut report = TrainReport::new();
    report
        .signers_seen
        .extend(train.iter().chain(validation).map(|e| e.signer));
    let mut lr = cfg.learning_rate;
    let mut state = adam(model, lr);
    // The starting point competes too, so a warm start that training only
    // degrades on the validation set is kept as is.
    let mut best: Option<(f64, Option<usize>, Model)> = None;
    if cfg.keep_best && !validation.is_empty() {
        let acc = letter_accuracy(model, validation, cfg.max_len)?;
        report.initial_validation_accuracy = Some(acc);
        best = Some((acc, None, model.clone()));
    }
    let mut stale = 0usize;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let order = shuffled(train.len(), seeds.child("shuffle").index(epoch as u64));
        let (mut total, mut nll, mut ae) = (0.0, 0.0, 0.0);
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(model.params());
            // Summation order is fixed by instance id.
            let mut batch = batch.to_vec();
            batch.sort_by_key(|&i| train[i].id);
            for &i in &batch {
                let ex = &train[i];
                let pass = Pass::train(seeds.child("pass").index(epoch as u64).index(ex.id as u64));
                let e = loss_and_grads(model, model.params(), &ex.frames, &ex.letters, cfg.lambda_ae, &pass)?;
                if let Some(a) = e.ae {
                    report.ae_evaluations += 1;
                    ae += a;
                }
                total += e.total;
                nll += e.nll;
                grads.add_assign(&e.grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            apply(model, &mut grads, &mut state, cfg)?;
        }
        let n = train.len() as f64;
        let accuracy = if validation.is_empty() {
            None
        } else {
            Some(letter_accuracy(model, validation, cfg.max_len)?)
        };
        let record = EpochRecord {
            epoch,
            loss: total / n,
            nll: Some(nll / n),
            ae: (cfg.lambda_ae > 0.0).then_some(ae / n),
            validation_accuracy: accuracy,
            learning_rate: lr,
            seconds: started.elapsed().as_secs_f64(),
        };

        if let Some(acc) = accuracy {
            if best.as_ref().map_or(true, |b| acc > b.0) {
                best = Some((acc, Some(epoch), model.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    lr *= cfg.decay;
                    state.set_learning_rate(lr);
                    stale = 0;
                }
            }
        }
        let control = on_epoch(model, &record);
        report.epochs.push(record);
        if control == Control::Stop {
            report.stop = StopReason::Requested;
            break;
        }
        if lr < cfg.lr_floor {
            report.stop = StopReason::LearningRateFloor;
            break;
        }
    }
    if let Some((_, epoch, params)) = best {
        report.best_epoch = epoch;
        if cfg.keep_best {
            *model = params;
        }
    }
    Ok(report)
}

/// Warm-starts from `checkpoint` and continues labeled training on the
/// adaptation set, tuning on `tuning`. Only the given examples are read.
pub fn adapt(
    checkpoint: Checkpoint,
    adaptation: &[Example],
    tuning: &[Example],
    cfg: &TrainConfig,
) -> Result<(Model, TrainReport)> {
    let mut model = checkpoint.into_model_matching(&cfg.model)?;
    if cfg.max_epochs == 0 {
        let mut report = TrainReport::new();
        report.stop = StopReason::MaxEpochs;
        return Ok((model, report));
    }
    let report = train_labeled(&mut model, adaptation, tuning, cfg)?;
    Ok((model, report))
}

/// Whether `mode` can be pretrained on unlabeled frames.
pub fn supports_pretraining(mode: FeatureMode) -> bool {
    mode.has_decoder()
}

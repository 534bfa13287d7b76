//! LSTM sequence encoder, additive-attention letter decoder and the joint
//! training objective.
//!
//! With encoder states `h_1..h_S` and decoder hidden state `d_t`:
//!
//! ```text
//! α_t  = softmax_i(v · tanh(W_h h_i + W_d d_t))
//! d'_t = Σ_i α_it h_i
//! p(y_t | y_<t, x) = softmax(W_o [d_t; d'_t] + b_o)
//! ```
//!
//! The decoder starts from the final encoder state, is fed the previous
//! letter's embedding (the start symbol first) and is trained with teacher
//! forcing. The sequence loss is the mean negative log-likelihood over the
//! `T + 1` targets (letters plus the end symbol).

use crate::error::{Error, Result};
use crate::features::{features_forward, Pass};
use crate::model::{AttentionIds, FeatureMode, LstmIds, Model};
use crate::numcore::{Axis, ParamSet, Tape, Tensor, Var};

/// Hidden and cell vectors of an LSTM, each `[1, hidden]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub hidden: Tensor,
    pub cell: Tensor,
}

impl DecoderState {
    pub fn zeros(hidden: usize) -> Self {
        DecoderState {
            hidden: Tensor::zeros(&[1, hidden]),
            cell: Tensor::zeros(&[1, hidden]),
        }
    }
}

/// LSTM state as tape values.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub hidden: Var,
    pub cell: Var,
}

impl LstmVars {
    pub fn from_state(tape: &mut Tape, s: &DecoderState) -> Self {
        LstmVars {
            hidden: tape.constant(s.hidden.clone()),
            cell: tape.constant(s.cell.clone()),
        }
    }

    pub fn to_state(self, tape: &Tape) -> DecoderState {
        DecoderState {
            hidden: tape.value(self.hidden).clone(),
            cell: tape.value(self.cell).clone(),
        }
    }
}

/// One standard LSTM update on input `x` (`[1, in]`).
pub fn lstm_step(tape: &mut Tape, ids: &LstmIds, x: Var, prev: LstmVars) -> Result<LstmVars> {
    let hidden = tape.value(prev.hidden).cols();
    let expected_in = tape.params().get(ids.w[0]).rows();
    let given_in = tape.value(x).cols() + hidden;
    if expected_in != given_in {
        return Err(Error::shape(
            "lstm_step",
            format!("input+hidden width {given_in}, weights expect {expected_in}"),
        ));
    }
    let xh = tape.concat(&[x, prev.hidden], Axis::Cols)?;
    let i = tape.affine(xh, ids.w[0], ids.b[0])?;
    let i = tape.sigmoid(i);
    let f = tape.affine(xh, ids.w[1], ids.b[1])?;
    let f = tape.sigmoid(f);
    let o = tape.affine(xh, ids.w[2], ids.b[2])?;
    let o = tape.sigmoid(o);
    let g = tape.affine(xh, ids.w[3], ids.b[3])?;
    let g = tape.tanh(g);
    let keep = tape.mul(f, prev.cell)?;
    let write = tape.mul(i, g)?;
    let cell = tape.add(keep, write)?;
    let squashed = tape.tanh(cell);
    let hidden = tape.mul(o, squashed)?;
    Ok(LstmVars { hidden, cell })
}

/// Encoder states for one frame sequence, ready for attention.
#[derive(Debug, Clone, Copy)]
pub struct EncodedSequence {
    /// `S × hidden` stacked encoder states.
    pub states: Var,
    /// `S × attention` projection `H W_h`, shared by every decoder step.
    pub projected: Var,
    pub last: LstmVars,
    pub len: usize,
}

/// Runs the LSTM left to right over the rows of `latent` (`S × d_z`) from a
/// zero initial state.
pub fn encode_sequence(
    tape: &mut Tape,
    lstm: &LstmIds,
    attention: &AttentionIds,
    latent: Var,
) -> Result<EncodedSequence> {
    let s = tape.value(latent).rows();
    if s == 0 {
        return Err(Error::invalid("cannot encode an empty sequence"));
    }
    let hidden = tape.params().get(lstm.b[0]).cols();
    let mut state = LstmVars::from_state(tape, &DecoderState::zeros(hidden));
    let mut outs = Vec::with_capacity(s);
    for i in 0..s {
        let z = tape.lookup(latent, &[i])?;
        state = lstm_step(tape, lstm, z, state)?;
        outs.push(state.hidden);
    }
    let states = tape.concat(&outs, Axis::Rows)?;
    let w_h = tape.param(attention.w_h);
    let projected = tape.matmul(states, w_h)?;
    Ok(EncodedSequence {
        states,
        projected,
        last: state,
        len: s,
    })
}

/// Attention weights `[1, S]` and context `[1, hidden]` for decoder state
/// `d`.
pub fn attend(
    tape: &mut Tape,
    ids: &AttentionIds,
    enc: &EncodedSequence,
    d: Var,
) -> Result<(Var, Var)> {
    let w_d = tape.param(ids.w_d);
    let dd = tape.matmul(d, w_d)?;
    let e = tape.add(enc.projected, dd)?;
    let e = tape.tanh(e);
    let v = tape.param(ids.v);
    let scores = tape.matmul(e, v)?;
    let scores = tape.reshape(scores, &[1, enc.len])?;
    let alpha = tape.softmax(scores);
    let context = tape.matmul(alpha, enc.states)?;
    Ok((alpha, context))
}

/// Output of one decoder step.
#[derive(Debug, Clone, Copy)]
pub struct StepVars {
    /// `[1, |V|]` letter distribution.
    pub probs: Var,
    pub state: LstmVars,
    /// `[1, S]` attention weights.
    pub alpha: Var,
}

/// Feeds `prev_token`, advances the decoder LSTM, attends and predicts.
pub fn decoder_step(
    tape: &mut Tape,
    model: &Model,
    prev_token: usize,
    prev: LstmVars,
    enc: &EncodedSequence,
) -> Result<StepVars> {
    let vocab = model.vocab();
    if prev_token >= vocab.size() {
        return Err(Error::invalid(format!(
            "token {prev_token} outside vocabulary of {}",
            vocab.size()
        )));
    }
    let ids = model.ids();
    let table = tape.param(ids.embed);
    let emb = tape.lookup(table, &[prev_token])?;
    let state = lstm_step(tape, &ids.seq_decoder, emb, prev)?;
    let (alpha, context) = attend(tape, &ids.attention, enc, state.hidden)?;
    let joint = tape.concat(&[state.hidden, context], Axis::Cols)?;
    let logits = tape.affine(joint, ids.out_w, ids.out_b)?;
    let probs = tape.softmax(logits);
    Ok(StepVars {
        probs,
        state,
        alpha,
    })
}

/// Feature extraction plus recurrent encoding of `frames` (`S × d_x`).
pub fn encode_frames(
    tape: &mut Tape,
    model: &Model,
    frames: &Tensor,
    pass: &Pass,
    with_ae_loss: bool,
) -> Result<(EncodedSequence, Option<Var>)> {
    let feats = features_forward(tape, model, frames, pass, with_ae_loss)?;
    let ids = model.ids();
    let enc = encode_sequence(tape, &ids.seq_encoder, &ids.attention, feats.latent)?;
    Ok((enc, feats.ae_loss))
}

/// Teacher-forced decoding over `letters` followed by the end symbol.
/// Returns the mean negative log-likelihood and the per-step outputs.
fn teacher_forced(
    tape: &mut Tape,
    model: &Model,
    enc: &EncodedSequence,
    letters: &[usize],
) -> Result<(Var, Vec<StepVars>)> {
    let vocab = model.vocab();
    if letters.is_empty() {
        return Err(Error::invalid("target word is empty"));
    }
    if let Some(bad) = letters.iter().find(|&&l| !vocab.is_letter(l)) {
        return Err(Error::invalid(format!("target id {bad} is not a letter")));
    }
    let targets: Vec<usize> = letters.iter().copied().chain([vocab.end()]).collect();
    let mut prev = vocab.start();
    let mut state = enc.last;
    let mut picked = Vec::with_capacity(targets.len());
    let mut steps = Vec::with_capacity(targets.len());
    for &target in &targets {
        let step = decoder_step(tape, model, prev, state, enc)?;
        let column = tape.reshape(step.probs, &[vocab.size(), 1])?;
        let p = tape.lookup(column, &[target])?;
        picked.push(tape.log(p));
        steps.push(step);
        state = step.state;
        prev = target;
    }
    let all = tape.concat(&picked, Axis::Cols)?;
    let mean = tape.mean(all);
    let nll = tape.scale(mean, -1.0)?;
    Ok((nll, steps))
}

/// Mean negative log-likelihood of `letters` given `frames`.
pub fn sequence_nll(
    tape: &mut Tape,
    model: &Model,
    frames: &Tensor,
    letters: &[usize],
    pass: &Pass,
) -> Result<Var> {
    let (enc, _) = encode_frames(tape, model, frames, pass, false)?;
    Ok(teacher_forced(tape, model, &enc, letters)?.0)
}

/// Components of the joint objective as tape values.
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub total: Var,
    pub nll: Var,
    /// Frame-averaged auto-encoder loss; `None` when `λ_ae = 0`.
    pub ae: Option<Var>,
}

/// `sequence_nll + λ_ae · mean_frames(auto-encoder loss)`.
///
/// With `λ_ae = 0` the auto-encoder decoder is never evaluated and the
/// total is the sequence loss itself.
pub fn multitask_loss(
    tape: &mut Tape,
    model: &Model,
    frames: &Tensor,
    letters: &[usize],
    lambda_ae: f64,
    pass: &Pass,
) -> Result<LossParts> {
    if !(lambda_ae >= 0.0 && lambda_ae.is_finite()) {
        return Err(Error::invalid(format!("λ_ae must be ≥ 0, got {lambda_ae}")));
    }
    if lambda_ae > 0.0 && model.config().mode == FeatureMode::Mlp {
        return Err(Error::invalid(
            "mlp feature mode has no auto-encoder loss; use λ_ae = 0",
        ));
    }
    let with_ae = lambda_ae > 0.0;
    let (enc, ae) = encode_frames(tape, model, frames, pass, with_ae)?;
    let (nll, _) = teacher_forced(tape, model, &enc, letters)?;
    let total = match ae {
        Some(ae) => {
            let weighted = tape.scale(ae, lambda_ae)?;
            tape.add(nll, weighted)?
        }
        None => nll,
    };
    Ok(LossParts { total, nll, ae })
}

/// Scalar values and gradients of the joint objective for one example.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub total: f64,
    pub nll: f64,
    pub ae: Option<f64>,
    pub grads: crate::numcore::Gradients,
}

pub fn loss_and_grads(
    model: &Model,
    params: &ParamSet,
    frames: &Tensor,
    letters: &[usize],
    lambda_ae: f64,
    pass: &Pass,
) -> Result<LossEval> {
    debug_assert_eq!(params.len(), model.params().len());
    let mut tape = Tape::new(params);
    let parts = multitask_loss(&mut tape, model, frames, letters, lambda_ae, pass)?;
    let total = tape.value(parts.total).item();
    if !total.is_finite() {
        return Err(Error::NonFinite(format!("training loss {total}")));
    }
    let grads = tape.backprop(parts.total)?;
    Ok(LossEval {
        total,
        nll: tape.value(parts.nll).item(),
        ae: parts.ae.map(|v| tape.value(v).item()),
        grads,
    })
}

/// Per-step distributions (and attention rows) produced by the loss path
/// under teacher forcing, with dropout off.
pub fn teacher_forced_distributions(
    model: &Model,
    frames: &Tensor,
    letters: &[usize],
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let mut tape = Tape::new(model.params());
    let (enc, _) = encode_frames(&mut tape, model, frames, &Pass::eval(), false)?;
    let (_, steps) = teacher_forced(&mut tape, model, &enc, letters)?;
    Ok(steps
        .iter()
        .map(|s| {
            (
                tape.value(s.probs).data().to_vec(),
                tape.value(s.alpha).data().to_vec(),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::numcore::{adam_step, AdamConfig, AdamState, SeedTree};
    use rand::Rng;

    fn model(mode: FeatureMode, seed: u64) -> Model {
        Model::new(ModelConfig::tiny(mode), SeedTree::new(seed)).unwrap()
    }

    fn zero_all(model: &mut Model) {
        let ids: Vec<_> = model.params().ids().collect();
        for id in ids {
            model.params_mut().get_mut(id).data_mut().fill(0.0);
        }
    }

    fn set(model: &mut Model, name: &str, f: impl Fn(&mut Tensor)) {
        let id = model.params().id(name).unwrap();
        f(model.params_mut().get_mut(id));
    }

    fn frames(seed: u64, s: usize) -> Tensor {
        let mut rng = SeedTree::new(seed).rng();
        Tensor::new(&[s, 64], (0..s * 64).map(|_| rng.gen()).collect()).unwrap()
    }

    fn latent(seed: u64, s: usize) -> Tensor {
        let mut rng = SeedTree::new(seed).rng();
        Tensor::new(&[s, 4], (0..s * 4).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    #[test]
    fn lstm_all_zero_stays_zero() {
        let mut m = model(FeatureMode::Ae, 1);
        zero_all(&mut m);
        let mut tape = Tape::new(m.params());
        let prev = LstmVars::from_state(&mut tape, &DecoderState::zeros(8));
        let x = tape.constant(Tensor::zeros(&[1, 4]));
        let next = lstm_step(&mut tape, &m.ids().seq_encoder, x, prev).unwrap();
        assert_eq!(next.to_state(&tape), DecoderState::zeros(8));
    }

    #[test]
    fn lstm_hidden_bounded_and_shape_checked() {
        let m = model(FeatureMode::Ae, 2);
        let mut tape = Tape::new(m.params());
        let mut state = LstmVars::from_state(&mut tape, &DecoderState::zeros(8));
        for i in 0..20 {
            let x = tape.constant(Tensor::full(&[1, 4], 50.0 * (i as f64 - 10.0)));
            state = lstm_step(&mut tape, &m.ids().seq_encoder, x, state).unwrap();
            assert!(tape.value(state.hidden).data().iter().all(|h| h.abs() < 1.0));
        }
        let wrong = tape.constant(Tensor::zeros(&[1, 5]));
        assert!(lstm_step(&mut tape, &m.ids().seq_encoder, wrong, state).is_err());
    }

    #[test]
    fn single_frame_encoding_is_one_step() {
        let m = model(FeatureMode::Ae, 3);
        let z = latent(4, 1);
        let mut tape = Tape::new(m.params());
        let lat = tape.constant(z.clone());
        let enc = encode_sequence(&mut tape, &m.ids().seq_encoder, &m.ids().attention, lat).unwrap();
        let prev = LstmVars::from_state(&mut tape, &DecoderState::zeros(8));
        let x = tape.constant(z);
        let one = lstm_step(&mut tape, &m.ids().seq_encoder, x, prev).unwrap();
        assert_eq!(tape.value(enc.states).data(), tape.value(one.hidden).data());
        assert_eq!(enc.len, 1);
    }

    #[test]
    fn encoding_has_prefix_property() {
        let m = model(FeatureMode::Ae, 5);
        let z = latent(6, 7);
        let mut tape = Tape::new(m.params());
        let full = tape.constant(z.clone());
        let full = encode_sequence(&mut tape, &m.ids().seq_encoder, &m.ids().attention, full).unwrap();
        let full_states = tape.value(full.states).clone();
        for k in 1..7 {
            let part = tape.constant(Tensor::new(&[k, 4], z.data()[..k * 4].to_vec()).unwrap());
            let part = encode_sequence(&mut tape, &m.ids().seq_encoder, &m.ids().attention, part).unwrap();
            assert_eq!(tape.value(part.states).data(), &full_states.data()[..k * 8]);
        }
    }

    #[test]
    fn encoder_states_are_s_by_hidden() {
        let mut cfg = ModelConfig::tiny(FeatureMode::Ae);
        cfg.lstm_hidden = 128;
        let m = Model::new(cfg, SeedTree::new(7)).unwrap();
        let mut tape = Tape::new(m.params());
        let (enc, _) = encode_frames(&mut tape, &m, &frames(8, 7), &Pass::eval(), false).unwrap();
        assert_eq!(tape.value(enc.states).shape(), &[7, 128]);
        // An empty sequence cannot even be built.
        assert!(Tensor::new(&[0, 64], vec![]).is_err());
    }

    /// Hand-built encoder output with `projected` chosen freely.
    fn fake_encoding(tape: &mut Tape, states: Tensor, projected: Tensor) -> EncodedSequence {
        let len = states.rows();
        let states = tape.constant(states);
        let projected = tape.constant(projected);
        let last = LstmVars {
            hidden: states,
            cell: states,
        };
        EncodedSequence {
            states,
            projected,
            last,
            len,
        }
    }

    #[test]
    fn attention_over_single_state() {
        let m = model(FeatureMode::Ae, 9);
        let mut tape = Tape::new(m.params());
        let h = Tensor::row(&[0.1, -0.2, 0.3, 0.0, 0.5, 0.6, -0.7, 0.8]);
        let enc = fake_encoding(&mut tape, h.clone(), Tensor::full(&[1, 8], 0.2));
        let d = tape.constant(Tensor::full(&[1, 8], 0.3));
        let (alpha, ctx) = attend(&mut tape, &m.ids().attention, &enc, d).unwrap();
        assert_eq!(tape.value(alpha).data(), &[1.0]);
        assert_eq!(tape.value(ctx).data(), h.data());
    }

    #[test]
    fn attention_uniform_over_identical_states() {
        let m = model(FeatureMode::Ae, 10);
        let mut tape = Tape::new(m.params());
        let row = [0.4, -0.1, 0.2, 0.9, 0.0, -0.3, 0.1, 0.2];
        let states = Tensor::from_rows(&vec![row.to_vec(); 5]).unwrap();
        let projected = states.matmul(m.params().get(m.ids().attention.w_h)).unwrap();
        let enc = fake_encoding(&mut tape, states, projected);
        let d = tape.constant(Tensor::full(&[1, 8], -0.4));
        let (alpha, _) = attend(&mut tape, &m.ids().attention, &enc, d).unwrap();
        for a in tape.value(alpha).data() {
            assert!((a - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn attention_hand_set_scores() {
        let mut m = model(FeatureMode::Ae, 11);
        set(&mut m, "att.w_d", |t| t.data_mut().fill(0.0));
        set(&mut m, "att.v", |t| {
            t.data_mut().fill(0.0);
            t.data_mut()[0] = 2.0;
        });
        // v·tanh(p) = 2·tanh(p) hits 0 and ln 3.
        let p1 = (3f64.ln() / 2.0).atanh();
        let mut projected = Tensor::zeros(&[2, 8]);
        projected.data_mut()[8] = p1;
        let h1 = [1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 4.0];
        let h2 = [0.0, 1.0, -2.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut tape = Tape::new(m.params());
        let enc = fake_encoding(&mut tape, Tensor::from_rows(&[h1.to_vec(), h2.to_vec()]).unwrap(), projected);
        let d = tape.constant(Tensor::full(&[1, 8], 0.7));
        let (alpha, ctx) = attend(&mut tape, &m.ids().attention, &enc, d).unwrap();
        let a = tape.value(alpha).data();
        assert!((a[0] - 0.25).abs() < 1e-12 && (a[1] - 0.75).abs() < 1e-12);
        for (j, c) in tape.value(ctx).data().iter().enumerate() {
            assert!((c - (0.25 * h1[j] + 0.75 * h2[j])).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let m = model(FeatureMode::Ae, 12);
        let dists = teacher_forced_distributions(&m, &frames(13, 6), &[0, 1, 2, 3]).unwrap();
        for (probs, alpha) in dists {
            assert_eq!(alpha.len(), 6);
            assert!(alpha.iter().all(|&a| a >= 0.0));
            assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(probs.len(), 28);
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut m = model(FeatureMode::Ae, 14);
        set(&mut m, "out.w", |t| t.data_mut().fill(0.0));
        set(&mut m, "out.b", |t| t.data_mut().fill(0.0));
        let x = frames(15, 3);
        for (probs, _) in teacher_forced_distributions(&m, &x, &[5, 6]).unwrap() {
            for p in probs {
                assert!((p - 1.0 / 28.0).abs() < 1e-15);
            }
        }
        let mut tape = Tape::new(m.params());
        let nll = sequence_nll(&mut tape, &m, &x, &[5, 6, 7], &Pass::eval()).unwrap();
        assert!((tape.value(nll).item() - 28f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn decoder_step_rejects_unknown_token() {
        let m = model(FeatureMode::Ae, 16);
        let mut tape = Tape::new(m.params());
        let (enc, _) = encode_frames(&mut tape, &m, &frames(1, 2), &Pass::eval(), false).unwrap();
        assert!(decoder_step(&mut tape, &m, 28, enc.last, &enc).is_err());
        assert!(decoder_step(&mut tape, &m, 27, enc.last, &enc).is_ok());
    }

    #[test]
    fn certain_outputs_give_zero_nll() {
        // One letter. The decoder's first hidden unit follows the sign of
        // the fed embedding: positive after start, negative after the
        // letter, and the output layer turns that into certainty.
        let mut cfg = ModelConfig::tiny(FeatureMode::Ae);
        cfg.n_letters = 1;
        let mut m = Model::new(cfg, SeedTree::new(1)).unwrap();
        zero_all(&mut m);
        let (start, end) = (m.vocab().start(), m.vocab().end());
        set(&mut m, "embed", |t| {
            t.data_mut()[start * 8] = 1.0;
            t.data_mut()[0] = -1.0;
        });
        set(&mut m, "seq_dec.b_i", |t| t.data_mut().fill(50.0));
        set(&mut m, "seq_dec.b_o", |t| t.data_mut().fill(50.0));
        set(&mut m, "seq_dec.w_g", |t| t.data_mut()[0] = 5.0);
        set(&mut m, "out.w", |t| {
            t.data_mut()[0] = 1e4;
            t.data_mut()[end] = -1e4;
        });
        let mut tape = Tape::new(m.params());
        let nll = sequence_nll(&mut tape, &m, &frames(2, 2), &[0], &Pass::eval()).unwrap();
        assert_eq!(tape.value(nll).item(), 0.0);
    }

    #[test]
    fn empty_or_invalid_targets_rejected() {
        let m = model(FeatureMode::Ae, 17);
        let x = frames(1, 2);
        let mut tape = Tape::new(m.params());
        assert!(sequence_nll(&mut tape, &m, &x, &[], &Pass::eval()).is_err());
        assert!(sequence_nll(&mut tape, &m, &x, &[26], &Pass::eval()).is_err());
        assert!(multitask_loss(&mut tape, &m, &x, &[1], -1.0, &Pass::eval()).is_err());
    }

    #[test]
    fn overfitting_one_example_lowers_the_loss() {
        let mut m = model(FeatureMode::Ae, 18);
        let x = frames(19, 4);
        let letters = [7, 8];
        let mut adam = AdamState::new(
            m.params(),
            AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
        );
        let mut losses = Vec::new();
        for step in 0..40 {
            let pass = Pass::train(SeedTree::new(step));
            let e = loss_and_grads(&m, m.params(), &x, &letters, 0.0, &pass).unwrap();
            losses.push(e.total);
            adam_step(m.params_mut(), &e.grads, &mut adam).unwrap();
        }
        assert!(losses[39] < 0.5 * losses[0], "{losses:?}");
    }

    #[test]
    fn per_example_losses_ignore_order() {
        let m = model(FeatureMode::Vae, 20);
        let examples = [(frames(21, 3), vec![1, 2]), (frames(22, 5), vec![3])];
        let pass = Pass::train(SeedTree::new(23));
        let eval = |i: usize| {
            let (x, y) = &examples[i];
            loss_and_grads(&m, m.params(), x, y, 1.0, &pass).unwrap().total
        };
        let forward = [eval(0), eval(1)];
        let backward = [eval(1), eval(0)];
        assert_eq!(forward, [backward[1], backward[0]]);
    }
}

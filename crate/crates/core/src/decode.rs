//! Greedy, beam and exhaustive decoding.
//!
//! A hypothesis' score is the plain sum of per-step log-probabilities (no
//! length normalization). Emittable tokens are the letters and the end
//! symbol; the start symbol is only ever fed in. A hypothesis finishes when
//! it emits the end symbol or reaches `max_len` steps. Ranking is by score,
//! ties broken by lexicographic token order.
//!
//! The search routines run against any [`StepScorer`]; [`DecoderSession`]
//! is the one backed by a trained model.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::features::Pass;
use crate::model::{Model, Vocab};
use crate::numcore::{Tape, Tensor};
use crate::seq2seq::{decoder_step, encode_frames, DecoderState, EncodedSequence, LstmVars};

pub const DEFAULT_MAX_LEN: usize = 20;
pub const DEFAULT_BEAM_WIDTHS: [usize; 3] = [1, 3, 5];

/// Upper bound on the number of sequences [`exhaustive_search`] enumerates.
pub const EXHAUSTIVE_CAP: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct StepOutput<S> {
    /// Distribution over the whole vocabulary.
    pub probs: Vec<f64>,
    pub state: S,
    pub attention: Vec<f64>,
}

/// Next-token distributions for a decoder, one step at a time.
pub trait StepScorer {
    type State: Clone;

    fn vocab(&self) -> Vocab;
    fn initial_state(&self) -> Self::State;
    fn step(&mut self, prev_token: usize, state: &Self::State) -> Result<StepOutput<Self::State>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis<S = DecoderState> {
    /// Emitted tokens, including a trailing end symbol when finished by it.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: S,
    pub finished: bool,
    /// One attention row per emitted token.
    pub attention: Vec<Vec<f64>>,
}

impl<S> Hypothesis<S> {
    /// Emitted letters without the end symbol.
    pub fn letters(&self, vocab: Vocab) -> Vec<usize> {
        self.tokens.iter().copied().filter(|&t| vocab.is_letter(t)).collect()
    }
}

/// Score descending, then tokens ascending.
pub fn rank<S>(a: &Hypothesis<S>, b: &Hypothesis<S>) -> Ordering {
    b.log_prob
        .total_cmp(&a.log_prob)
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Encodes a frame sequence once and serves decoder steps against it.
pub struct DecoderSession<'m> {
    tape: Tape<'m>,
    model: &'m Model,
    enc: EncodedSequence,
    initial: DecoderState,
}

impl<'m> DecoderSession<'m> {
    pub fn new(model: &'m Model, frames: &Tensor) -> Result<Self> {
        let mut tape = Tape::new(model.params());
        let (enc, _) = encode_frames(&mut tape, model, frames, &Pass::eval(), false)?;
        let initial = enc.last.to_state(&tape);
        Ok(DecoderSession {
            tape,
            model,
            enc,
            initial,
        })
    }

    pub fn frames(&self) -> usize {
        self.enc.len
    }
}

impl StepScorer for DecoderSession<'_> {
    type State = DecoderState;

    fn vocab(&self) -> Vocab {
        self.model.vocab()
    }

    fn initial_state(&self) -> DecoderState {
        self.initial.clone()
    }

    fn step(&mut self, prev_token: usize, state: &DecoderState) -> Result<StepOutput<DecoderState>> {
        let prev = LstmVars::from_state(&mut self.tape, state);
        let out = decoder_step(&mut self.tape, self.model, prev_token, prev, &self.enc)?;
        Ok(StepOutput {
            probs: self.tape.value(out.probs).data().to_vec(),
            state: out.state.to_state(&self.tape),
            attention: self.tape.value(out.alpha).data().to_vec(),
        })
    }
}

fn root<T: StepScorer>(scorer: &T) -> Hypothesis<T::State> {
    Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: scorer.initial_state(),
        finished: false,
        attention: Vec::new(),
    }
}

/// Children of an unfinished hypothesis, one per emittable token.
fn expand<T: StepScorer>(scorer: &mut T, h: &Hypothesis<T::State>) -> Result<Vec<Hypothesis<T::State>>> {
    let vocab = scorer.vocab();
    let prev = h.tokens.last().copied().unwrap_or(vocab.start());
    let out = scorer.step(prev, &h.state)?;
    if out.probs.len() != vocab.size() {
        return Err(Error::shape(
            "decode",
            format!("{} probabilities for a vocabulary of {}", out.probs.len(), vocab.size()),
        ));
    }
    let emittable = (0..vocab.n_letters).chain([vocab.end()]);
    Ok(emittable
        .map(|tok| {
            let mut tokens = h.tokens.clone();
            tokens.push(tok);
            let mut attention = h.attention.clone();
            attention.push(out.attention.clone());
            Hypothesis {
                tokens,
                log_prob: h.log_prob + out.probs[tok].ln(),
                state: out.state.clone(),
                finished: tok == vocab.end(),
                attention,
            }
        })
        .collect())
}

fn check_max_len(max_len: usize) -> Result<()> {
    if max_len == 0 {
        return Err(Error::invalid("max_len must be at least 1"));
    }
    Ok(())
}

/// Emits the highest-scoring token at every step.
pub fn greedy_search<T: StepScorer>(scorer: &mut T, max_len: usize) -> Result<Hypothesis<T::State>> {
    check_max_len(max_len)?;
    let mut h = root(scorer);
    while !h.finished && h.tokens.len() < max_len {
        h = expand(scorer, &h)?
            .into_iter()
            .min_by(rank)
            .expect("vocabulary has at least one emittable token");
    }
    Ok(h)
}

/// Beam search keeping the `beam_width` best hypotheses per step. Finished
/// hypotheses stay in the beam, competing on score, and are not extended.
/// Returns the final beam sorted best first.
pub fn beam_search<T: StepScorer>(
    scorer: &mut T,
    beam_width: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis<T::State>>> {
    if beam_width < 1 {
        return Err(Error::invalid("beam width must be at least 1"));
    }
    check_max_len(max_len)?;
    let mut beam = vec![root(scorer)];
    for _ in 0..max_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        let mut candidates = Vec::new();
        for h in beam {
            if h.finished {
                candidates.push(h);
            } else {
                candidates.extend(expand(scorer, &h)?);
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(beam_width);
        beam = candidates;
    }
    Ok(beam)
}

/// Scores every possible output up to `max_len` tokens and returns the
/// best. Intended as a test oracle for small vocabularies.
pub fn exhaustive_search<T: StepScorer>(scorer: &mut T, max_len: usize) -> Result<Hypothesis<T::State>> {
    check_max_len(max_len)?;
    let branching = scorer.vocab().n_letters as u64 + 1;
    let space = (0..max_len).try_fold(1u64, |acc, _| acc.checked_mul(branching));
    match space {
        Some(n) if n <= EXHAUSTIVE_CAP => {}
        _ => {
            return Err(Error::invalid(format!(
                "search space {branching}^{max_len} exceeds {EXHAUSTIVE_CAP}"
            )))
        }
    }
    let mut best: Option<Hypothesis<T::State>> = None;
    let mut stack = vec![root(scorer)];
    while let Some(h) = stack.pop() {
        if h.finished || h.tokens.len() == max_len {
            if best.as_ref().map_or(true, |b| rank(&h, b) == Ordering::Less) {
                best = Some(h);
            }
            continue;
        }
        stack.extend(expand(scorer, &h)?);
    }
    Ok(best.expect("at least one complete sequence"))
}

pub fn greedy_decode(model: &Model, frames: &Tensor, max_len: usize) -> Result<Hypothesis> {
    greedy_search(&mut DecoderSession::new(model, frames)?, max_len)
}

pub fn beam_decode(
    model: &Model,
    frames: &Tensor,
    beam_width: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis>> {
    if beam_width < 1 {
        return Err(Error::invalid("beam width must be at least 1"));
    }
    beam_search(&mut DecoderSession::new(model, frames)?, beam_width, max_len)
}

pub fn exhaustive_decode(model: &Model, frames: &Tensor, max_len: usize) -> Result<Hypothesis> {
    exhaustive_search(&mut DecoderSession::new(model, frames)?, max_len)
}

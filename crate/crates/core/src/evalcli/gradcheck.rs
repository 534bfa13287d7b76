//! Finite-difference check of the joint loss on the tiny configuration.

use rand::Rng;

use crate::error::Result;
use crate::features::Pass;
use crate::model::{FeatureMode, Model, ModelConfig};
use crate::numcore::{finite_difference_check, GradCheckReport, SeedTree, Tensor};
use crate::seq2seq::loss_and_grads;

/// Central-difference step of the suite.
pub const GRADCHECK_EPS: f64 = 1e-5;
/// Largest accepted relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
/// Target word of the suite (`EO`, length 2).
pub const GRADCHECK_WORD: [usize; 2] = [4, 14];

/// Tiny model in `mode` moved to a random point: initial biases are exactly
/// zero, which would put ReLU units on their kink.
pub fn gradcheck_model(mode: FeatureMode, seed: u64) -> Result<Model> {
    let tree = SeedTree::new(seed);
    let model = Model::new(ModelConfig::tiny(mode), tree.child("init"))?;
    let mut params = model.params().clone();
    let mut rng = tree.child("offset").rng();
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for v in params.get_mut(id).data_mut() {
            *v += 0.1 * rng.gen_range(-1.0..1.0);
        }
    }
    Model::from_params(model.config().clone(), params)
}

/// Three uniform 8×8 frames.
pub fn gradcheck_frames(seed: u64) -> Result<Tensor> {
    let mut rng = SeedTree::new(seed).child("frames").rng();
    Tensor::new(&[3, 64], (0..192).map(|_| rng.gen::<f64>()).collect())
}

/// Checks every parameter gradient of the joint loss in one mode. Dropout,
/// corruption and sampling noise are frozen by a fixed pass seed.
pub fn check_mode(mode: FeatureMode, seed: u64, eps: f64) -> Result<GradCheckReport> {
    let model = gradcheck_model(mode, seed)?;
    let frames = gradcheck_frames(seed)?;
    let pass = Pass::train(SeedTree::new(seed).child("pass"));
    let lambda = if mode.has_decoder() { 1.0 } else { 0.0 };
    let mut params = model.params().clone();
    finite_difference_check(
        |ps| {
            let e = loss_and_grads(&model, ps, &frames, &GRADCHECK_WORD, lambda, &pass)?;
            Ok((e.total, e.grads))
        },
        &mut params,
        eps,
    )
}

/// [`check_mode`] for every feature mode.
pub fn gradient_suite(seed: u64, eps: f64) -> Result<Vec<(FeatureMode, GradCheckReport)>> {
    FeatureMode::ALL
        .iter()
        .map(|&mode| Ok((mode, check_mode(mode, seed, eps)?)))
        .collect()
}

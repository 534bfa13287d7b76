use fingerspell::features::{features_forward, kl_gaussian, kl_term, reparameterize, Pass};
use fingerspell::numcore::{
    finite_difference_check, relative_error, Gradients, ParamSet, SeedTree, Tape, Tensor,
};
use fingerspell::seq2seq::{lstm_step, loss_and_grads, sequence_nll, DecoderState, LstmVars};
use fingerspell::{FeatureMode, Model, ModelConfig};
use rand::Rng;

const EPS: f64 = 1e-5;

fn tiny_frames(seed: u64) -> Tensor {
    let mut rng = SeedTree::new(seed).rng();
    Tensor::new(&[3, 64], (0..192).map(|_| rng.gen::<f64>()).collect()).unwrap()
}

/// Tiny model moved off its initialization (biases start at exactly zero,
/// which parks ReLU units on their kink).
fn tiny_model(mode: FeatureMode) -> Model {
    let model = Model::new(ModelConfig::tiny(mode), SeedTree::new(21)).unwrap();
    let mut params = model.params().clone();
    let mut rng = SeedTree::new(99).rng();
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for v in params.get_mut(id).data_mut() {
            *v += 0.1 * rng.gen_range(-1.0..1.0);
        }
    }
    Model::from_params(model.config().clone(), params).unwrap()
}

fn lambda_for(mode: FeatureMode) -> f64 {
    if mode == FeatureMode::Mlp {
        0.0
    } else {
        1.0
    }
}

/// Central differences for every entry, paired with the analytic values.
fn fd_pairs<F>(mut f: F, params: &mut ParamSet) -> Vec<(String, f64, f64)>
where
    F: FnMut(&ParamSet) -> (f64, Gradients),
{
    let (_, analytic) = f(params);
    let mut out = Vec::new();
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        for j in 0..params.get(id).len() {
            let orig = params.get(id).data()[j];
            params.get_mut(id).data_mut()[j] = orig + EPS;
            let plus = f(params).0;
            params.get_mut(id).data_mut()[j] = orig - EPS;
            let minus = f(params).0;
            params.get_mut(id).data_mut()[j] = orig;
            out.push((
                format!("{}[{j}]", params.name(id)),
                analytic.get(id).data()[j],
                (plus - minus) / (2.0 * EPS),
            ));
        }
    }
    out
}

// Central differences on a loss of order 10 carry roughly 1e-10 of
// rounding noise, so tiny entries are compared with an absolute allowance
// on top of the relative bound. The strict form lives in the acceptance
// suite.
#[test]
fn multitask_gradients_match_fd_in_every_mode() {
    for mode in FeatureMode::ALL {
        let model = tiny_model(mode);
        let frames = tiny_frames(5);
        let pass = Pass::train(SeedTree::new(77));
        let lambda = lambda_for(mode);
        let mut params = model.params().clone();
        let pairs = fd_pairs(
            |ps| {
                let e = loss_and_grads(&model, ps, &frames, &[4, 14], lambda, &pass).unwrap();
                (e.total, e.grads)
            },
            &mut params,
        );
        for (name, a, n) in pairs {
            let tol = 1e-4 * a.abs().max(n.abs()) + 1e-9;
            assert!((a - n).abs() <= tol, "{mode} {name}: analytic {a} numeric {n}");
        }
    }
}

#[test]
fn every_parameter_receives_gradient() {
    for mode in FeatureMode::ALL {
        let model = tiny_model(mode);
        let e = loss_and_grads(
            &model,
            model.params(),
            &tiny_frames(5),
            &[4, 14],
            lambda_for(mode),
            &Pass::train(SeedTree::new(77)),
        )
        .unwrap();
        for (id, g) in e.grads.iter() {
            let name = model.params().name(id);
            // Without the auto-encoder term the reconstruction decoder is
            // not part of the graph.
            if mode == FeatureMode::Mlp && name.starts_with("dec.") {
                continue;
            }
            assert!(g.squared_norm() > 0.0, "{mode}: {name} has zero gradient");
        }
    }
}

fn feature_loss(model: &Model, ps: &ParamSet, frames: &Tensor, pass: &Pass) -> (f64, Gradients) {
    let mut tape = Tape::new(ps);
    let out = features_forward(&mut tape, model, frames, pass, true).unwrap();
    let loss = out.ae_loss.unwrap();
    (tape.value(loss).item(), tape.backprop(loss).unwrap())
}

#[test]
fn vae_loss_gradients_match_fd() {
    let model = tiny_model(FeatureMode::Vae);
    let mut rng = SeedTree::new(3).rng();
    let frame = Tensor::new(&[1, 64], (0..64).map(|_| rng.gen::<f64>() * 0.2).collect()).unwrap();
    let pass = Pass::train(SeedTree::new(8));
    let mut params = model.params().clone();
    let r = finite_difference_check(
        |ps| Ok(feature_loss(&model, ps, &frame, &pass)),
        &mut params,
        EPS,
    )
    .unwrap();
    for (name, err) in &r.per_param {
        if name.starts_with("enc.") || name.starts_with("dec.") {
            assert!(*err < 1e-4, "{name}: {err}");
        }
    }
}

#[test]
fn gradient_flows_through_vae_sample() {
    let model = tiny_model(FeatureMode::Vae);
    let frame = tiny_frames(9);
    let mut params = model.params().clone();
    let logvar_id = params.id("enc.w_logvar").unwrap();
    let f = |ps: &ParamSet| {
        let mut tape = Tape::new(ps);
        let x = tape.constant(frame.clone());
        let enc = fingerspell::features::encoder_forward(
            &mut tape,
            &model.ids().encoder,
            x,
            1.0,
            &Pass::eval(),
        )?;
        let z = reparameterize(&mut tape, enc.mean, enc.logvar.unwrap(), Some(SeedTree::new(4)))?;
        let sq = tape.square(z)?;
        let loss = tape.sum(sq);
        Ok((tape.value(loss).item(), tape.backprop(loss)?))
    };
    let (_, g) = f(&params).unwrap();
    assert!(g.get(logvar_id).squared_norm() > 0.0);
    let r = finite_difference_check(f, &mut params, EPS).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

#[test]
fn kl_term_gradient_matches_fd() {
    let mut params = ParamSet::new();
    let mut rng = SeedTree::new(12).rng();
    let mu = params
        .insert("mu", Tensor::new(&[1, 5], (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap())
        .unwrap();
    let lv = params
        .insert("lv", Tensor::new(&[1, 5], (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap())
        .unwrap();
    let f = |ps: &ParamSet| {
        let mut tape = Tape::new(ps);
        let m = tape.param(mu);
        let l = tape.param(lv);
        let kl = kl_term(&mut tape, m, l)?;
        Ok((tape.value(kl).item(), tape.backprop(kl)?))
    };
    let (value, g) = f(&params).unwrap();
    let direct = kl_gaussian(params.get(mu).data(), params.get(lv).data()).unwrap();
    assert!((value - direct).abs() < 1e-12);
    // Closed form: dKL/dμ = μ, dKL/dlogσ² = ½(e^{lv} - 1).
    for j in 0..5 {
        assert!((g.get(mu).data()[j] - params.get(mu).data()[j]).abs() < 1e-12);
        let want = 0.5 * (params.get(lv).data()[j].exp() - 1.0);
        assert!((g.get(lv).data()[j] - want).abs() < 1e-12);
    }
    let r = finite_difference_check(f, &mut params, EPS).unwrap();
    assert!(r.max_relative_error < 1e-5, "{r:?}");
}

#[test]
fn lstm_three_chained_steps_match_fd() {
    let model = tiny_model(FeatureMode::Ae);
    let lstm = model.ids().seq_encoder;
    let mut rng = SeedTree::new(31).rng();
    let inputs: Vec<Tensor> = (0..3)
        .map(|_| Tensor::new(&[1, 4], (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap())
        .collect();
    let mut params = model.params().clone();
    let f = |ps: &ParamSet| {
        let mut tape = Tape::new(ps);
        let mut state = LstmVars::from_state(&mut tape, &DecoderState::zeros(8));
        for x in &inputs {
            let x = tape.constant(x.clone());
            state = lstm_step(&mut tape, &lstm, x, state)?;
        }
        let hc = tape.mul(state.hidden, state.cell)?;
        let loss = tape.sum(hc);
        Ok((tape.value(loss).item(), tape.backprop(loss)?))
    };
    let r = finite_difference_check(f, &mut params, EPS).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

#[test]
fn lambda_zero_is_sequence_nll() {
    for mode in FeatureMode::ALL {
        let model = tiny_model(mode);
        let frames = tiny_frames(5);
        let pass = Pass::train(SeedTree::new(77));
        let e = loss_and_grads(&model, model.params(), &frames, &[4, 14], 0.0, &pass).unwrap();
        let mut tape = Tape::new(model.params());
        let nll = sequence_nll(&mut tape, &model, &frames, &[4, 14], &pass).unwrap();
        assert_eq!(e.total, tape.value(nll).item());
        assert_eq!(e.ae, None);
    }
}

#[test]
fn multitask_loss_is_additive() {
    for mode in [FeatureMode::Ae, FeatureMode::Dae, FeatureMode::Vae] {
        let model = tiny_model(mode);
        let frames = tiny_frames(5);
        let pass = Pass::train(SeedTree::new(77));
        let joint = loss_and_grads(&model, model.params(), &frames, &[4, 14], 1.0, &pass).unwrap();

        let mut tape = Tape::new(model.params());
        let nll = sequence_nll(&mut tape, &model, &frames, &[4, 14], &pass).unwrap();
        let nll_value = tape.value(nll).item();
        let nll_grads = tape.backprop(nll).unwrap();
        let (ae_value, ae_grads) = feature_loss(&model, model.params(), &frames, &pass);

        assert!((joint.total - (nll_value + ae_value)).abs() <= 1e-12 * joint.total.abs());

        let mut sum = nll_grads.clone();
        sum.add_assign(&ae_grads);
        for (id, g) in joint.grads.iter() {
            for (a, b) in g.data().iter().zip(sum.get(id).data()) {
                assert!(relative_error(*a, *b) < 1e-9, "{}", model.params().name(id));
            }
        }

        // The shared first encoder weight, checked against central
        // differences of the total.
        let id = model.params().id("enc.w1").unwrap();
        let mut params = model.params().clone();
        for j in [0, 17, 300] {
            let orig = params.get(id).data()[j];
            params.get_mut(id).data_mut()[j] = orig + EPS;
            let plus = loss_and_grads(&model, &params, &frames, &[4, 14], 1.0, &pass).unwrap().total;
            params.get_mut(id).data_mut()[j] = orig - EPS;
            let minus = loss_and_grads(&model, &params, &frames, &[4, 14], 1.0, &pass).unwrap().total;
            params.get_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * EPS);
            let parts = nll_grads.get(id).data()[j] + ae_grads.get(id).data()[j];
            assert!((parts - numeric).abs() <= 1e-4 * parts.abs().max(numeric.abs()) + 1e-9);
        }
    }
}

#[test]
fn mlp_mode_rejects_auto_encoder_weight() {
    let model = tiny_model(FeatureMode::Mlp);
    let r = loss_and_grads(
        &model,
        model.params(),
        &tiny_frames(5),
        &[1],
        0.5,
        &Pass::eval(),
    );
    assert!(r.is_err());
}

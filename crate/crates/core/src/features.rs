//! Auto-encoder feature extractors (AE, DAE, VAE) and their losses.
//!
//! Each frame is encoded by a two-hidden-layer ReLU MLP into a latent code
//! that feeds the recurrent encoder. At training time a mirror-image MLP
//! decoder reconstructs the frame and contributes the auto-encoder loss:
//!
//! * AE: `||x - x̃||²`
//! * DAE: the encoder sees a corrupted frame, the loss compares the
//!   reconstruction against the clean frame
//! * VAE: `KL(q(z|x) || N(0, I)) + ½||x - μ_x||²` with one reparameterized
//!   sample; the feature passed on is `μ_z`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DecoderIds, EncoderHead, EncoderIds, FeatureMode, Model};
use crate::numcore::{dropout_mask, SeedTree, Tape, Tensor, Var};

/// Bound applied to predicted log-variances before exponentiation.
pub const LOGVAR_CLAMP: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionKind {
    /// Zero each entry independently with probability `strength`.
    Masking,
    /// Add `N(0, strength²)` noise and clamp back to `[0, 1]`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub strength: f64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            kind: CorruptionKind::Masking,
            strength: 0.25,
        }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            CorruptionKind::Masking => (0.0..1.0).contains(&self.strength),
            CorruptionKind::Gaussian => self.strength >= 0.0 && self.strength.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "corruption strength {} invalid for {:?}",
                self.strength, self.kind
            )))
        }
    }
}

/// Corrupts a frame for denoising training. Deterministic per seed.
pub fn dae_corrupt(x: &[f64], spec: &CorruptionSpec, seed: SeedTree) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = seed.rng();
    Ok(match spec.kind {
        CorruptionKind::Masking => x
            .iter()
            .map(|&v| if rng.gen::<f64>() < spec.strength { 0.0 } else { v })
            .collect(),
        CorruptionKind::Gaussian => x
            .iter()
            .map(|&v| {
                let n: f64 = StandardNormal.sample(&mut rng);
                (v + spec.strength * n).clamp(0.0, 1.0)
            })
            .collect(),
    })
}

/// Squared Euclidean reconstruction error.
pub fn ae_loss(x: &[f64], reconstruction: &[f64]) -> Result<f64> {
    if x.len() != reconstruction.len() {
        return Err(Error::shape(
            "ae_loss",
            format!("{} vs {}", x.len(), reconstruction.len()),
        ));
    }
    Ok(x.iter()
        .zip(reconstruction)
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// `KL(N(μ, diag σ²) || N(0, I)) = -½ Σ (1 + log σ² - μ² - σ²)`.
pub fn kl_gaussian(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(Error::shape(
            "kl_gaussian",
            format!("{} vs {}", mu.len(), logvar.len()),
        ));
    }
    if mu.iter().chain(logvar).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kl_gaussian input".into()));
    }
    Ok(mu
        .iter()
        .zip(logvar)
        // σ² - 1 - log σ² via expm1 stays nonnegative near log σ² = 0.
        .map(|(&m, &lv)| 0.5 * (m * m + (lv.exp_m1() - lv)))
        .sum())
}

/// Forward-pass options shared by every model component.
#[derive(Debug, Clone, Copy)]
pub struct Pass {
    /// Enables dropout, DAE corruption and VAE sampling for the features.
    pub training: bool,
    pub seed: SeedTree,
}

impl Pass {
    pub fn train(seed: SeedTree) -> Self {
        Pass {
            training: true,
            seed,
        }
    }

    pub fn eval() -> Self {
        Pass {
            training: false,
            seed: SeedTree::new(0),
        }
    }
}

/// Posterior parameters and the reparameterized sample for one batch of
/// frames.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeSample {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
    pub z: Vec<f64>,
}

/// Latent code of a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub latent: Vec<f64>,
    pub vae: Option<VaeSample>,
}

fn hidden_dropout(tape: &mut Tape, x: Var, retain: f64, pass: &Pass, label: &str) -> Result<Var> {
    if !pass.training || retain >= 1.0 {
        return Ok(x);
    }
    let shape = tape.value(x).shape().to_vec();
    let mask = dropout_mask(&shape, retain, pass.seed.child("dropout").child(label))?;
    let m = tape.constant(mask);
    tape.mul(x, m)
}

/// Encoder MLP outputs: the latent mean (or point code) and, for the VAE,
/// the clamped log-variance.
pub struct EncoderOut {
    pub mean: Var,
    pub logvar: Option<Var>,
}

pub fn encoder_forward(
    tape: &mut Tape,
    ids: &EncoderIds,
    x: Var,
    retain: f64,
    pass: &Pass,
) -> Result<EncoderOut> {
    let h = tape.affine(x, ids.w1, ids.b1)?;
    let h = tape.relu(h);
    let h = hidden_dropout(tape, h, retain, pass, "enc1")?;
    let h = tape.affine(h, ids.w2, ids.b2)?;
    let h = tape.relu(h);
    let h = hidden_dropout(tape, h, retain, pass, "enc2")?;
    match ids.head {
        EncoderHead::Point { w, b } => Ok(EncoderOut {
            mean: tape.affine(h, w, b)?,
            logvar: None,
        }),
        EncoderHead::Gaussian {
            w_mu,
            b_mu,
            w_logvar,
            b_logvar,
        } => {
            let mean = tape.affine(h, w_mu, b_mu)?;
            let lv = tape.affine(h, w_logvar, b_logvar)?;
            let lv = tape.clamp(lv, -LOGVAR_CLAMP, LOGVAR_CLAMP)?;
            Ok(EncoderOut {
                mean,
                logvar: Some(lv),
            })
        }
    }
}

pub struct DecoderOut {
    pub mean: Var,
    pub logvar: Option<Var>,
}

pub fn decoder_forward(
    tape: &mut Tape,
    ids: &DecoderIds,
    z: Var,
    retain: f64,
    pass: &Pass,
) -> Result<DecoderOut> {
    let h = tape.affine(z, ids.w1, ids.b1)?;
    let h = tape.relu(h);
    let h = hidden_dropout(tape, h, retain, pass, "dec1")?;
    let h = tape.affine(h, ids.w2, ids.b2)?;
    let h = tape.relu(h);
    let h = hidden_dropout(tape, h, retain, pass, "dec2")?;
    let mean = tape.affine(h, ids.w_out, ids.b_out)?;
    let logvar = match ids.logvar {
        Some((w, b)) => {
            let lv = tape.affine(h, w, b)?;
            Some(tape.clamp(lv, -LOGVAR_CLAMP, LOGVAR_CLAMP)?)
        }
        None => None,
    };
    Ok(DecoderOut { mean, logvar })
}

/// `-½ Σ (1 + lv - μ² - exp(lv))` summed over every entry.
pub fn kl_term(tape: &mut Tape, mu: Var, logvar: Var) -> Result<Var> {
    let mu2 = tape.square(mu)?;
    let var = tape.exp(logvar);
    let inner = tape.add_const(logvar, 1.0)?;
    let inner = tape.sub(inner, mu2)?;
    let inner = tape.sub(inner, var)?;
    let s = tape.sum(inner);
    tape.scale(s, -0.5)
}

/// Latent codes for a batch of frames plus, optionally, the auto-encoder
/// loss averaged over frames.
pub struct FeatureOutput {
    /// `S × d_z` codes passed to the sequence encoder.
    pub latent: Var,
    pub ae_loss: Option<Var>,
}

/// Runs the feature extractor on `frames` (`S × d_x`).
///
/// The latent codes handed on are the encoder output of the (possibly
/// corrupted) input; for the VAE they are `μ_z`. When `with_loss` is set
/// the decoder reconstructs and the per-frame loss is averaged over `S`.
pub fn features_forward(
    tape: &mut Tape,
    model: &Model,
    frames: &Tensor,
    pass: &Pass,
    with_loss: bool,
) -> Result<FeatureOutput> {
    let cfg = model.config();
    if frames.cols() != cfg.input_dim {
        return Err(Error::shape(
            "features",
            format!("frames have {} values, model expects {}", frames.cols(), cfg.input_dim),
        ));
    }
    let s = frames.rows() as f64;
    let clean = tape.constant(frames.clone());
    let input = if cfg.mode == FeatureMode::Dae && pass.training {
        let corrupted = dae_corrupt(frames.data(), &cfg.corruption, pass.seed.child("corrupt"))?;
        tape.constant(Tensor::new(frames.shape(), corrupted)?)
    } else {
        clean
    };
    let ids = model.ids();
    let enc = encoder_forward(tape, &ids.encoder, input, cfg.retain_prob, pass)?;
    if !with_loss {
        return Ok(FeatureOutput {
            latent: enc.mean,
            ae_loss: None,
        });
    }
    let dec_ids = ids.decoder.as_ref().ok_or_else(|| {
        Error::invalid(format!("{} mode has no auto-encoder loss", cfg.mode))
    })?;

    let loss = match enc.logvar {
        None => {
            let dec = decoder_forward(tape, dec_ids, enc.mean, cfg.retain_prob, pass)?;
            let diff = tape.sub(clean, dec.mean)?;
            let sq = tape.square(diff)?;
            tape.sum(sq)
        }
        Some(logvar) => {
            let z = reparameterize(tape, enc.mean, logvar, Some(pass.seed.child("vae-eps")))?;
            let dec = decoder_forward(tape, dec_ids, z, cfg.retain_prob, pass)?;
            let kl = kl_term(tape, enc.mean, logvar)?;
            let rec = gaussian_nll(tape, clean, dec.mean, dec.logvar)?;
            tape.add(kl, rec)?
        }
    };
    let mean_loss = tape.scale(loss, 1.0 / s)?;
    Ok(FeatureOutput {
        latent: enc.mean,
        ae_loss: Some(mean_loss),
    })
}

/// `z = μ + exp(½ logvar) ⊙ ε`; `ε = 0` when `seed` is `None`.
pub fn reparameterize(tape: &mut Tape, mu: Var, logvar: Var, seed: Option<SeedTree>) -> Result<Var> {
    let shape = tape.value(mu).shape().to_vec();
    let eps = match seed {
        Some(seed) => {
            let mut rng = seed.rng();
            let n: usize = shape.iter().product();
            Tensor::new(&shape, (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())?
        }
        None => Tensor::zeros(&shape),
    };
    let half = tape.scale(logvar, 0.5)?;
    let sigma = tape.exp(half);
    let eps = tape.constant(eps);
    let noise = tape.mul(sigma, eps)?;
    tape.add(mu, noise)
}

/// Gaussian reconstruction negative log-likelihood without the constant:
/// `½ Σ (x - μ)²` for unit variance, `½ Σ (lv + (x - μ)² e^{-lv})` otherwise.
fn gaussian_nll(tape: &mut Tape, x: Var, mean: Var, logvar: Option<Var>) -> Result<Var> {
    let diff = tape.sub(x, mean)?;
    let sq = tape.square(diff)?;
    let per_entry = match logvar {
        None => sq,
        Some(lv) => {
            let neg = tape.scale(lv, -1.0)?;
            let prec = tape.exp(neg);
            let weighted = tape.mul(sq, prec)?;
            tape.add(weighted, lv)?
        }
    };
    let s = tape.sum(per_entry);
    tape.scale(s, 0.5)
}

/// Encodes one frame at inference time.
///
/// For the VAE the returned latent is `μ_z`; `seed` controls the sample
/// reported in [`VaeSample::z`] (`None` forces `ε = 0`).
pub fn encode(model: &Model, frame: &[f64], seed: Option<SeedTree>) -> Result<Encoded> {
    let cfg = model.config();
    if frame.len() != cfg.input_dim {
        return Err(Error::shape(
            "encode",
            format!("frame has {} values, expected {}", frame.len(), cfg.input_dim),
        ));
    }
    let mut tape = Tape::new(model.params());
    let x = tape.constant(Tensor::row(frame));
    let enc = encoder_forward(&mut tape, &model.ids().encoder, x, cfg.retain_prob, &Pass::eval())?;
    let latent = tape.value(enc.mean).data().to_vec();
    let vae = match enc.logvar {
        Some(lv) => {
            let z = reparameterize(&mut tape, enc.mean, lv, seed)?;
            Some(VaeSample {
                mu: latent.clone(),
                logvar: tape.value(lv).data().to_vec(),
                z: tape.value(z).data().to_vec(),
            })
        }
        None => None,
    };
    Ok(Encoded { latent, vae })
}

/// Auto-encoder loss of a single frame in the model's mode, with dropout
/// and DAE corruption off. The VAE sample is drawn from `seed`.
pub fn frame_loss(model: &Model, frame: &[f64], seed: SeedTree) -> Result<f64> {
    let mut tape = Tape::new(model.params());
    let frames = Tensor::row(frame);
    let pass = Pass {
        training: false,
        seed,
    };
    let out = features_forward(&mut tape, model, &frames, &pass, true)?;
    let loss = out.ae_loss.expect("loss requested");
    Ok(tape.value(loss).item())
}

/// VAE loss of a single frame: KL plus reconstruction with one sample.
pub fn vae_loss(model: &Model, frame: &[f64], seed: SeedTree) -> Result<f64> {
    if model.config().mode != FeatureMode::Vae {
        return Err(Error::invalid("vae_loss needs a VAE-mode model"));
    }
    frame_loss(model, frame, seed)
}

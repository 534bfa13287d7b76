//! Model configuration, vocabulary and the named parameter layout shared by
//! the feature extractor and the sequence model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::CorruptionSpec;
use crate::numcore::{xavier_init, ParamId, ParamSet, SeedTree, Tensor};

/// Which feature extractor feeds the sequence model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    Ae,
    Dae,
    Vae,
    /// Plain MLP encoder with no auto-encoder loss (the `λ_ae = 0` model).
    Mlp,
}

impl FeatureMode {
    pub fn has_decoder(self) -> bool {
        !matches!(self, FeatureMode::Mlp)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureMode::Ae => "ae",
            FeatureMode::Dae => "dae",
            FeatureMode::Vae => "vae",
            FeatureMode::Mlp => "mlp",
        }
    }

    pub const ALL: [FeatureMode; 4] = [
        FeatureMode::Ae,
        FeatureMode::Dae,
        FeatureMode::Vae,
        FeatureMode::Mlp,
    ];
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ae" => Ok(FeatureMode::Ae),
            "dae" => Ok(FeatureMode::Dae),
            "vae" => Ok(FeatureMode::Vae),
            "mlp" | "none" => Ok(FeatureMode::Mlp),
            other => Err(Error::Config(format!("unknown feature mode {other:?}"))),
        }
    }
}

/// Letters plus start-of-word and end-of-word symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    pub n_letters: usize,
}

impl Vocab {
    pub const ALPHABET: Vocab = Vocab { n_letters: 26 };

    pub fn size(self) -> usize {
        self.n_letters + 2
    }

    pub fn start(self) -> usize {
        self.n_letters
    }

    pub fn end(self) -> usize {
        self.n_letters + 1
    }

    pub fn is_letter(self, id: usize) -> bool {
        id < self.n_letters
    }

    /// Letter ids of an upper- or lower-case word over `A..`.
    pub fn encode(self, word: &str) -> Result<Vec<usize>> {
        word.chars()
            .map(|c| {
                let u = c.to_ascii_uppercase();
                let id = (u as usize).wrapping_sub('A' as usize);
                if u.is_ascii_uppercase() && id < self.n_letters {
                    Ok(id)
                } else {
                    Err(Error::Data(format!("character {c:?} is not in the alphabet")))
                }
            })
            .collect()
    }

    pub fn decode(self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| self.is_letter(i))
            .map(|&i| char::from(b'A' + i as u8))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub mode: FeatureMode,
    /// Flattened frame size (4096 for 64×64 frames).
    pub input_dim: usize,
    pub mlp_hidden: usize,
    pub latent_dim: usize,
    pub lstm_hidden: usize,
    pub embed_dim: usize,
    pub attention_dim: usize,
    pub n_letters: usize,
    /// Dropout retain probability between MLP hidden layers.
    pub retain_prob: f64,
    pub corruption: CorruptionSpec,
    /// Model the VAE output log-variance instead of fixing it at zero.
    pub learned_output_variance: bool,
}

impl ModelConfig {
    /// Full-size architecture: 2×800 ReLU MLPs, 100-d latent, 128-d LSTM,
    /// embedding and attention.
    pub fn full(mode: FeatureMode) -> Self {
        ModelConfig {
            mode,
            input_dim: 64 * 64,
            mlp_hidden: 800,
            latent_dim: 100,
            lstm_hidden: 128,
            embed_dim: 128,
            attention_dim: 128,
            n_letters: 26,
            retain_prob: 0.8,
            corruption: CorruptionSpec::default(),
            learned_output_variance: false,
        }
    }

    /// Full-size 64×64 input with narrow layers: 64-unit MLPs, 16-d
    /// latent, 32-d LSTM, embedding and attention.
    pub fn compact(mode: FeatureMode) -> Self {
        ModelConfig {
            mlp_hidden: 64,
            latent_dim: 16,
            lstm_hidden: 32,
            embed_dim: 16,
            attention_dim: 32,
            ..Self::full(mode)
        }
    }

    /// The smallest configuration used for gradient checks: 8×8 frames,
    /// latent 4, every hidden width 8.
    pub fn tiny(mode: FeatureMode) -> Self {
        ModelConfig {
            mode,
            input_dim: 64,
            mlp_hidden: 8,
            latent_dim: 4,
            lstm_hidden: 8,
            embed_dim: 8,
            attention_dim: 8,
            n_letters: 26,
            retain_prob: 0.8,
            corruption: CorruptionSpec::default(),
            learned_output_variance: false,
        }
    }

    pub fn vocab(&self) -> Vocab {
        Vocab {
            n_letters: self.n_letters,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.input_dim,
            self.mlp_hidden,
            self.latent_dim,
            self.lstm_hidden,
            self.embed_dim,
            self.attention_dim,
            self.n_letters,
        ];
        if dims.contains(&0) {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if self.latent_dim >= self.input_dim {
            return Err(Error::Config(format!(
                "latent size {} must be smaller than the input size {}",
                self.latent_dim, self.input_dim
            )));
        }
        if !(self.retain_prob > 0.0 && self.retain_prob <= 1.0) {
            return Err(Error::Config(format!(
                "retain probability {} outside (0, 1]",
                self.retain_prob
            )));
        }
        self.corruption.validate()
    }

    /// Every parameter tensor as `(name, shape, xavier?)` in a fixed order.
    /// Biases are zero-initialized.
    pub fn layout(&self) -> Vec<(String, Vec<usize>, bool)> {
        let mut out = Vec::new();
        let mut w = |name: &str, shape: &[usize]| out.push((name.to_string(), shape.to_vec(), true));
        let (dx, h, dz) = (self.input_dim, self.mlp_hidden, self.latent_dim);
        let (lh, e, a, v) = (
            self.lstm_hidden,
            self.embed_dim,
            self.attention_dim,
            self.vocab().size(),
        );
        w("enc.w1", &[dx, h]);
        w("enc.w2", &[h, h]);
        if self.mode == FeatureMode::Vae {
            w("enc.w_mu", &[h, dz]);
            w("enc.w_logvar", &[h, dz]);
        } else {
            w("enc.w_z", &[h, dz]);
        }
        if self.mode.has_decoder() {
            w("dec.w1", &[dz, h]);
            w("dec.w2", &[h, h]);
            w("dec.w_out", &[h, dx]);
            if self.mode == FeatureMode::Vae && self.learned_output_variance {
                w("dec.w_logvar", &[h, dx]);
            }
        }
        for gate in ["i", "f", "o", "g"] {
            w(&format!("seq_enc.w_{gate}"), &[dz + lh, lh]);
        }
        for gate in ["i", "f", "o", "g"] {
            w(&format!("seq_dec.w_{gate}"), &[e + lh, lh]);
        }
        w("att.w_h", &[lh, a]);
        w("att.w_d", &[lh, a]);
        w("att.v", &[a, 1]);
        w("out.w", &[2 * lh, v]);
        w("embed", &[v, e]);

        let mut b = |name: &str, n: usize| out.push((name.to_string(), vec![1, n], false));
        b("enc.b1", h);
        b("enc.b2", h);
        if self.mode == FeatureMode::Vae {
            b("enc.b_mu", dz);
            b("enc.b_logvar", dz);
        } else {
            b("enc.b_z", dz);
        }
        if self.mode.has_decoder() {
            b("dec.b1", h);
            b("dec.b2", h);
            b("dec.b_out", dx);
            if self.mode == FeatureMode::Vae && self.learned_output_variance {
                b("dec.b_logvar", dx);
            }
        }
        for gate in ["i", "f", "o", "g"] {
            b(&format!("seq_enc.b_{gate}"), lh);
        }
        for gate in ["i", "f", "o", "g"] {
            b(&format!("seq_dec.b_{gate}"), lh);
        }
        b("out.b", v);
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub head: EncoderHead,
}

#[derive(Debug, Clone, Copy)]
pub enum EncoderHead {
    Point { w: ParamId, b: ParamId },
    Gaussian {
        w_mu: ParamId,
        b_mu: ParamId,
        w_logvar: ParamId,
        b_logvar: ParamId,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub w_out: ParamId,
    pub b_out: ParamId,
    pub logvar: Option<(ParamId, ParamId)>,
}

/// Input, forget, output and candidate gates, each acting on `[x; h]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmIds {
    pub w: [ParamId; 4],
    pub b: [ParamId; 4],
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionIds {
    pub w_h: ParamId,
    pub w_d: ParamId,
    pub v: ParamId,
}

#[derive(Debug, Clone, Copy)]
pub struct ModelIds {
    pub encoder: EncoderIds,
    pub decoder: Option<DecoderIds>,
    pub seq_encoder: LstmIds,
    pub seq_decoder: LstmIds,
    pub attention: AttentionIds,
    pub out_w: ParamId,
    pub out_b: ParamId,
    pub embed: ParamId,
}

fn lookup(params: &ParamSet, name: &str) -> Result<ParamId> {
    params
        .id(name)
        .ok_or_else(|| Error::ArchitectureMismatch(format!("missing parameter {name}")))
}

impl ModelIds {
    fn resolve(config: &ModelConfig, p: &ParamSet) -> Result<Self> {
        let head = if config.mode == FeatureMode::Vae {
            EncoderHead::Gaussian {
                w_mu: lookup(p, "enc.w_mu")?,
                b_mu: lookup(p, "enc.b_mu")?,
                w_logvar: lookup(p, "enc.w_logvar")?,
                b_logvar: lookup(p, "enc.b_logvar")?,
            }
        } else {
            EncoderHead::Point {
                w: lookup(p, "enc.w_z")?,
                b: lookup(p, "enc.b_z")?,
            }
        };
        let decoder = if config.mode.has_decoder() {
            let logvar = if config.mode == FeatureMode::Vae && config.learned_output_variance {
                Some((lookup(p, "dec.w_logvar")?, lookup(p, "dec.b_logvar")?))
            } else {
                None
            };
            Some(DecoderIds {
                w1: lookup(p, "dec.w1")?,
                b1: lookup(p, "dec.b1")?,
                w2: lookup(p, "dec.w2")?,
                b2: lookup(p, "dec.b2")?,
                w_out: lookup(p, "dec.w_out")?,
                b_out: lookup(p, "dec.b_out")?,
                logvar,
            })
        } else {
            None
        };
        let lstm = |prefix: &str| -> Result<LstmIds> {
            let g = ["i", "f", "o", "g"];
            let mut w = [ParamId(0); 4];
            let mut b = [ParamId(0); 4];
            for (k, gate) in g.iter().enumerate() {
                w[k] = lookup(p, &format!("{prefix}.w_{gate}"))?;
                b[k] = lookup(p, &format!("{prefix}.b_{gate}"))?;
            }
            Ok(LstmIds { w, b })
        };
        Ok(ModelIds {
            encoder: EncoderIds {
                w1: lookup(p, "enc.w1")?,
                b1: lookup(p, "enc.b1")?,
                w2: lookup(p, "enc.w2")?,
                b2: lookup(p, "enc.b2")?,
                head,
            },
            decoder,
            seq_encoder: lstm("seq_enc")?,
            seq_decoder: lstm("seq_dec")?,
            attention: AttentionIds {
                w_h: lookup(p, "att.w_h")?,
                w_d: lookup(p, "att.w_d")?,
                v: lookup(p, "att.v")?,
            },
            out_w: lookup(p, "out.w")?,
            out_b: lookup(p, "out.b")?,
            embed: lookup(p, "embed")?,
        })
    }
}

/// Configuration, parameters and resolved parameter handles.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamSet,
    ids: ModelIds,
}

impl Model {
    /// Xavier-initialized weights, zero biases.
    pub fn new(config: ModelConfig, seed: SeedTree) -> Result<Self> {
        config.validate()?;
        let mut params = ParamSet::new();
        for (name, shape, xavier) in config.layout() {
            let t = if xavier {
                xavier_init(&shape, seed.child(&name))?
            } else {
                Tensor::zeros(&shape)
            };
            params.insert(name, t)?;
        }
        Self::from_params(config, params)
    }

    /// Wraps existing parameters, checking names and shapes against the
    /// configuration's layout.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != params.len() {
            return Err(Error::ArchitectureMismatch(format!(
                "{} mode expects {} tensors, found {}",
                config.mode,
                layout.len(),
                params.len()
            )));
        }
        for (name, shape, _) in &layout {
            let t = params.by_name(name).ok_or_else(|| {
                Error::ArchitectureMismatch(format!("missing parameter {name}"))
            })?;
            if t.shape() != shape.as_slice() {
                return Err(Error::ArchitectureMismatch(format!(
                    "{name}: expected shape {shape:?}, found {:?}",
                    t.shape()
                )));
            }
        }
        let ids = ModelIds::resolve(&config, &params)?;
        Ok(Model {
            config,
            params,
            ids,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn ids(&self) -> &ModelIds {
        &self.ids
    }

    pub fn vocab(&self) -> Vocab {
        self.config.vocab()
    }

    /// Parameter handles belonging to the recurrent encoder-decoder
    /// (everything not prefixed `enc.` or `dec.`).
    pub fn sequence_param_ids(&self) -> Vec<ParamId> {
        self.params
            .iter()
            .filter(|(_, name, _)| !name.starts_with("enc.") && !name.starts_with("dec."))
            .map(|(id, _, _)| id)
            .collect()
    }
}

//! Flat `key = value` run configuration. Lines starting with `#` are
//! comments; unknown or repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::datakit::{DatasetSpec, Protocol};
use crate::error::{Error, Result};
use crate::features::{CorruptionKind, CorruptionSpec};
use crate::model::{FeatureMode, ModelConfig};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub signers: u32,
    pub words: usize,
    pub reps: u32,
    pub frames_per_letter: usize,
    pub transition_frames: usize,
    pub seed: u64,
    /// Unlabeled frames generated for pretraining.
    pub pool_frames: usize,
    /// Held-out signer styles the unlabeled pool is drawn from.
    pub pool_styles: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            signers: 4,
            words: 50,
            reps: 2,
            frames_per_letter: 2,
            transition_frames: 1,
            seed: 0,
            pool_frames: 2000,
            pool_styles: 8,
        }
    }
}

impl DataConfig {
    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let mut spec = DatasetSpec::synthetic(self.signers, self.words, self.reps, self.seed)?;
        spec.frames_per_letter = self.frames_per_letter;
        spec.transition_frames = self.transition_frames;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: DataConfig,
    pub protocol: Protocol,
    pub beam_width: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: TrainConfig::new(ModelConfig::full(FeatureMode::Vae)),
            data: DataConfig::default(),
            protocol: Protocol::Si { target: 1 },
            beam_width: 3,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key} = {value:?}: expected true or false"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if pairs.insert(k.clone(), v).is_some() {
                return Err(Error::Config(format!("line {}: {k} given twice", n + 1)));
            }
        }
        let mut cfg = RunConfig::default();
        // The mode decides the default auto-encoder weight and the protocol
        // decides which of target and fold apply, so these go first.
        for key in ["mode", "protocol", "target", "fold"] {
            if let Some(v) = pairs.remove(key) {
                cfg.set(key, &v)?;
            }
        }
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.beam_width == 0 {
            return Err(Error::Config("beam_width must be at least 1".into()));
        }
        if let Protocol::Sd { fold, .. } = self.protocol {
            if fold >= crate::datakit::SD_USED_FOLDS {
                return Err(Error::Config(format!(
                    "fold {fold} outside 0..{}",
                    crate::datakit::SD_USED_FOLDS
                )));
            }
        }
        let d = &self.data;
        if d.signers == 0 || d.words == 0 || d.reps == 0 || d.frames_per_letter == 0 {
            return Err(Error::Config("signers, words, reps and frames_per_letter must be positive".into()));
        }
        Ok(())
    }

    /// Sets one key. `mode` also resets `lambda_ae` to the mode's default.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let m = &mut t.model;
        let d = &mut self.data;
        match key {
            "mode" => {
                m.mode = parse::<FeatureMode>(key, value)?;
                t.lambda_ae = if m.mode.has_decoder() { 1.0 } else { 0.0 };
            }
            "input_dim" => m.input_dim = parse(key, value)?,
            "mlp_hidden" => m.mlp_hidden = parse(key, value)?,
            "latent_dim" => m.latent_dim = parse(key, value)?,
            "lstm_hidden" => m.lstm_hidden = parse(key, value)?,
            "embed_dim" => m.embed_dim = parse(key, value)?,
            "attention_dim" => m.attention_dim = parse(key, value)?,
            "n_letters" => m.n_letters = parse(key, value)?,
            "retain_prob" => m.retain_prob = parse(key, value)?,
            "corruption" => {
                m.corruption.kind = match value {
                    "masking" => CorruptionKind::Masking,
                    "gaussian" => CorruptionKind::Gaussian,
                    _ => return Err(Error::Config(format!("corruption = {value:?}: expected masking or gaussian"))),
                }
            }
            "corruption_strength" => m.corruption.strength = parse(key, value)?,
            "learned_output_variance" => m.learned_output_variance = parse_bool(key, value)?,
            "lambda_ae" => t.lambda_ae = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "decay" => t.decay = parse(key, value)?,
            "patience" => t.patience = parse(key, value)?,
            "max_epochs" => t.max_epochs = parse(key, value)?,
            "lr_floor" => t.lr_floor = parse(key, value)?,
            "clip_norm" => t.clip_norm = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "pretrain_epochs" => t.pretrain_epochs = parse(key, value)?,
            "pretrain_batch" => t.pretrain_batch = parse(key, value)?,
            "max_len" => t.max_len = parse(key, value)?,
            "keep_best" => t.keep_best = parse_bool(key, value)?,
            "signers" => d.signers = parse(key, value)?,
            "words" => d.words = parse(key, value)?,
            "reps" => d.reps = parse(key, value)?,
            "frames_per_letter" => d.frames_per_letter = parse(key, value)?,
            "transition_frames" => d.transition_frames = parse(key, value)?,
            "data_seed" => d.seed = parse(key, value)?,
            "pool_frames" => d.pool_frames = parse(key, value)?,
            "pool_styles" => d.pool_styles = parse(key, value)?,
            "beam_width" => self.beam_width = parse(key, value)?,
            "protocol" => {
                let target = self.target();
                self.protocol = match value {
                    "sd" => Protocol::Sd { signer: target, fold: 0 },
                    "si" => Protocol::Si { target },
                    "sa" => Protocol::Sa { target },
                    _ => return Err(Error::Config(format!("protocol = {value:?}: expected sd, si or sa"))),
                }
            }
            "target" => {
                let s = parse(key, value)?;
                self.protocol = match self.protocol {
                    Protocol::Sd { fold, .. } => Protocol::Sd { signer: s, fold },
                    Protocol::Si { .. } => Protocol::Si { target: s },
                    Protocol::Sa { .. } => Protocol::Sa { target: s },
                };
            }
            "fold" => {
                let f = parse(key, value)?;
                match &mut self.protocol {
                    Protocol::Sd { fold, .. } => *fold = f,
                    _ => return Err(Error::Config("fold only applies to protocol = sd".into())),
                }
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    fn target(&self) -> u32 {
        match self.protocol {
            Protocol::Sd { signer, .. } => signer,
            Protocol::Si { target } | Protocol::Sa { target } => target,
        }
    }

    /// Renders every key; `parse(to_text())` reproduces the configuration.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let m = &t.model;
        let d = &self.data;
        let corruption = match m.corruption {
            CorruptionSpec { kind: CorruptionKind::Masking, .. } => "masking",
            CorruptionSpec { kind: CorruptionKind::Gaussian, .. } => "gaussian",
        };
        let (protocol, fold) = match self.protocol {
            Protocol::Sd { fold, .. } => ("sd", Some(fold)),
            Protocol::Si { .. } => ("si", None),
            Protocol::Sa { .. } => ("sa", None),
        };
        let mut lines = vec![
            format!("mode = {}", m.mode),
            format!("input_dim = {}", m.input_dim),
            format!("mlp_hidden = {}", m.mlp_hidden),
            format!("latent_dim = {}", m.latent_dim),
            format!("lstm_hidden = {}", m.lstm_hidden),
            format!("embed_dim = {}", m.embed_dim),
            format!("attention_dim = {}", m.attention_dim),
            format!("n_letters = {}", m.n_letters),
            format!("retain_prob = {:?}", m.retain_prob),
            format!("corruption = {corruption}"),
            format!("corruption_strength = {:?}", m.corruption.strength),
            format!("learned_output_variance = {}", m.learned_output_variance),
            format!("lambda_ae = {:?}", t.lambda_ae),
            format!("batch_size = {}", t.batch_size),
            format!("learning_rate = {:?}", t.learning_rate),
            format!("decay = {:?}", t.decay),
            format!("patience = {}", t.patience),
            format!("max_epochs = {}", t.max_epochs),
            format!("lr_floor = {:?}", t.lr_floor),
            format!("clip_norm = {:?}", t.clip_norm),
            format!("seed = {}", t.seed),
            format!("pretrain_epochs = {}", t.pretrain_epochs),
            format!("pretrain_batch = {}", t.pretrain_batch),
            format!("max_len = {}", t.max_len),
            format!("keep_best = {}", t.keep_best),
            format!("signers = {}", d.signers),
            format!("words = {}", d.words),
            format!("reps = {}", d.reps),
            format!("frames_per_letter = {}", d.frames_per_letter),
            format!("transition_frames = {}", d.transition_frames),
            format!("data_seed = {}", d.seed),
            format!("pool_frames = {}", d.pool_frames),
            format!("pool_styles = {}", d.pool_styles),
            format!("beam_width = {}", self.beam_width),
            format!("protocol = {protocol}"),
            format!("target = {}", self.target()),
        ];
        if let Some(f) = fold {
            lines.push(format!("fold = {f}"));
        }
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn keys_apply() {
        let cfg = RunConfig::parse(
            "mode = dae\nmlp_hidden = 32\nprotocol = sd\ntarget = 2\nfold = 5\nbeam_width = 5\nlearning_rate = 0.01\n",
        )
        .unwrap();
        assert_eq!(cfg.train.model.mode, FeatureMode::Dae);
        assert_eq!(cfg.train.model.mlp_hidden, 32);
        assert_eq!(cfg.protocol, Protocol::Sd { signer: 2, fold: 5 });
        assert_eq!(cfg.beam_width, 5);
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn mlp_mode_defaults_to_no_auto_encoder_weight() {
        let cfg = RunConfig::parse("lambda_ae = 1\n").unwrap();
        assert_eq!(cfg.train.lambda_ae, 1.0);
        let cfg = RunConfig::parse("mode = mlp\n").unwrap();
        assert_eq!(cfg.train.lambda_ae, 0.0);
        assert!(RunConfig::parse("mode = mlp\nlambda_ae = 0.5\n").is_err());
    }

    #[test]
    fn bad_input_is_a_config_error() {
        for text in [
            "bogus = 1\n",
            "seed = 1\nseed = 2\n",
            "seed\n",
            "seed = x\n",
            "mode = cnn\n",
            "fold = 1\n",
            "protocol = sd\nfold = 9\n",
            "beam_width = 0\n",
            "decay = 1.5\n",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text:?}");
        }
    }
}

//! Binary checkpoint format.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic      b"FSCK"
//! version    u32
//! mode       u8   (0 ae, 1 dae, 2 vae, 3 mlp)
//! sizes      7 × u32  input, mlp hidden, latent, lstm hidden, embedding,
//!                     attention, letters
//! retain     f64
//! corruption u8 kind (0 masking, 1 gaussian), f64 strength
//! out var    u8   learned output variance flag
//! seeds      u32 count, then per seed: u32 name length, name, u64 value
//! tensors    u32 count, then per tensor: u32 name length, name,
//!            u32 rank, rank × u32 dims, dims-product × f64
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::features::{CorruptionKind, CorruptionSpec};
use crate::model::{FeatureMode, Model, ModelConfig};
use crate::numcore::{ParamSet, Tensor};

pub const MAGIC: [u8; 4] = *b"FSCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    /// Named seeds of the run that produced the parameters.
    pub seeds: BTreeMap<String, u64>,
    pub params: ParamSet,
}

impl Checkpoint {
    pub fn from_model(model: &Model, seeds: BTreeMap<String, u64>) -> Self {
        Checkpoint {
            config: model.config().clone(),
            seeds,
            params: model.params().clone(),
        }
    }

    pub fn into_model(self) -> Result<Model> {
        Model::from_params(self.config, self.params)
    }

    /// Builds the model, first checking the stored architecture against
    /// `expected`.
    pub fn into_model_matching(self, expected: &ModelConfig) -> Result<Model> {
        if &self.config != expected {
            return Err(Error::ArchitectureMismatch(format!(
                "checkpoint holds {} {:?}, run expects {} {:?}",
                self.config.mode,
                sizes(&self.config),
                expected.mode,
                sizes(expected)
            )));
        }
        self.into_model()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        out.push(mode_code(self.config.mode));
        for s in sizes(&self.config) {
            put_u32(&mut out, s as u32);
        }
        out.extend_from_slice(&self.config.retain_prob.to_le_bytes());
        out.push(match self.config.corruption.kind {
            CorruptionKind::Masking => 0,
            CorruptionKind::Gaussian => 1,
        });
        out.extend_from_slice(&self.config.corruption.strength.to_le_bytes());
        out.push(u8::from(self.config.learned_output_variance));
        put_u32(&mut out, self.seeds.len() as u32);
        for (name, v) in &self.seeds {
            put_str(&mut out, name);
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_u32(&mut out, self.params.len() as u32);
        for (_, name, t) in self.params.iter() {
            put_str(&mut out, name);
            put_u32(&mut out, t.shape().len() as u32);
            for &d in t.shape() {
                put_u32(&mut out, d as u32);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            path,
        };
        if r.take(4)? != MAGIC {
            return Err(r.corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let mode = match r.u8()? {
            0 => FeatureMode::Ae,
            1 => FeatureMode::Dae,
            2 => FeatureMode::Vae,
            3 => FeatureMode::Mlp,
            m => return Err(r.corrupt(&format!("unknown mode code {m}"))),
        };
        let mut s = [0usize; 7];
        for v in &mut s {
            *v = r.u32()? as usize;
        }
        let retain_prob = r.f64()?;
        let kind = match r.u8()? {
            0 => CorruptionKind::Masking,
            1 => CorruptionKind::Gaussian,
            k => return Err(r.corrupt(&format!("unknown corruption code {k}"))),
        };
        let strength = r.f64()?;
        let learned_output_variance = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(r.corrupt(&format!("bad flag {b}"))),
        };
        let config = ModelConfig {
            mode,
            input_dim: s[0],
            mlp_hidden: s[1],
            latent_dim: s[2],
            lstm_hidden: s[3],
            embed_dim: s[4],
            attention_dim: s[5],
            n_letters: s[6],
            retain_prob,
            corruption: CorruptionSpec { kind, strength },
            learned_output_variance,
        };
        config
            .validate()
            .map_err(|e| r.corrupt(&format!("stored configuration invalid: {e}")))?;

        let mut seeds = BTreeMap::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            seeds.insert(name, r.u64()?);
        }
        let mut params = ParamSet::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            if rank == 0 || rank > 4 {
                return Err(r.corrupt(&format!("tensor {name} has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&n| n <= r.remaining() / 8)
                .ok_or_else(|| r.corrupt(&format!("tensor {name} larger than the file")))?;
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let t = Tensor::new(&shape, data).map_err(|e| r.corrupt(&e.to_string()))?;
            params
                .insert(&name, t)
                .map_err(|e| r.corrupt(&e.to_string()))?;
        }
        if r.remaining() != 0 {
            return Err(r.corrupt(&format!("{} trailing bytes", r.remaining())));
        }
        Ok(Checkpoint {
            config,
            seeds,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes, path)
    }
}

fn sizes(c: &ModelConfig) -> [usize; 7] {
    [
        c.input_dim,
        c.mlp_hidden,
        c.latent_dim,
        c.lstm_hidden,
        c.embed_dim,
        c.attention_dim,
        c.n_letters,
    ]
}

fn mode_code(mode: FeatureMode) -> u8 {
    match mode {
        FeatureMode::Ae => 0,
        FeatureMode::Dae => 1,
        FeatureMode::Vae => 2,
        FeatureMode::Mlp => 3,
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: &str) -> Error {
        Error::CorruptCheckpoint {
            path: PathBuf::from(self.path),
            reason: format!("{reason} (at byte {})", self.pos),
        }
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.corrupt("unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.corrupt("name is not UTF-8"))
    }
}

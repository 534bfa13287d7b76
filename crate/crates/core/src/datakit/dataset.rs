use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Vocab;
use crate::numcore::{SeedTree, Tensor};

use super::synth::{sequence_length, synth_generate, FrameSequence, SignerStyle};
use super::FRAME_LEN;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const FRAMES_FILE: &str = "frames.bin";

/// Words used by the synthetic corpus, in order.
pub const WORD_LIST: [&str; 64] = [
    "ACE", "BOX", "CAT", "DOG", "ELK", "FOX", "GUM", "HAT", "INK", "JAM", "KEY", "LOG", "MAP",
    "NUT", "OAK", "PEN", "QUIZ", "RUG", "SUN", "TOY", "URN", "VAN", "WAX", "YAK", "ZIP", "BIRD",
    "CAKE", "DESK", "FROG", "GIFT", "HOME", "JUMP", "KING", "LAMP", "MILK", "NEST", "OVEN",
    "PARK", "ROSE", "SHIP", "TREE", "WOLF", "ZERO", "APPLE", "BREAD", "CHAIR", "DREAM",
    "EAGLE", "FLAME", "GRAPE", "HOUSE", "JUICE", "LEMON", "MUSIC", "NIGHT", "OCEAN", "PIANO",
    "QUEEN", "RIVER", "SNAKE", "TIGER", "VOICE", "WATER", "YOUTH",
];

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub signers: Vec<u32>,
    pub words: Vec<String>,
    /// Repetitions of every word per signer.
    pub reps: u32,
    pub frames_per_letter: usize,
    pub transition_frames: usize,
    /// Seeds both the signer styles and the per-instance noise.
    pub seed: u64,
}

impl DatasetSpec {
    /// `n_words` words from [`WORD_LIST`] for each of `n_signers` signers.
    pub fn synthetic(n_signers: u32, n_words: usize, reps: u32, seed: u64) -> Result<Self> {
        if n_words == 0 || n_words > WORD_LIST.len() {
            return Err(Error::invalid(format!(
                "word count {n_words} outside 1..={}",
                WORD_LIST.len()
            )));
        }
        Ok(DatasetSpec {
            signers: (1..=n_signers).collect(),
            words: WORD_LIST[..n_words].iter().map(|w| w.to_string()).collect(),
            reps,
            frames_per_letter: 2,
            transition_frames: 1,
            seed,
        })
    }
}

/// One manifest record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: usize,
    pub signer: u32,
    pub word: String,
    pub rep: u32,
    /// Seed of this instance's jitter and noise.
    pub seed: u64,
    pub frames: usize,
    pub frames_per_letter: usize,
    pub transition_frames: usize,
    /// Seed of the signer's style.
    pub style_seed: u64,
}

impl Instance {
    pub fn style(&self) -> SignerStyle {
        SignerStyle::new(self.signer, self.style_seed)
    }

    pub fn render(&self) -> Result<FrameSequence> {
        synth_generate(
            &self.word,
            &self.style(),
            self.frames_per_letter,
            self.transition_frames,
            self.seed,
        )
    }

    pub fn letters(&self) -> Result<Vec<usize>> {
        Vocab::ALPHABET.encode(&self.word)
    }
}

/// A labeled example ready for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: usize,
    pub signer: u32,
    pub frames: Tensor,
    pub letters: Vec<usize>,
}

/// Manifest of word instances. Frames are rendered on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn generate(spec: &DatasetSpec) -> Result<Self> {
        if spec.frames_per_letter == 0 {
            return Err(Error::invalid("frames_per_letter must be at least 1"));
        }
        let seeds = SeedTree::new(spec.seed).child("instance");
        let mut instances = Vec::new();
        for &signer in &spec.signers {
            for word in &spec.words {
                let letters = Vocab::ALPHABET.encode(word)?;
                if letters.is_empty() {
                    return Err(Error::Data("empty word in dataset spec".into()));
                }
                for rep in 0..spec.reps {
                    let id = instances.len();
                    instances.push(Instance {
                        id,
                        signer,
                        word: word.to_ascii_uppercase(),
                        rep,
                        seed: seeds.index(id as u64).value(),
                        frames: sequence_length(
                            letters.len(),
                            spec.frames_per_letter,
                            spec.transition_frames,
                        ),
                        frames_per_letter: spec.frames_per_letter,
                        transition_frames: spec.transition_frames,
                        style_seed: spec.seed,
                    });
                }
            }
        }
        Ok(Dataset { instances })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn signers(&self) -> BTreeSet<u32> {
        self.instances.iter().map(|i| i.signer).collect()
    }

    pub fn instance(&self, id: usize) -> Result<&Instance> {
        self.instances
            .get(id)
            .filter(|i| i.id == id)
            .or_else(|| self.instances.iter().find(|i| i.id == id))
            .ok_or_else(|| Error::Data(format!("no instance with id {id}")))
    }

    pub fn example(&self, id: usize) -> Result<Example> {
        let inst = self.instance(id)?;
        Ok(Example {
            id,
            signer: inst.signer,
            frames: inst.render()?.frames,
            letters: inst.letters()?,
        })
    }

    pub fn examples(&self, ids: &[usize]) -> Result<Vec<Example>> {
        ids.iter().map(|&id| self.example(id)).collect()
    }

    /// Writes the manifest and, when `with_frames` is set, the rendered
    /// frames as little-endian `f64`, instance after instance.
    pub fn write(&self, dir: &Path, with_frames: bool) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join(MANIFEST_FILE)).map_err(csv_error)?;
        for inst in &self.instances {
            w.serialize(inst).map_err(csv_error)?;
        }
        w.flush()?;
        if with_frames {
            let mut out = BufWriter::new(File::create(dir.join(FRAMES_FILE))?);
            for inst in &self.instances {
                for v in inst.render()?.frames.data() {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
            out.flush()?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let mut r = csv::Reader::from_path(&path).map_err(csv_error)?;
        let instances = r
            .deserialize()
            .collect::<std::result::Result<Vec<Instance>, _>>()
            .map_err(csv_error)?;
        for inst in &instances {
            let letters = Vocab::ALPHABET.encode(&inst.word)?;
            let expected = sequence_length(letters.len(), inst.frames_per_letter, inst.transition_frames);
            if inst.frames != expected || inst.frames_per_letter == 0 {
                return Err(Error::Data(format!(
                    "instance {}: frame count {} inconsistent with word {:?}",
                    inst.id, inst.frames, inst.word
                )));
            }
        }
        Ok(Dataset { instances })
    }

    /// Reads the stored frames of every instance, in manifest order.
    pub fn read_frames(&self, dir: &Path) -> Result<Vec<Tensor>> {
        let mut input = BufReader::new(File::open(dir.join(FRAMES_FILE))?);
        let mut out = Vec::with_capacity(self.len());
        let mut buf = [0u8; 8];
        for inst in &self.instances {
            let n = inst.frames * FRAME_LEN;
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                input.read_exact(&mut buf).map_err(|e| {
                    Error::Data(format!("frames file ends inside instance {}: {e}", inst.id))
                })?;
                data.push(f64::from_le_bytes(buf));
            }
            out.push(Tensor::new(&[inst.frames, FRAME_LEN], data)?);
        }
        if input.read(&mut buf)? != 0 {
            return Err(Error::Data("frames file longer than the manifest".into()));
        }
        Ok(out)
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Data(format!("manifest: {e}"))
}

/// Evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    /// Signer-dependent: 10 folds over one signer's data; `fold` in `0..8`
    /// is the test fold and the next of folds `0..8` validates. Folds 8 and
    /// 9 are reserved as adaptation data.
    Sd { signer: u32, fold: usize },
    /// Signer-independent: train on the other signers, test on `target`.
    Si { target: u32 },
    /// Signer-adapted: the reserved SD folds (20%) adapt, fold 7 (10%) tunes
    /// and folds 0..7 (70%) test.
    Sa { target: u32 },
}

pub const SD_FOLDS: usize = 10;
/// Fold configurations actually run under SD.
pub const SD_USED_FOLDS: usize = 8;

/// Instance ids per role. For SA, `validation` is the tuning set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSplit {
    pub protocol: Protocol,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub adaptation: Vec<usize>,
}

impl ExperimentSplit {
    pub fn all(&self) -> impl Iterator<Item = usize> + '_ {
        self.train
            .iter()
            .chain(&self.validation)
            .chain(&self.test)
            .chain(&self.adaptation)
            .copied()
    }
}

fn shuffled(ids: Vec<usize>, seed: SeedTree) -> Vec<usize> {
    let mut ids = ids;
    ids.shuffle(&mut seed.rng());
    ids
}

/// Boundaries of `k` near-equal chunks of `n` items.
fn chunk_bounds(n: usize, k: usize) -> Vec<usize> {
    (0..=k).map(|i| i * n / k).collect()
}

pub fn make_splits(dataset: &Dataset, protocol: Protocol, seed: u64) -> Result<ExperimentSplit> {
    let tree = SeedTree::new(seed).child("split");
    let of_signer = |s: u32| -> Vec<usize> {
        dataset
            .instances
            .iter()
            .filter(|i| i.signer == s)
            .map(|i| i.id)
            .collect()
    };
    let signers = dataset.signers();
    let mut split = ExperimentSplit {
        protocol,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
        adaptation: Vec::new(),
    };
    match protocol {
        Protocol::Sd { signer, fold } => {
            if fold >= SD_USED_FOLDS {
                return Err(Error::invalid(format!(
                    "SD fold {fold} outside 0..{SD_USED_FOLDS}"
                )));
            }
            let ids = of_signer(signer);
            if ids.len() < SD_FOLDS {
                return Err(Error::Data(format!(
                    "signer {signer} has {} instances, SD needs at least {SD_FOLDS}",
                    ids.len()
                )));
            }
            let ids = shuffled(ids, tree.child("sd").index(signer as u64));
            let b = chunk_bounds(ids.len(), SD_FOLDS);
            let val_fold = (fold + 1) % SD_USED_FOLDS;
            for f in 0..SD_FOLDS {
                let chunk = &ids[b[f]..b[f + 1]];
                match f {
                    f if f == fold => split.test.extend(chunk),
                    f if f == val_fold => split.validation.extend(chunk),
                    _ => split.train.extend(chunk),
                }
            }
        }
        Protocol::Si { target } => {
            if signers.len() < 2 || !signers.contains(&target) {
                return Err(Error::Data(format!(
                    "SI needs target {target} and at least one other signer, dataset has {signers:?}"
                )));
            }
            split.test = of_signer(target);
            let others: Vec<usize> = dataset
                .instances
                .iter()
                .filter(|i| i.signer != target)
                .map(|i| i.id)
                .collect();
            let others = shuffled(others, tree.child("si").index(target as u64));
            let n_val = others.len() / 10;
            split.validation = others[..n_val].to_vec();
            split.train = others[n_val..].to_vec();
        }
        Protocol::Sa { target } => {
            if signers.len() < 2 || !signers.contains(&target) {
                return Err(Error::Data(format!(
                    "SA needs target {target} and at least one other signer, dataset has {signers:?}"
                )));
            }
            let ids = of_signer(target);
            if ids.len() < SD_FOLDS {
                return Err(Error::Data(format!(
                    "signer {target} has {} instances, SA needs at least {SD_FOLDS}",
                    ids.len()
                )));
            }
            // Same fold assignment as SD: the two folds SD never tests or
            // validates on are the adaptation data, the last used fold tunes.
            let ids = shuffled(ids, tree.child("sd").index(target as u64));
            let b = chunk_bounds(ids.len(), SD_FOLDS);
            split.adaptation = ids[b[SD_USED_FOLDS]..].to_vec();
            split.validation = ids[b[SD_USED_FOLDS - 1]..b[SD_USED_FOLDS]].to_vec();
            split.test = ids[..b[SD_USED_FOLDS - 1]].to_vec();
        }
    }
    Ok(split)
}

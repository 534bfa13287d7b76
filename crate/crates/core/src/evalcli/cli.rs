//! Command-line surface.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::datakit::{heldout_styles, make_splits, make_unlabeled_pool, Dataset, Example, ExperimentSplit, Protocol};
use crate::decode::beam_decode;
use crate::error::{Error, Result};
use crate::evalcli::attention::AttentionTable;
use crate::evalcli::checkpoint::Checkpoint;
use crate::evalcli::config::RunConfig;
use crate::evalcli::gradcheck::{gradient_suite, GRADCHECK_EPS, GRADCHECK_TOLERANCE};
use crate::evalcli::metrics::{edit_distance, letter_error_rate, ConfusionMatrix};
use crate::model::Model;
use crate::numcore::SeedTree;
use crate::trainer::{adapt, pretrain_unlabeled, train_labeled_with, Control, TrainReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fingerspell", version, about = "Fingerspelling recognition with auto-encoder features and an attention encoder-decoder")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Run configuration (flat key = value file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the training seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Checkpoint to read, or for `pretrain` and `train` the one to write.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Directory for every output artifact.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Dataset directory; defaults to `<out-dir>/data`.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitName {
    Train,
    Validation,
    Test,
    Adaptation,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the synthetic dataset and its manifest.
    Generate {
        /// Write only the manifest; frames are re-rendered on load.
        #[arg(long)]
        manifest_only: bool,
    },
    /// Train the feature extractor on unlabeled frames only.
    Pretrain,
    /// Train on the labeled data of the configured SD or SI protocol.
    Train {
        /// Start from this checkpoint, typically a pretrained one.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Warm-start from `--checkpoint` and adapt to the target signer.
    Adapt,
    /// Decode a split with beam search.
    Decode {
        #[arg(long)]
        beam_width: Option<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Letter error rate and confusion counts over a split.
    Evaluate {
        #[arg(long)]
        beam_width: Option<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitName,
    },
    /// Attention weights of one decoded instance as a table and heatmap.
    DumpAttention {
        #[arg(long)]
        instance: usize,
        #[arg(long)]
        beam_width: Option<usize>,
    },
    /// Finite-difference check of every gradient on the tiny configuration.
    Gradcheck {
        #[arg(long, default_value_t = GRADCHECK_EPS)]
        eps: f64,
        #[arg(long, default_value_t = GRADCHECK_TOLERANCE)]
        tolerance: f64,
    },
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        Error::NonFinite(_) | Error::Nondeterministic { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit status. Diagnostics go to standard error.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Context {
    cfg: RunConfig,
    global: Global,
}

impl Context {
    fn data_dir(&self) -> PathBuf {
        self.global.data.clone().unwrap_or_else(|| self.global.out_dir.join("data"))
    }

    fn out(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.global.out_dir)?;
        Ok(self.global.out_dir.join(name))
    }

    fn checkpoint_in(&self) -> Result<Checkpoint> {
        let path = self
            .global
            .checkpoint
            .as_ref()
            .ok_or_else(|| Error::Config("this command needs --checkpoint".into()))?;
        Checkpoint::load(path)
    }

    fn checkpoint_out(&self, default: &str) -> Result<PathBuf> {
        match &self.global.checkpoint {
            Some(p) => Ok(p.clone()),
            None => self.out(default),
        }
    }

    fn seeds(&self) -> BTreeMap<String, u64> {
        BTreeMap::from([
            ("seed".to_string(), self.cfg.train.seed),
            ("data_seed".to_string(), self.cfg.data.seed),
        ])
    }

    fn dataset(&self) -> Result<(Dataset, Option<Vec<crate::numcore::Tensor>>)> {
        let dir = self.data_dir();
        if !dir.join(crate::datakit::MANIFEST_FILE).exists() {
            return Err(Error::Data(format!(
                "no dataset manifest in {}; run `generate` first",
                dir.display()
            )));
        }
        let ds = Dataset::read(&dir)?;
        let frames = if dir.join(crate::datakit::FRAMES_FILE).exists() {
            Some(ds.read_frames(&dir)?)
        } else {
            None
        };
        Ok((ds, frames))
    }

    fn split(&self, ds: &Dataset, protocol: Protocol) -> Result<ExperimentSplit> {
        make_splits(ds, protocol, self.cfg.data.seed)
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out(name)?;
        fs::write(&path, contents)?;
        Ok(path)
    }
}

fn examples(ds: &Dataset, frames: &Option<Vec<crate::numcore::Tensor>>, ids: &[usize]) -> Result<Vec<Example>> {
    match frames {
        None => ds.examples(ids),
        Some(all) => ids
            .iter()
            .map(|&id| {
                let pos = ds
                    .instances
                    .iter()
                    .position(|i| i.id == id)
                    .ok_or_else(|| Error::Data(format!("no instance with id {id}")))?;
                let inst = &ds.instances[pos];
                Ok(Example {
                    id,
                    signer: inst.signer,
                    frames: all[pos].clone(),
                    letters: inst.letters()?,
                })
            })
            .collect(),
    }
}

fn split_ids(split: &ExperimentSplit, which: SplitName) -> &[usize] {
    match which {
        SplitName::Train => &split.train,
        SplitName::Validation => &split.validation,
        SplitName::Test => &split.test,
        SplitName::Adaptation => &split.adaptation,
    }
}

fn load_config(global: &Global) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("config {}: {io}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    if let Some(seed) = global.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn log_epochs(out: &mut dyn Write, report: &TrainReport) -> Result<()> {
    for e in &report.epochs {
        let acc = e.validation_accuracy.map_or("-".to_string(), |a| format!("{a:.4}"));
        writeln!(out, "epoch {:>3}  loss {:.5}  val_acc {acc}  lr {:.3e}", e.epoch, e.loss, e.learning_rate)?;
    }
    Ok(())
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    let cfg = load_config(&cli.global)?;
    let ctx = Context { cfg, global: cli.global };
    let cfg = &ctx.cfg;
    match cli.command {
        Command::Generate { manifest_only } => {
            let ds = Dataset::generate(&cfg.data.dataset_spec()?)?;
            let dir = ctx.data_dir();
            ds.write(&dir, !manifest_only)?;
            writeln!(out, "wrote {} instances to {}", ds.len(), dir.display())?;
        }
        Command::Pretrain => {
            let styles = heldout_styles(cfg.data.pool_styles, cfg.data.seed);
            let pool = make_unlabeled_pool(cfg.data.pool_frames, &styles, cfg.data.seed)?;
            let mut model = Model::new(cfg.train.model.clone(), SeedTree::new(cfg.train.seed).child("init"))?;
            let report = pretrain_unlabeled(&mut model, &pool, &cfg.train)?;
            log_epochs(out, &report)?;
            ctx.write("pretrain_log.jsonl", &report.to_jsonl())?;
            let path = ctx.checkpoint_out("pretrained.ckpt")?;
            Checkpoint::from_model(&model, ctx.seeds()).save(&path)?;
            writeln!(out, "checkpoint {}", path.display())?;
        }
        Command::Train { init } => {
            if let Protocol::Sa { .. } = cfg.protocol {
                return Err(Error::Config("protocol sa is trained with `adapt`".into()));
            }
            let (ds, frames) = ctx.dataset()?;
            let split = ctx.split(&ds, cfg.protocol)?;
            let train = examples(&ds, &frames, &split.train)?;
            let val = examples(&ds, &frames, &split.validation)?;
            let mut model = match init {
                Some(path) => Checkpoint::load(&path)?.into_model_matching(&cfg.train.model)?,
                None => Model::new(cfg.train.model.clone(), SeedTree::new(cfg.train.seed).child("init"))?,
            };
            let mut log = String::new();
            let report = train_labeled_with(&mut model, &train, &val, &cfg.train, |_, record| {
                log.push_str(&serde_json::to_string(record).expect("plain data serializes"));
                log.push('\n');
                Control::Continue
            })?;
            log_epochs(out, &report)?;
            ctx.write("train_log.jsonl", &log)?;
            let path = ctx.checkpoint_out("model.ckpt")?;
            Checkpoint::from_model(&model, ctx.seeds()).save(&path)?;
            writeln!(out, "checkpoint {}", path.display())?;
        }
        Command::Adapt => {
            let target = match cfg.protocol {
                Protocol::Sa { target } | Protocol::Si { target } => target,
                Protocol::Sd { .. } => return Err(Error::Config("adapt needs protocol sa".into())),
            };
            let checkpoint = ctx.checkpoint_in()?;
            let (ds, frames) = ctx.dataset()?;
            let split = ctx.split(&ds, Protocol::Sa { target })?;
            let adaptation = examples(&ds, &frames, &split.adaptation)?;
            let tuning = examples(&ds, &frames, &split.validation)?;
            let (model, report) = adapt(checkpoint, &adaptation, &tuning, &cfg.train)?;
            log_epochs(out, &report)?;
            ctx.write("adapt_log.jsonl", &report.to_jsonl())?;
            let path = ctx.out("adapted.ckpt")?;
            Checkpoint::from_model(&model, ctx.seeds()).save(&path)?;
            writeln!(out, "checkpoint {}", path.display())?;
        }
        Command::Decode { beam_width, split } => {
            let model = ctx.checkpoint_in()?.into_model()?;
            let (ds, frames) = ctx.dataset()?;
            let s = ctx.split(&ds, cfg.protocol)?;
            let width = beam_width.unwrap_or(cfg.beam_width);
            let mut table = String::from("id,signer,reference,hypothesis,log_prob\n");
            for ex in examples(&ds, &frames, split_ids(&s, split))? {
                let best = &beam_decode(&model, &ex.frames, width, cfg.train.max_len)?[0];
                let vocab = model.vocab();
                let line = format!(
                    "{},{},{},{},{:e}",
                    ex.id,
                    ex.signer,
                    vocab.decode(&ex.letters),
                    vocab.decode(&best.letters(vocab)),
                    best.log_prob
                );
                writeln!(out, "{line}")?;
                table.push_str(&line);
                table.push('\n');
            }
            ctx.write("decoded.csv", &table)?;
        }
        Command::Evaluate { beam_width, split } => {
            let model = ctx.checkpoint_in()?.into_model()?;
            let (ds, frames) = ctx.dataset()?;
            let s = ctx.split(&ds, cfg.protocol)?;
            let width = beam_width.unwrap_or(cfg.beam_width);
            let mut pairs = Vec::new();
            let mut confusion = ConfusionMatrix::new(model.config().n_letters);
            for ex in examples(&ds, &frames, split_ids(&s, split))? {
                let hyp = beam_decode(&model, &ex.frames, width, cfg.train.max_len)?[0].letters(model.vocab());
                confusion.add(&edit_distance(&hyp, &ex.letters).alignment)?;
                pairs.push((hyp, ex.letters));
            }
            let ler = letter_error_rate(&pairs)?;
            ctx.write("confusion.csv", &confusion.to_csv())?;
            ctx.write(
                "metrics.json",
                &format!("{{\"ler\":{ler},\"instances\":{},\"beam_width\":{width}}}\n", pairs.len()),
            )?;
            writeln!(out, "LER {ler:.2}% over {} instances (beam width {width})", pairs.len())?;
        }
        Command::DumpAttention { instance, beam_width } => {
            let model = ctx.checkpoint_in()?.into_model()?;
            let (ds, frames) = ctx.dataset()?;
            let ex = examples(&ds, &frames, &[instance])?.remove(0);
            let width = beam_width.unwrap_or(cfg.beam_width);
            let best = beam_decode(&model, &ex.frames, width, cfg.train.max_len)?.remove(0);
            let vocab = model.vocab();
            let labels = best
                .tokens
                .iter()
                .map(|&t| if t == vocab.end() { "</s>".to_string() } else { vocab.decode(&[t]) })
                .collect();
            let decoded = vocab.decode(&best.letters(vocab));
            let table = AttentionTable::new(labels, best.attention)?;
            let csv = ctx.write(&format!("attention_{instance}.csv"), &table.to_csv())?;
            ctx.write(&format!("attention_{instance}.svg"), &table.to_svg())?;
            writeln!(out, "{} -> {} ({})", vocab.decode(&ex.letters), decoded, csv.display())?;
        }
        Command::Gradcheck { eps, tolerance } => {
            let mut worst: f64 = 0.0;
            for (mode, report) in gradient_suite(ctx.cfg.train.seed, eps)? {
                let (name, idx) = report.worst.clone().unwrap_or_default();
                writeln!(
                    out,
                    "{mode}: max relative error {:.3e} at {name}[{idx}] over {} entries",
                    report.max_relative_error, report.entries_checked
                )?;
                worst = worst.max(report.max_relative_error);
            }
            if !(worst < tolerance) {
                eprintln!("gradient check failed: {worst:.3e} ≥ {tolerance:.1e}");
                return Ok(EXIT_NUMERIC);
            }
        }
    }
    Ok(EXIT_OK)
}

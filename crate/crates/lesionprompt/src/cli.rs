//! Command-line interface.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use lesionprompt_core::synthesis::TaskKind;

use crate::commands;
use crate::config::{Preset, RunConfig};
use crate::error::{Error, Result};
use crate::io::Format;
use crate::manifest::Invocation;
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(
    name = "lesionprompt",
    version,
    about = "Synthetic lesion datasets, pseudo-label pasting, evaluation and model selection"
)]
pub struct Cli {
    /// TOML run configuration (flags override it).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "LESIONPROMPT_WORKERS")]
    pub workers: Option<usize>,
    /// Output file format.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Synthesis preset used as the base of the configuration.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Prompt,
    Validation,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Prompt => TaskKind::Prompt,
            TaskArg::Validation => TaskKind::Validation,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate lesion-free phantom volumes with brain masks.
    Phantom {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
        /// Grid size, e.g. 64,64,64.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        dims: Option<Vec<usize>>,
    },
    /// Generate prompt-task or validation-task samples.
    Synth {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        count: usize,
        /// Use freshly generated phantoms as sources.
        #[arg(long, conflicts_with = "input", required_unless_present = "input")]
        phantom: bool,
        /// Directory of lesion-free `<id>_image` / `<id>_brain` files.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Phantom grid size when `--phantom` is used.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        dims: Option<Vec<usize>>,
    },
    /// Paste pseudo-labelled lesions into lesion-free volumes.
    Paste {
        /// Images the pseudo-labels were predicted on.
        #[arg(long)]
        unlabeled: PathBuf,
        /// Pseudo-labels (`<id>_label`), matched to images by id.
        #[arg(long)]
        pseudo: PathBuf,
        #[arg(long)]
        tumor_free: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        uses_pseudo: Option<usize>,
        #[arg(long)]
        uses_free: Option<usize>,
        /// Match lesion intensities to the target's mean before pasting.
        #[arg(long)]
        renormalize: bool,
    },
    /// Train one model per epoch budget and record validation curves.
    Train {
        #[arg(long)]
        prompt: PathBuf,
        #[arg(long)]
        validation: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Candidate budgets, e.g. 20,10,5.
        #[arg(long, value_delimiter = ',', num_args = 1)]
        budgets: Option<Vec<u32>>,
    },
    /// Pick the budget and epoch with the best validation Dice.
    Select {
        #[arg(long)]
        train_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 1)]
        budgets: Option<Vec<u32>>,
        /// Moving-average window applied to the curves first.
        #[arg(long)]
        smoothing: Option<usize>,
    },
    /// Segment every image in a directory.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Score predicted labels against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Earlier report.json for a paired t-test.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Continue training a model on a pasted fine-tuning set.
    Finetune {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<u32>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Re-run every command recorded in a manifest into a new directory.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dims3(dims: &[usize]) -> Result<[usize; 3]> {
    <[usize; 3]>::try_from(dims).map_err(|_| Error::Usage(format!("--dims needs 3 values, got {}", dims.len())))
}

impl Cli {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<(Invocation, RunConfig, PathBuf)> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path, self.preset)?,
            None => RunConfig::with_preset(self.preset.unwrap_or_default()),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        let (inv, out) = match &self.command {
            Command::Phantom { count, out, dims } => {
                if let Some(d) = dims {
                    cfg.phantom.dims = dims3(d)?;
                }
                (Invocation::Phantom { count: *count }, out.clone())
            }
            Command::Synth { task, count, phantom: _, input, out, dims } => {
                if let Some(d) = dims {
                    cfg.phantom.dims = dims3(d)?;
                }
                (Invocation::Synth { task: (*task).into(), count: *count, input: input.clone() }, out.clone())
            }
            Command::Paste { unlabeled, pseudo, tumor_free, out, uses_pseudo, uses_free, renormalize } => {
                if let Some(u) = uses_pseudo {
                    cfg.paste.uses_per_pseudo_label = *u;
                }
                if let Some(u) = uses_free {
                    cfg.paste.uses_per_tumor_free = *u;
                }
                if *renormalize {
                    cfg.paste.renormalize_intensity = true;
                }
                let inv = Invocation::Paste {
                    unlabeled: unlabeled.clone(),
                    pseudo: pseudo.clone(),
                    tumor_free: tumor_free.clone(),
                };
                (inv, out.clone())
            }
            Command::Train { prompt, validation, out, budgets } => {
                if let Some(b) = budgets {
                    cfg.sweep.budgets = b.clone();
                }
                (Invocation::Train { prompt: prompt.clone(), validation: validation.clone() }, out.clone())
            }
            Command::Select { train_dir, out, budgets, smoothing } => {
                if let Some(b) = budgets {
                    cfg.sweep.budgets = b.clone();
                }
                if smoothing.is_some() {
                    cfg.sweep.smoothing_window = *smoothing;
                }
                (Invocation::Select { train_dir: train_dir.clone() }, out.clone())
            }
            Command::Predict { model, input, out, threshold } => {
                if let Some(t) = threshold {
                    cfg.predict.threshold = *t;
                }
                (Invocation::Predict { model: model.clone(), input: input.clone() }, out.clone())
            }
            Command::Evaluate { pred, truth, out, baseline } => (
                Invocation::Evaluate { pred: pred.clone(), truth: truth.clone(), baseline: baseline.clone() },
                out.clone(),
            ),
            Command::Finetune { model, data, out, epochs, lr } => {
                if let Some(e) = epochs {
                    cfg.train.fine_tune_epochs = *e;
                }
                if let Some(lr) = lr {
                    cfg.train.fine_tune_lr = *lr;
                }
                (Invocation::Finetune { model: model.clone(), data: data.clone() }, out.clone())
            }
            Command::Replay { .. } => {
                return Err(Error::Usage("replay takes its configuration from the manifest".into()))
            }
        };
        cfg.train.seed = cfg.seed;
        cfg.phantom.seed = cfg.seed;
        cfg.validate().map_err(|e| match e {
            Error::Config(m) => Error::Usage(m),
            other => other,
        })?;
        Ok((inv, cfg, out))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Command::Replay { manifest, out } = &cli.command {
        if cli.workers == Some(0) {
            return Err(Error::Usage("--workers must be >= 1".into()));
        }
        return commands::replay(manifest, out, cli.workers);
    }
    let (inv, cfg, out) = cli.resolve()?;
    pipeline::with_workers(cfg.workers, || commands::execute(&inv, &cfg, &out))?
}

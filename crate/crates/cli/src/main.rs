//! `swat-lab`: train, evaluate and diagnose windowed-attention language
//! models from JSON experiment configs.
//!
//! Exit codes: 0 success, 2 validation, 3 numeric abort or failed check,
//! 4 I/O.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod output;

use config::Source;
use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "swat-lab",
    version,
    about = "Windowed-attention language model lab"
)]
struct Cli {
    /// Output root for run directories (overrides the config and $SWAT_LAB_OUTPUT).
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Experiment config (JSON).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Named preset; see `swat-lab presets`.
    #[arg(long)]
    pub preset: Option<String>,
    /// Override a leaf by dotted path, e.g. `--set model.window=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn is_given(&self) -> bool {
        self.config.is_some() || self.preset.is_some()
    }

    pub fn load(&self) -> Result<config::ExperimentConfig, CliError> {
        let source = match (&self.config, &self.preset) {
            (Some(p), _) => Source::File(p),
            (None, Some(n)) => Source::Preset(n),
            (None, None) => {
                return Err(CliError::validation("pass --config PATH or --preset NAME"))
            }
        };
        config::load(source, &self.overrides)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and write checkpoint, logs and manifest.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Also save a checkpoint every N steps.
        #[arg(long)]
        checkpoint_every: Option<usize>,
    },
    /// Perplexity over the (length × window) grid of the config's eval axes.
    EvalGrid {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train one model per configured regime and compare perplexity by length.
    CompareRegimes {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Attention-sink statistics, heatmaps and (sigmoid) density of a checkpoint.
    Diagnose {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Sequence length (defaults to the model window).
        #[arg(long)]
        seq_len: Option<usize>,
        #[arg(long, default_value_t = 32)]
        sequences: usize,
    },
    /// Small numeric demonstrations.
    #[command(subcommand)]
    Demo(DemoCommand),
    /// Finite-difference checks of every primitive and the full model loss.
    Gradcheck {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of consecutive seeds starting at the config seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Write the deterministic synthetic corpus.
    GenCorpus {
        #[arg(long, default_value_t = 200_000)]
        bytes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// List presets, or print one.
    Presets {
        #[arg(long)]
        show: Option<String>,
    },
}

#[derive(Subcommand, Debug)]
pub enum DemoCommand {
    /// Softmax of a score vector and the exact ratio law.
    Sparsity {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [1.5, 5.0, 2.4, 0.5, 1.3])]
        scores: Vec<f64>,
    },
    /// Monte-Carlo mean maximum of L normals against the extreme-value law.
    Evt {
        #[arg(long, value_delimiter = ',', default_values_t = [64usize, 256, 1024, 4096, 16384])]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 20_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Effective support of softmax against sigmoid weights.
    Density {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [1.5, 5.0, 2.4, 0.5, 1.3])]
        scores: Vec<f64>,
    },
}

#[derive(Subcommand, Debug)]
pub enum BenchCommand {
    /// Windowed inference cost N·ω·(1+δ), optionally with a timing sweep.
    Cost {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 2048)]
        n: usize,
        #[arg(long, default_value_t = 64)]
        window: usize,
        /// Use this δ instead of measuring it.
        #[arg(long)]
        delta: Option<f64>,
        /// Time streaming inference over several N and fit a line.
        #[arg(long)]
        sweep: bool,
        #[arg(long, value_delimiter = ',', default_values_t = [1000usize, 2000, 4000, 8000, 16000])]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = cli.output.as_deref();
    match cli.command {
        Command::Train {
            cfg,
            checkpoint_every,
        } => commands::train(&cfg, out, checkpoint_every),
        Command::EvalGrid { cfg, checkpoint } => commands::eval_grid(&cfg, out, &checkpoint),
        Command::CompareRegimes { cfg } => commands::compare_regimes(&cfg, out),
        Command::Diagnose {
            cfg,
            checkpoint,
            seq_len,
            sequences,
        } => commands::diagnose(&cfg, out, &checkpoint, seq_len, sequences),
        Command::Demo(d) => commands::demo(d, out),
        Command::Gradcheck { cfg, seeds } => commands::gradcheck(&cfg, out, seeds),
        Command::Bench(b) => commands::bench(b, out),
        Command::GenCorpus {
            bytes,
            seed,
            out: path,
        } => commands::gen_corpus(bytes, seed, &path),
        Command::Presets { show } => commands::presets(show.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(error::EXIT_VALIDATION as u8)
            } else {
                ExitCode::from(error::EXIT_OK as u8)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(error::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}

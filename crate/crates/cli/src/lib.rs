//! Batch front end for the lane-change pipeline.
//!
//! Every command reads one TOML run config (see [`config::RunConfig`]),
//! applies command-line overrides, writes its artifacts into the output
//! directory and leaves a `manifest-<command>.toml` next to them.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use lanechange::{Direction, LaneEncoding, ModelKind};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "lanechange", version, about = "Lane-change prediction pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic trajectory dataset.
    Synth {
        /// Synthesizer config (TOML).
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Detect lane changes and count neighbor scenarios.
    Ingest(RunArgs),
    /// Label the task events and export the samples.
    Label(RunArgs),
    /// Train the configured model on a seeded vehicle split.
    Train(RunArgs),
    /// Cross-validate the scheme and model sweep.
    Crossval {
        #[command(flatten)]
        run: RunArgs,
        /// Cross-validate this sample export instead of labeling the dataset.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Replay a model once per second over the held-out vehicles.
    Runtime {
        #[command(flatten)]
        run: RunArgs,
        /// Use a saved model instead of training one.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Render the reports in the output directory as Markdown.
    Report(RunArgs),
}

/// Run config plus flags that override its fields.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Run config (TOML). Without it the built-in defaults apply.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Trajectory CSV.
    #[arg(long, conflicts_with = "synth")]
    pub input: Option<PathBuf>,
    /// Synthesizer config to generate the data from.
    #[arg(long)]
    pub synth: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub direction: Option<Direction>,
    /// `LS1`..`LS4` or `tau<N>-gap<M>`.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub tau: Option<u32>,
    #[arg(long)]
    pub tau_g: Option<u32>,
    #[arg(long)]
    pub encoding: Option<LaneEncoding>,
    /// Model for train and runtime.
    #[arg(long)]
    pub model_kind: Option<ModelKind>,
    #[arg(long)]
    pub model_seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub seq_len: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Seed of the fold assignment and the train/test split.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Folds evaluated in parallel.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Comma-separated schemes for the sweep.
    #[arg(long, value_delimiter = ',')]
    pub schemes: Option<Vec<String>>,
    /// Comma-separated models for the sweep.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    /// Decision threshold for cross-validation.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Decision threshold for run-time prediction.
    #[arg(long)]
    pub runtime_threshold: Option<f64>,
    #[arg(long)]
    pub tau_a: Option<usize>,
    #[arg(long)]
    pub tau_c: Option<usize>,
    #[arg(long)]
    pub thres: Option<f64>,
    #[arg(long)]
    pub tau_p: Option<usize>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.data.input = Some(p.clone());
            cfg.data.synth = None;
        }
        if let Some(p) = &self.synth {
            cfg.data.synth = Some(p.clone());
            cfg.data.input = None;
        }
        set(&mut cfg.data.output_dir, self.out.clone());
        set(&mut cfg.task.direction, self.direction);
        if let Some(s) = &self.scheme {
            cfg.task.scheme = s.clone();
            cfg.task.tau = None;
            cfg.task.tau_g = None;
        }
        set_opt(&mut cfg.task.tau, self.tau);
        set_opt(&mut cfg.task.tau_g, self.tau_g);
        set(&mut cfg.task.encoding, self.encoding);
        set(&mut cfg.model.kind, self.model_kind);
        set(&mut cfg.model.seed, self.model_seed);
        set_opt(&mut cfg.model.hidden, self.hidden);
        set_opt(&mut cfg.model.seq_len, self.seq_len);
        set_opt(&mut cfg.model.learning_rate, self.learning_rate);
        set_opt(&mut cfg.model.epochs, self.epochs);
        set(&mut cfg.eval.k, self.k);
        set(&mut cfg.eval.seed, self.seed);
        set(&mut cfg.eval.workers, self.workers);
        set(&mut cfg.eval.test_fraction, self.test_fraction);
        set(&mut cfg.eval.schemes, self.schemes.clone());
        set(&mut cfg.eval.models, self.models.clone());
        set(&mut cfg.eval.threshold, self.threshold);
        set(&mut cfg.runtime.threshold, self.runtime_threshold);
        set(&mut cfg.runtime.tau_a, self.tau_a);
        set(&mut cfg.runtime.tau_c, self.tau_c);
        set(&mut cfg.runtime.thres, self.thres);
        set(&mut cfg.runtime.tau_p, self.tau_p);
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

/// Runs one command and returns what it prints on stdout.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Synth { config, out } => commands::cmd_synth(config, out),
        Command::Ingest(run) => commands::cmd_ingest(&run.resolve()?),
        Command::Label(run) => commands::cmd_label(&run.resolve()?),
        Command::Train(run) => commands::cmd_train(&run.resolve()?),
        Command::Crossval { run, samples } => {
            commands::cmd_crossval(&run.resolve()?, samples.as_deref())
        }
        Command::Runtime { run, model } => commands::cmd_runtime(&run.resolve()?, model.as_deref()),
        Command::Report(run) => commands::cmd_report(&run.resolve()?),
    }
}

//! Argument parsing and dispatch for the `hopforge` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

use crate::commands::{self, Split, Workspace};
use crate::config::{parse_hop_subset, CorpusSource, PipelineConfig};
use crate::error::{AppError, AppResult};
use crate::files::write_json;

#[derive(Debug, Parser)]
#[command(name = "hopforge", version, about = "Multi-hop query policy sampling, training and evaluation")]
pub struct Cli {
    /// Minimum level of the JSON log lines written to stderr.
    #[arg(long, global = true, default_value = "warn", env = "HOPFORGE_LOG")]
    pub log_level: LevelFilter,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Pipeline configuration (JSON). Defaults apply when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this value.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Keep only pairs from these hops, e.g. `1` or `1-2`.
    #[arg(long, value_parser = parse_hop_subset)]
    pub hop_subset: Option<(u32, u32)>,
}

impl Common {
    pub fn load(&self) -> AppResult<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        if let Some(subset) = self.hop_subset {
            config.sampling.hop_subset = Some(subset);
        }
        config.apply_env(|k| std::env::var(k).ok().filter(|v| !v.is_empty()));
        Ok(config)
    }

    fn workspace(&self) -> AppResult<Workspace> {
        Workspace::open(self.load()?, self.workers)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured synthetic corpus as documents.jsonl and questions.jsonl.
    GenCorpus {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Sample a preference dataset over the training questions.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Sample with this desk-policy checkpoint instead of the untrained policy.
        #[arg(long)]
        policy_checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Distill the best prompt, then run preference optimization.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Start from this checkpoint instead of zero weights.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Stop after distillation.
        #[arg(long)]
        skip_ipo: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Per-hop recall and average precision of a policy.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reward-diversity statistics of a sampled dataset, as JSON.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Measure how often a worse first hop ends better after two hops.
    AuditGreedy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        num_questions: usize,
    },
    /// Iterative sampling and training over question partitions.
    Iterate {
        #[command(flatten)]
        common: Common,
        /// Overrides trainer.num_iterations.
        #[arg(long)]
        iterations: Option<u32>,
    },
}

fn json_line<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("outputs are always serializable");
    s.push('\n');
    s
}

fn default_path(config: &PipelineConfig, given: &Option<PathBuf>, name: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| config.output_dir.join(name))
}

/// Runs one command and returns the summary to print on stdout.
pub fn run(cli: Cli) -> AppResult<String> {
    match cli.command {
        Command::GenCorpus { common, out_dir } => {
            let config = common.load()?;
            let CorpusSource::Synthetic(spec) = &config.corpus else {
                return Err(AppError::config("gen-corpus needs a synthetic corpus source"));
            };
            let dir = out_dir.unwrap_or_else(|| config.output_dir.clone());
            Ok(json_line(&commands::gen_corpus(spec, &dir)?))
        }
        Command::Sample { common, policy_checkpoint, out } => {
            let ws = common.workspace()?;
            let out = default_path(&ws.config, &out, "dataset.jsonl");
            Ok(json_line(&commands::sample(&ws, policy_checkpoint.as_deref(), &out)?))
        }
        Command::Train { common, dataset, init, skip_ipo, out, log } => {
            let ws = common.workspace()?;
            let out = default_path(&ws.config, &out, "checkpoint.json");
            let log = default_path(&ws.config, &log, "train_log.csv");
            Ok(json_line(&commands::train(&ws, &dataset, init.as_deref(), skip_ipo, &out, &log)?))
        }
        Command::Eval { common, checkpoint, split, out } => {
            let ws = common.workspace()?;
            let result = commands::eval(&ws, checkpoint.as_deref(), split)?;
            let name = format!("eval_{}.json", format!("{split:?}").to_lowercase());
            let out = default_path(&ws.config, &out, &name);
            write_json(&out, &result)?;
            Ok(result.table())
        }
        Command::Stats { dataset } => Ok(json_line(&commands::stats(&dataset)?)),
        Command::AuditGreedy { common, checkpoint, num_questions } => {
            let ws = common.workspace()?;
            Ok(json_line(&commands::audit_greedy(&ws, checkpoint.as_deref(), num_questions)?))
        }
        Command::Iterate { common, iterations } => {
            let mut config = common.load()?;
            if let Some(i) = iterations {
                config.trainer.num_iterations = i;
            }
            let ws = Workspace::open(config, common.workers)?;
            let dir = ws.config.output_dir.clone();
            let outputs = commands::iterate(&ws, Path::new(&dir))?;
            Ok(outputs.iter().map(json_line).collect())
        }
    }
}

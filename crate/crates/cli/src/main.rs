//! explicar command line: dataset stats, preprocessing, training,
//! evaluation, word-level explanations, and the end-to-end pipeline.
//!
//! Exit codes: 0 success, 2 validation error (bad input or arguments),
//! 3 runtime error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::Profile;

#[derive(Parser)]
#[command(
    name = "explicar",
    version,
    about = "Multilingual sentiment classification with frozen-layer fine-tuning and LIME explanations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report language and label distributions for a dataset file
    Stats {
        /// Dataset file (JSONL with text/label/language keys, or CSV)
        #[arg(long)]
        data: PathBuf,
        /// Output directory for counts and charts
        #[arg(long)]
        out: PathBuf,
    },
    /// Clean a dataset file with the standard text pipeline
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Optional TOML config overriding cleaning step flags
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fine-tune an encoder backend
    Train {
        /// Backend id (e.g. tiny-12, xlm-roberta-base) or checkpoint path
        #[arg(long)]
        model: String,
        /// Freeze plan: first8, none, or custom:<i>,...[,emb][,head]
        #[arg(long, default_value = "first8")]
        freeze: String,
        /// Directory containing train.jsonl and optional val.jsonl
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset file
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Path of the report JSON to write
        #[arg(long)]
        out: PathBuf,
    },
    /// Explain one prediction with word-level attributions
    Explain {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        text: String,
        /// positive|neutral|negative|predicted
        #[arg(long, default_value = "predicted")]
        class: String,
        /// Perturbation sample count (ignored when enumerating)
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// json|html|ansi
        #[arg(long, default_value = "json")]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run preprocess -> split -> train -> evaluate -> explain
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        /// desk (CI scale) or paper (full scale)
        #[arg(long)]
        profile: Option<String>,
        /// Output directory; overrides [pipeline].out_dir
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resolve and record the configuration without running
        #[arg(long)]
        dry_run: bool,
    },
    /// Render a comparison table from evaluation reports
    Compare {
        /// Repeatable name=path pair pointing at a report.json
        #[arg(long = "report")]
        reports: Vec<String>,
        /// Output directory for comparison.md / comparison.json
        #[arg(long)]
        out: PathBuf,
    },
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Stats { data, out } => commands::cmd_stats(&data, &out),
        Command::Preprocess { input, out, config } => {
            commands::cmd_preprocess(&input, &out, config.as_deref())
        }
        Command::Train { model, freeze, data, config, out } => {
            commands::cmd_train(&model, &freeze, &data, config.as_deref(), &out)
        }
        Command::Evaluate { checkpoint, data, out } => {
            commands::cmd_evaluate(&checkpoint, &data, &out)
        }
        Command::Explain { checkpoint, text, class, samples, seed, format, out } => {
            commands::cmd_explain(&checkpoint, &text, &class, samples, seed, &format, &out)
        }
        Command::Pipeline { config, profile, out, dry_run } => {
            let profile = profile.as_deref().map(Profile::parse).transpose()?;
            commands::cmd_pipeline(&config, profile, out, dry_run)
        }
        Command::Compare { reports, out } => {
            let pairs = reports
                .iter()
                .map(|spec| {
                    spec.split_once('=')
                        .map(|(name, path)| (name.to_string(), PathBuf::from(path)))
                        .ok_or_else(|| {
                            anyhow::Error::from(explicar_core::Error::Argument(format!(
                                "bad --report {spec:?}; expected name=path"
                            )))
                        })
                })
                .collect::<Result<Vec<_>>>()?;
            commands::cmd_compare(&pairs, &out)
        }
    }
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(core) = cause.downcast_ref::<explicar_core::Error>() {
            return if core.is_validation() { 2 } else { 3 };
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

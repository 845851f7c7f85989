use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use qamoe_cli::commands::{self, EvalOverrides, CHECKPOINT_FILE, DATASET_FILE};
use qamoe_cli::{exit_code, Protocol, RunConfig};
use qamoe_core::{ModalitySet, TrainMode, Variant};

/// Quality-aware mixture-of-experts on synthetic tri-modal data.
#[derive(Parser)]
#[command(name = "qamoe", version)]
struct Cli {
    /// INI run configuration; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset.
    Gen,
    /// Train a checkpoint.
    Train {
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TrainMode>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Evaluate a checkpoint under one protocol.
    Eval {
        /// I (missing modalities), II (noise) or III (mixed).
        #[arg(long)]
        protocol: Option<Protocol>,
        /// Available modalities for Protocol I, e.g. `t,a`.
        #[arg(long, value_parser = parse_set)]
        available: Option<ModalitySet>,
        /// Per-modality missing probability for Protocol I.
        #[arg(long)]
        eta: Option<f64>,
        /// Noise severity for Protocol II.
        #[arg(long)]
        lambda: Option<f64>,
        /// Also dump per-sample quality scores and router weights.
        #[arg(long)]
        gating: bool,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate one checkpoint over the (lambda, eta) grid.
    Grid {
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and score model variants on the mixed test distribution.
    Ablate {
        /// Variant name, or `all`. Repeatable.
        #[arg(long = "variant", default_value = "all")]
        variants: Vec<String>,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Compare analytic gradients with finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        draws: usize,
    },
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    TrainMode::parse(s).map_err(|e| e.to_string())
}

fn parse_set(s: &str) -> Result<ModalitySet, String> {
    ModalitySet::parse(s).map_err(|e| e.to_string())
}

fn parse_variants(names: &[String]) -> Result<Vec<Variant>> {
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            out.extend(Variant::ALL);
        } else {
            out.push(Variant::parse(n)?);
        }
    }
    Ok(out)
}

fn run(cli: Cli) -> Result<String> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    let out = match std::env::var_os("QAMOE_OUT") {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.out_dir.clone(),
    };
    let or_default =
        |p: Option<PathBuf>, name: &str| p.unwrap_or_else(|| Path::new(&out).join(name));

    match cli.command {
        Command::Gen => commands::gen(&cfg, &out),
        Command::Train { mode, dataset } => {
            commands::train_cmd(&cfg, &out, &or_default(dataset, DATASET_FILE), mode)
        }
        Command::Eval {
            protocol,
            available,
            eta,
            lambda,
            gating,
            dataset,
            checkpoint,
        } => {
            let o = EvalOverrides {
                protocol,
                available,
                eta,
                lambda,
                gating,
            };
            commands::eval_cmd(
                &cfg,
                &out,
                &or_default(dataset, DATASET_FILE),
                &or_default(checkpoint, CHECKPOINT_FILE),
                &o,
            )
        }
        Command::Grid {
            jobs,
            dataset,
            checkpoint,
        } => commands::grid_cmd(
            &cfg,
            &out,
            &or_default(dataset, DATASET_FILE),
            &or_default(checkpoint, CHECKPOINT_FILE),
            jobs.unwrap_or(cfg.jobs).max(1),
        ),
        Command::Ablate { variants, dataset } => commands::ablate_cmd(
            &cfg,
            &out,
            &or_default(dataset, DATASET_FILE),
            &parse_variants(&variants)?,
        ),
        Command::Gradcheck { draws } => commands::gradcheck_cmd(&out, cfg.seed, draws),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

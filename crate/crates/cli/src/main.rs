//! `radscan`: scan, train, evaluate, compare, predict, localize and serve.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use radscan_core::dataset::Split;
use radscan_core::modelzoo::Backbone;

use crate::config::{Overrides, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "radscan", version, about = "Musculoskeletal radiograph abnormality toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Dataset root holding train/ and valid/.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    #[arg(long, global = true)]
    split: Option<Split>,
    #[arg(long, global = true)]
    backbone: Option<Backbone>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Probability at or above which a study is called abnormal.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Parent directory for run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    port: Option<u16>,
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            root: self.root.clone(),
            split: self.split,
            backbone: self.backbone,
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            seed: self.seed,
            threshold: self.threshold,
            out: self.out.clone(),
            port: self.port,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the study census of a split.
    Scan {
        /// Both splits instead of the configured one.
        #[arg(long)]
        all: bool,
    },
    /// Train a backbone on the train split, validating on valid.
    Train,
    /// Evaluate a checkpoint on the configured split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Tabulate evaluation reports side by side.
    Compare {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Print one abnormality probability per image.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Render activation-map overlays for images called abnormal.
    Cam {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Score a split into a worklist and serve it over HTTP.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest CSV to score instead of scanning the split.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Print the effective configuration as JSON.
    Config,
    /// List the available backbones.
    Backbones,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::resolve(cli.global.config.as_deref(), &cli.global.overrides())?;
    match cli.command {
        Command::Scan { all } => print!("{}", commands::cmd_scan(&config, all)?),
        Command::Train => {
            let (dir, report) = commands::cmd_train(&config)?;
            println!("run directory: {}", dir.display());
            println!("validation kappa {:.3}, accuracy {:.3}", report.overall.kappa, report.overall.accuracy);
        }
        Command::Eval { checkpoint } => {
            let (dir, report) = commands::cmd_eval(&config, &checkpoint)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            eprintln!("report written to {}", dir.join(commands::REPORT_FILE).display());
        }
        Command::Compare { reports } => {
            let (dir, markdown) = commands::cmd_compare(&config, &reports)?;
            print!("{markdown}");
            eprintln!("tables written to {}", dir.display());
        }
        Command::Predict { checkpoint, images } => {
            for (path, p) in commands::cmd_predict(&checkpoint, &images)? {
                println!("{}\t{p:.6}", path.display());
            }
        }
        Command::Cam { checkpoint, images } => {
            let (dir, outcomes) = commands::cmd_cam(&config, &checkpoint, &images)?;
            for o in outcomes {
                let note = match &o.overlay {
                    Some(png) => png.display().to_string(),
                    None => "below threshold, no overlay".to_string(),
                };
                println!("{}\t{:.6}\t{note}", o.image.display(), o.probability);
            }
            eprintln!("run directory: {}", dir.display());
        }
        Command::Serve { checkpoint, manifest, host } => {
            let (dir, state, summary) = commands::prepare_service(&config, &checkpoint, manifest.as_deref())?;
            println!("scored {} studies ({} failed) into {}", summary.scored, summary.failed.len(), dir.display());
            commands::cmd_serve(state, &host, config.port)?;
        }
        Command::Config => println!("{}", config.to_json()),
        Command::Backbones => print!("{}", commands::backbones()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

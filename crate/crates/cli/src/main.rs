//! `misinfo`: run the detection pipeline stage by stage from one config file.

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use misinfo_core::ensemble::Strategy;
use misinfo_core::pipeline::{Run, RunConfig, RunOptions};
use misinfo_core::proxy::ProxyTaskKind;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "misinfo", version, about = "Misinformation detection over simulated reaction networks")]
struct Cli {
    /// TOML run configuration.
    #[arg(short, long, global = true, default_value = "misinfo.toml")]
    config: PathBuf,
    /// Use this run directory instead of `<output_dir>/run-<config hash>`.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Accept upstream artifacts produced under a different config.
    #[arg(long, global = true)]
    force: bool,
    /// Overrides `seeds.master`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

/// `all` or one name.
#[derive(Debug, Clone)]
enum Which<T> {
    All,
    One(T),
}

fn which<T: std::str::FromStr<Err = String>>(s: &str) -> Result<Which<T>, String> {
    if s == "all" {
        Ok(Which::All)
    } else {
        s.parse().map(Which::One)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split the dataset and generate interaction networks.
    Generate,
    /// Attach proxy-task explanations (sentiment, framing, propaganda, retrieval, stance, response or all).
    Annotate {
        #[arg(long, value_parser = which::<ProxyTaskKind>)]
        task: Which<ProxyTaskKind>,
    },
    /// Train one expert (vanilla, a proxy task, or all).
    Train {
        #[arg(long, value_parser = which::<ProxyTaskKind>)]
        expert: Which<ProxyTaskKind>,
    },
    /// Predict the test split with a trained expert.
    Predict {
        #[arg(long, value_parser = which::<ProxyTaskKind>)]
        expert: Which<ProxyTaskKind>,
    },
    /// Merge the experts with an LLM (vanilla, confidence, selective or all).
    Ensemble {
        #[arg(long, value_parser = which::<Strategy>)]
        strategy: Which<Strategy>,
    },
    /// Metrics, calibration, comment-removal curve and graph indicators.
    Evaluate,
    /// Graph indicators of the generated networks only.
    Stats,
    /// Every stage in order.
    Pipeline,
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::load(&cli.config).with_context(|| format!("loading {}", cli.config.display()))?;
    if let Some(seed) = cli.seed {
        config.seeds.master = seed;
    }
    if let Some(dir) = cli.output_dir {
        config.output_dir = dir;
    }
    let mut run = Run::open(config, RunOptions { force: cli.force, run_dir: cli.run_dir })?;
    match cli.command {
        Command::Generate => run.generate()?,
        Command::Annotate { task } => match task {
            Which::All => ProxyTaskKind::ANNOTATED.into_iter().try_for_each(|k| run.annotate(k))?,
            Which::One(k) => run.annotate(k)?,
        },
        Command::Train { expert } => match expert {
            Which::All => ProxyTaskKind::ALL.into_iter().try_for_each(|k| run.train(k))?,
            Which::One(k) => run.train(k)?,
        },
        Command::Predict { expert } => match expert {
            Which::All => ProxyTaskKind::ALL.into_iter().try_for_each(|k| run.predict(k))?,
            Which::One(k) => run.predict(k)?,
        },
        Command::Ensemble { strategy } => match strategy {
            Which::All => run.config().ensemble.strategies.clone().into_iter().try_for_each(|s| run.ensemble(s))?,
            Which::One(s) => run.ensemble(s)?,
        },
        Command::Evaluate => run.evaluate()?,
        Command::Stats => run.stats()?,
        Command::Pipeline => run.pipeline()?,
    }
    println!("{}", run.dir().display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use erasure_fcs_cli::{execute, write_tables, Command, Engine, ExperimentConfig, OUT_DIR_ENV};

#[derive(Parser)]
#[command(
    name = "erasure-fcs",
    version,
    about = "Heat statistics of slow erasure protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; falls back to $ERASURE_FCS_OUT, then [output].dir,
    /// then ./results.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for independent grid cells.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,

    /// Overrides [run].engine.
    #[arg(long, global = true, value_enum)]
    engine: Option<Engine>,
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let path = cli.config.context("--config <path> is required")?;
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let mut config = ExperimentConfig::from_toml(&text)?;
    if let Some(engine) = cli.engine {
        config.run.engine = engine;
    }
    config.validate()?;
    let dir = cli
        .out
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let tables = execute(cli.command, &config, cli.workers)?;
    Ok(write_tables(&dir, cli.command.name(), &config, &tables)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::FAILURE
        }
    }
}

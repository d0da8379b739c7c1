//! `slatpaint` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime error.

mod commands;
mod config;

use clap::{Parser, ValueEnum};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0:#}")]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn config(msg: impl std::fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<slatpaint::Error> for CliError {
    fn from(e: slatpaint::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    GenData,
    Train,
    Generate,
    Inpaint,
    Bench,
    Ablate,
    Render,
}

#[derive(Debug, Parser)]
#[command(name = "slatpaint", about = "Voxel inpainting by seed optimization of a two-stage flow generator")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Global seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Inpainting method (inpaint, bench) or ablation variant (ablate).
    #[arg(long)]
    method: Option<String>,
}

/// Load, override, validate and snapshot a config, then run.
fn run_with<C: RunConfig>(cli: &Cli, text: &str, exec: impl FnOnce(&C, &Path) -> Result<(), CliError>) -> Result<(), CliError> {
    let mut cfg: C = config::parse(text)?;
    let base = cli.config.parent().map(Path::to_path_buf).unwrap_or_default();
    cfg.resolve_paths(&base);
    if let Some(out) = &cli.out {
        *cfg.out_mut() = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(m) = &cli.method {
        cfg.set_method(m)?;
    }
    cfg.validate()?;
    for p in cfg.inputs() {
        if !p.is_file() {
            return Err(CliError::config(format!("input file {} does not exist", p.display())));
        }
    }
    let out = cfg.out_mut().clone();
    std::fs::create_dir_all(&out)?;
    let resolved = serde_json::to_string_pretty(&cfg).map_err(anyhow::Error::from)?;
    std::fs::write(out.join("resolved_config.json"), resolved + "\n")?;
    exec(&cfg, &out)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", cli.config.display())))?;
    match cli.command {
        Command::GenData => run_with(cli, &text, commands::gen_data),
        Command::Train => run_with(cli, &text, commands::train),
        Command::Generate => run_with(cli, &text, commands::generate),
        Command::Inpaint => run_with(cli, &text, commands::inpaint),
        Command::Bench => run_with(cli, &text, commands::bench),
        Command::Ablate => run_with(cli, &text, commands::ablate),
        Command::Render => run_with(cli, &text, commands::render),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slatpaint: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

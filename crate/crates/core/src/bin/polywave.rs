use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use polywave::config::parse_config;
use polywave::runner::{configure_threads, run, summary_line, Subcommand};
use polywave::Backend;

#[derive(Clone, Copy, ValueEnum)]
enum Command {
    LinearEig,
    NonresScan,
    FixedPoint,
    Isoenergetic,
    Verify,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Series,
    Diag,
}

/// Quasi-periodic solutions of the nonlinear polyharmonic equation.
#[derive(Parser)]
#[command(name = "polywave", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides `numerics.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `numerics.backend`.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = match cli.command {
        Command::LinearEig => Subcommand::LinearEig,
        Command::NonresScan => Subcommand::NonresScan,
        Command::FixedPoint => Subcommand::FixedPoint,
        Command::Isoenergetic => Subcommand::Isoenergetic,
        Command::Verify => Subcommand::Verify,
    };
    let fail = |e: polywave::Error| {
        eprintln!("polywave: {e}");
        ExitCode::from(e.exit_code() as u8)
    };
    if let Err(e) = configure_threads() {
        return fail(e);
    }
    let text = match std::fs::read_to_string(&cli.config) {
        Ok(t) => t,
        Err(e) => return fail(e.into()),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    if let Some(seed) = cli.seed {
        cfg.ctx.seed = seed;
        cfg.echo.insert("numerics.seed".into(), seed.to_string());
    }
    if let Some(b) = cli.backend {
        cfg.ctx.backend = match b {
            BackendArg::Series => Backend::Series,
            BackendArg::Diag => Backend::Diag,
        };
        cfg.echo.insert("numerics.backend".into(), format!("{:?}", cfg.ctx.backend).to_lowercase());
    }
    match run(cmd, &cfg, &cli.out) {
        Ok(m) => {
            println!("{}", summary_line(&m));
            ExitCode::from(m.exit_code as u8)
        }
        Err(e) => fail(e),
    }
}

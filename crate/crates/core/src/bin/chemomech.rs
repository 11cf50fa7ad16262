use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use chemomech::cli_io::{execute, init_threads, Mode, Outcome, Overrides};

#[derive(Parser)]
#[command(name = "chemomech", version, about = "Chemo-mechanical diffusion in deforming elastic bodies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML problem description
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides CHEMOMECH_OUT_DIR and the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides the config)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the static energy under a mass constraint
    Static(Common),
    /// Integrate the coupled Cahn-Hilliard elastodynamics
    Dynamic(Common),
    /// Integrate with local Allen-Cahn relaxation instead of diffusion
    AllenCahn(Common),
    /// Measure phase velocities of small standing waves
    Dispersion(Common),
    /// Derivative and reference-solver consistency checks
    Check(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match cli.command {
        Command::Static(c) => (Mode::Static, c),
        Command::Dynamic(c) => (Mode::Dynamic, c),
        Command::AllenCahn(c) => (Mode::AllenCahn, c),
        Command::Dispersion(c) => (Mode::Dispersion, c),
        Command::Check(c) => (Mode::Check, c),
    };
    if let Err(e) = init_threads() {
        eprintln!("error[{}]: {e}", e.class());
        return ExitCode::from(e.exit_code() as u8);
    }
    let report = execute(mode, &common.config, &Overrides { out_dir: common.out, seed: common.seed });
    match &report.outcome {
        Outcome::Success => {
            println!("{}", serde_json::to_string_pretty(&report.summary).unwrap_or_default());
        }
        Outcome::Failure { class, message, .. } => eprintln!("error[{class}]: {message}"),
    }
    ExitCode::from(report.exit_code() as u8)
}

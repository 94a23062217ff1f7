use std::path::PathBuf;

use clap::{Parser, Subcommand};

use teleop_core::cli::{cmd_certify, cmd_run, cmd_suite, RunConfig};

#[derive(Parser)]
#[command(
    name = "teleop",
    about = "Certify gains and simulate ISS bilateral teleoperation with and without delays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the scenario's gains against the stability conditions.
    Certify {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Certify, simulate and analyze one scenario.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the seeds of randomized delay profiles.
        #[arg(long)]
        seed: Option<u64>,
        /// Stop after certification.
        #[arg(long)]
        certify_only: bool,
        /// Write the trace but skip the trajectory checks.
        #[arg(long)]
        skip_analysis: bool,
    },
    /// Execute a predefined scenario matrix (acceptance, sweep-delay,
    /// sweep-gains). Worker count is bounded by TELEOP_WORKERS.
    Suite {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Certify { scenario, out } => cmd_certify(&RunConfig {
            scenario: Some(scenario),
            out_dir: out,
            seed: None,
            certify_only: true,
            skip_analysis: false,
            suite: None,
        }),
        Command::Run {
            scenario,
            out,
            seed,
            certify_only,
            skip_analysis,
        } => cmd_run(&RunConfig {
            scenario: Some(scenario),
            out_dir: out,
            seed,
            certify_only,
            skip_analysis,
            suite: None,
        }),
        Command::Suite { suite, out, seed } => cmd_suite(&RunConfig {
            scenario: None,
            out_dir: out,
            seed,
            certify_only: false,
            skip_analysis: false,
            suite: Some(suite),
        }),
    };
    std::process::exit(code);
}

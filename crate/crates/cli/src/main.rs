use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dunkl_entropy_cli::{run, Command, Invocation, Status};

#[derive(Parser)]
#[command(name = "dunkl-entropy", version, about = "Cubature, h-harmonic kernels and entropy bounds for Dunkl-weighted Sobolev classes")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; without it the JSON result goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write `<command>.csv`.
    #[arg(long, global = true)]
    csv: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Maximal separated point sets and the cap-measure model.
    Nodes,
    /// Solve and serialize a positive cubature rule.
    Cubature,
    /// Marcinkiewicz–Zygmund norm-equivalence brackets.
    Mz,
    /// Kernel tables and operator identities.
    Kernel,
    /// Sweep of Σλ^{−β} / n^{(d−1)(1+β)}.
    Lemma31,
    /// Entropy brackets of finite-dimensional balls.
    BallEntropy,
    /// Upper bound along the n-grid.
    SobolevUpper,
    /// Bump-system lower bound for small n.
    SobolevLower,
    /// Log-log rate regression of the upper bound.
    Rate,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Nodes => Command::Nodes,
            Sub::Cubature => Command::Cubature,
            Sub::Mz => Command::Mz,
            Sub::Kernel => Command::Kernel,
            Sub::Lemma31 => Command::Lemma31,
            Sub::BallEntropy => Command::BallEntropy,
            Sub::SobolevUpper => Command::SobolevUpper,
            Sub::SobolevLower => Command::SobolevLower,
            Sub::Rate => Command::Rate,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("invalid configuration: --config <path> is required");
        return ExitCode::from(Status::InvalidConfig as u8);
    };
    let inv = Invocation { command: cli.command.into(), config, seed: cli.seed, out: cli.out, csv: cli.csv };
    let report = run(&inv);
    if report.written.is_empty() && !report.json.is_empty() {
        print!("{}", report.json);
    }
    for path in &report.written {
        eprintln!("wrote {}", path.display());
    }
    if let Some(m) = &report.message {
        eprintln!("{m}");
    }
    ExitCode::from(report.status as u8)
}

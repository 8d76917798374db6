use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hadamard_core::cli::{self, Command};
use hadamard_core::config::RunConfig;

#[derive(Parser)]
#[command(name = "hadamard", version, about = "Parametrix construction and Hadamard state checks on a periodic grid")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Run directory (created if missing)
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Sub {
    /// Sample the model coefficients and check the metric reduction
    Reduce(Common),
    /// Build the parametrix and write the bundle cache
    Parametrix(Common),
    /// Hadamard family and pure-state checks on the cached bundle; exports states
    State(Common),
    /// Exact identities, smoothing residuals, oracle comparison, splitting
    Verify(Common),
    /// Vacuum and KMS comparison on a static model
    Static(Common),
    /// Partition-of-unity gluing on the cached bundle
    Glue(Common),
    /// Flow, Egorov and factorization checks
    Egorov(Common),
    /// Oracle comparison over truncations and grid sizes
    Sweep(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Sub::Reduce(c) => (Command::Reduce, c),
        Sub::Parametrix(c) => (Command::Parametrix, c),
        Sub::State(c) => (Command::State, c),
        Sub::Verify(c) => (Command::Verify, c),
        Sub::Static(c) => (Command::Static, c),
        Sub::Glue(c) => (Command::Glue, c),
        Sub::Egorov(c) => (Command::Egorov, c),
        Sub::Sweep(c) => (Command::Sweep, c),
    };
    let mut cfg = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    match cli::run(cmd, &cfg, &common.out) {
        Ok(report) => {
            for r in report.failures() {
                eprintln!("FAIL {}: {:?} {} {:e}", r.check_id, r.value, r.relation.symbol(), r.threshold);
            }
            for e in &report.errors {
                eprintln!("ERROR {e}");
            }
            let passed = report.rows.iter().filter(|r| r.pass).count();
            println!("{}: {passed}/{} checks passed", cmd.name(), report.rows.len());
            if report.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

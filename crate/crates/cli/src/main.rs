use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acim_core::artifacts::write_artifacts;
use acim_core::config::ExperimentConfig;
use acim_core::experiments::{self, Command};
use acim_core::replication::{replicate, ReplicationBudget};
use acim_core::AcimError;
use clap::{Args, Parser, Subcommand, ValueEnum};

const EXIT_FAILED_ROWS: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Seed for `replicate-paper` when none is given.
const DEFAULT_REPLICATION_SEED: u64 = 20240917;

#[derive(Parser)]
#[command(name = "acim", version, about = "Invariant densities for maps with an indifferent fixed point")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to the configuration's output_dir, then ./acim-out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Budget {
    Full,
    Tiny,
}

#[derive(Subcommand)]
enum Cmd {
    /// Escape-time tails and the finite / sigma-finite verdict.
    Classify(RunArgs),
    /// Ulam matrix, induced density and its extension into the region.
    Density(RunArgs),
    /// Escape-time level and tail volumes.
    InduceStats(RunArgs),
    /// Backward-orbit exponent fits.
    Asymptotics(RunArgs),
    /// Quasi-Holder seminorms and the empirical Lasota-Yorke fit.
    Seminorm(RunArgs),
    /// Sampled checks of the expansion and overlap assumptions.
    Audit(RunArgs),
    /// Run all acceptance criteria and write a summary table.
    ReplicatePaper {
        #[arg(long, value_enum, default_value = "full")]
        budget: Budget,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "acim-out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::ReplicatePaper { budget, seed, out } => return replicate_paper(budget, seed, &out),
        Cmd::Classify(a) => (Command::Classify, a),
        Cmd::Density(a) => (Command::Density, a),
        Cmd::InduceStats(a) => (Command::InduceStats, a),
        Cmd::Asymptotics(a) => (Command::Asymptotics, a),
        Cmd::Seminorm(a) => (Command::Seminorm, a),
        Cmd::Audit(a) => (Command::Audit, a),
    };
    run(command, &args)
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig, AcimError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| AcimError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| AcimError::Config(e.to_string()))?;
    if let (Some(seed), Some(obj)) = (args.seed, value.as_object_mut()) {
        obj.insert("seed".into(), seed.into());
    }
    serde_json::from_value(value).map_err(|e| AcimError::Config(e.to_string()))
}

fn run(command: Command, args: &RunArgs) -> ExitCode {
    let config = load_config(args);
    let out = args
        .out
        .clone()
        .or_else(|| config.as_ref().ok().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("acim-out"));
    let result = config.as_ref().map_err(Clone::clone).and_then(|c| experiments::run(c, command));
    match result {
        Ok(artifacts) => {
            let written = write_artifacts(&out, &artifacts).and_then(|paths| {
                write_errors(&out, command, config.as_ref().ok(), None)?;
                Ok(paths)
            });
            match written {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&out, command, config.as_ref().ok(), e),
            }
        }
        Err(e) => fail(&out, command, config.as_ref().ok(), e),
    }
}

fn exit_code(e: &AcimError) -> u8 {
    if e.is_validation() {
        EXIT_VALIDATION
    } else {
        EXIT_NUMERICAL
    }
}

fn fail(out: &Path, command: Command, config: Option<&ExperimentConfig>, e: AcimError) -> ExitCode {
    eprintln!("acim {}: {e}", command.name());
    if let Err(w) = write_errors(out, command, config, Some(&e)) {
        eprintln!("acim {}: could not write errors.json: {w}", command.name());
    }
    ExitCode::from(exit_code(&e))
}

/// errors.json lists the failures of the last run (empty on success).
fn write_errors(
    out: &Path,
    command: Command,
    config: Option<&ExperimentConfig>,
    error: Option<&AcimError>,
) -> Result<(), AcimError> {
    let errors: Vec<serde_json::Value> = error
        .map(|e| {
            serde_json::json!({
                "kind": if e.is_validation() { "validation" } else { "numerical" },
                "message": e.to_string(),
                "exit_code": exit_code(e),
            })
        })
        .into_iter()
        .collect();
    let doc = serde_json::json!({
        "command": command.name(),
        "config_hash": config.map(|c| c.hash()),
        "seed": config.map(|c| c.seed),
        "errors": errors,
    });
    std::fs::create_dir_all(out)?;
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("json");
    bytes.push(b'\n');
    std::fs::write(out.join("errors.json"), bytes)?;
    Ok(())
}

fn replicate_paper(budget: Budget, seed: Option<u64>, out: &Path) -> ExitCode {
    let budget = match budget {
        Budget::Full => ReplicationBudget::full(),
        Budget::Tiny => ReplicationBudget::tiny(),
    };
    let summary = replicate(&budget, seed.unwrap_or(DEFAULT_REPLICATION_SEED), |row| {
        println!("{}", row.summary_line());
    });
    match write_artifacts(out, &summary.artifacts()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
        }
        Err(e) => {
            eprintln!("acim replicate-paper: {e}");
            return ExitCode::from(EXIT_NUMERICAL);
        }
    }
    let failed = summary.rows.iter().filter(|r| !r.pass).count();
    if failed == 0 {
        println!("all {} criteria pass", summary.rows.len());
        ExitCode::SUCCESS
    } else {
        println!("{failed} of {} criteria fail", summary.rows.len());
        ExitCode::from(EXIT_FAILED_ROWS)
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relaystab::{oracle_check, run_preset, run_scenario, CliError, RunReport};

#[derive(Parser)]
#[command(name = "relaystab", version, about = "Stability regions and delays of cooperative relaying schemes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in experiment.
    Preset {
        id: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare the optimiser with the grid oracle on a scenario.
    OracleCheck { scenario: PathBuf },
}

fn report(r: RunReport) -> Result<(), CliError> {
    println!("wrote {} files to {}", r.files.len(), r.out_dir.display());
    if r.solver_failures > 0 {
        return Err(CliError::Solver(format!("{} point(s) without a feasible solution", r.solver_failures)));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Preset { id, out, seed } => run_preset(&id, &out, seed).and_then(report),
        Command::Run { scenario, out } => run_scenario(&scenario, &out).and_then(report),
        Command::OracleCheck { scenario } => oracle_check(&scenario).and_then(|rows| {
            println!("w\tweights\tfpp_sca\toracle\tratio\tstatus");
            for r in &rows {
                println!(
                    "{:?}\t{:?}\t{}\t{:.6}\t{}\t{}",
                    r.w,
                    r.weights,
                    r.fpp_objective.map_or("-".into(), |f| format!("{f:.6}")),
                    r.oracle_objective,
                    r.ratio.map_or("-".into(), |x| format!("{x:.4}")),
                    r.status.label()
                );
            }
            let bad = rows.iter().filter(|r| !r.ok()).count();
            if bad > 0 {
                return Err(CliError::Solver(format!("{bad} of {} point(s) below the oracle ratio", rows.len())));
            }
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

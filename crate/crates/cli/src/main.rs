use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twoscale_hj_cli::commands::{self, SolveKind};
use twoscale_hj_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "twoscale-hj", version, about = "Two-scale Hamilton-Jacobi homogenization experiments")]
struct Cli {
    /// Config file (built-in defaults when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Solver tolerance for cell and macroscopic solves.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate H^L, H^R, H^M and the E0 curves.
    HamiltonianTable,
    /// Compute the flux limiters per p2.
    FluxLimiters,
    /// Solve one macroscopic problem.
    Solve {
        #[arg(long, default_value = "flat")]
        kind: SolveKind,
    },
    /// Error-vs-scale sweeps.
    Converge,
    /// Run the acceptance suite.
    Acceptance,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = cli.out {
        cfg.out_dir = out;
    }
    if let Some(tol) = cli.tol {
        cfg.ergodic_tol = tol;
        cfg.solve_tol = tol;
    }
    cfg.validate()?;
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Config {
                key: "--jobs".into(),
                message: e.to_string(),
            })?;
    }
    let out = cfg.out_dir.clone();
    let manifest = match cli.command {
        Command::HamiltonianTable => commands::hamiltonian_table(&cfg, &out),
        Command::FluxLimiters => commands::flux_limiters(&cfg, &out),
        Command::Solve { kind } => commands::solve(&cfg, &out, kind),
        Command::Converge => commands::converge(&cfg, &out),
        Command::Acceptance => {
            let r = commands::acceptance(&cfg, &out);
            if let Ok(text) = std::fs::read_to_string(out.join("acceptance.txt")) {
                print!("{}", text.lines().take_while(|l| !l.is_empty()).map(|l| format!("{l}\n")).collect::<String>());
            }
            r
        }
    }?;
    for check in manifest.checks.iter().filter(|c| !c.pass) {
        eprintln!("check failed: {} = {} (limit {})", check.label, check.value, check.limit);
    }
    for d in &manifest.diagnostics {
        eprintln!("{d}");
    }
    println!("wrote {} artifact(s) to {}", manifest.artifacts.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

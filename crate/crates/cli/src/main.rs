use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use linop_pep::sdp::DEFAULT_TOLERANCE;
use linop_pep_cli::config::ExperimentConfig;
use linop_pep_cli::instance::reconstruct_point;
use linop_pep_cli::output::{format_number, write_csv, write_outputs};
use linop_pep_cli::run::{run_points, run_sweep};
use linop_pep_cli::steps::{optimal_steps, write_steps};
use linop_pep_cli::verify::verify_conjecture;
use linop_pep_cli::Result;

#[derive(Parser)]
#[command(
    name = "linop-pep",
    version,
    about = "Worst-case analysis of first-order methods"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Solver tolerance; overrides the configuration.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve grid points and print the rows as CSV.
    Solve {
        /// Only this grid point.
        #[arg(long)]
        point: Option<usize>,
    },
    /// Solve the whole grid and write CSV and plot data.
    Sweep,
    /// Compare every grid point with the conjectured closed form.
    VerifyConjecture,
    /// Recover and export the worst-case instance of one grid point.
    Reconstruct {
        #[arg(long)]
        point: usize,
    },
    /// Optimal steps of every gradient curve in the grid.
    OptimalStep,
}

fn run(cli: Cli) -> Result<bool> {
    let path = cli
        .config
        .ok_or_else(|| linop_pep_cli::CliError::Config("--config is required".into()))?;
    let config = ExperimentConfig::load(&path)?;
    let tol = cli.tol.or(config.backend.tol).unwrap_or(DEFAULT_TOLERANCE);
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    match cli.command {
        Command::Solve { point } => {
            let points = config.points()?;
            let selected = match point {
                Some(k) => vec![points
                    .get(k)
                    .cloned()
                    .ok_or_else(|| linop_pep_cli::CliError::Config(format!("no point {k}")))?],
                None => points,
            };
            let rows = run_points(&selected, tol, jobs)?;
            write_csv(&rows, std::io::stdout().lock())?;
            Ok(rows.iter().all(|r| r.error.is_none()))
        }
        Command::Sweep => {
            let rows = run_sweep(&config, tol, jobs)?;
            for path in write_outputs(&config, &rows, &cli.out)? {
                println!("wrote {}", path.display());
            }
            let failed = rows.iter().filter(|r| r.value.is_none()).count();
            println!("{} points, {failed} without a value", rows.len());
            Ok(true)
        }
        Command::VerifyConjecture => {
            let report = verify_conjecture(&config, tol, jobs)?;
            for e in &report.entries {
                println!(
                    "point {}: sdp {} closed form {} diff {}{}",
                    e.row.index,
                    e.row.value.map_or("-".into(), format_number),
                    e.closed_form.map_or("-".into(), format_number),
                    e.diff.map_or("-".into(), format_number),
                    if e.lower_bound_holds() {
                        ""
                    } else {
                        " (lower bound violated)"
                    },
                );
            }
            println!("{}", report.summary());
            Ok(report.passed())
        }
        Command::Reconstruct { point } => {
            let report = reconstruct_point(&config, point, tol, Some(&cli.out))?;
            println!("{}", report.summary());
            if let Some(p) = &report.path {
                println!("wrote {}", p.display());
            }
            Ok(report.relative_gap <= linop_pep::reconstruct::REPLAY_TOLERANCE)
        }
        Command::OptimalStep => {
            let rows = optimal_steps(&config)?;
            std::fs::create_dir_all(&cli.out)?;
            let path = cli.out.join(format!("{}_optimal_step.csv", config.name));
            write_steps(&rows, std::fs::File::create(&path)?)?;
            write_steps(&rows, std::io::stdout().lock())?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use moltrack::config::{ConvergenceStudyConfig, RunConfig};
use moltrack::output::{fmt_f64, write_run, Summary};
use moltrack::problems::{build, final_errors};
use moltrack::time_loop::run;
use moltrack::verify::{format_table, run_suite, Suite};
use moltrack::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "moltrack",
    version,
    about = "Implicit shock tracking with DG and DIRK time stepping"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one problem to its final time and write the outputs.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace a config entry, as `key=value`; repeatable.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Temporal convergence study of the advection benchmark.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run a built-in self-check suite: fluxes, jacobians, dirk, optimizer or mesh.
    Verify { suite: String },
}

enum Failure {
    Config(String),
    Solver(String),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::Io(_) | Error::UnknownScheme(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Solver(other.to_string()),
        }
    }
}

fn read_config(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

fn cmd_run(
    config: &Path,
    overrides: &[String],
    output_dir: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut cfg = RunConfig::parse(&read_config(config)?, overrides)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let setup = build(&cfg)?;
    let start = Instant::now();
    let outcome = run(&setup);
    let wall = start.elapsed().as_secs_f64();
    let record = &outcome.record;
    let errors = if outcome.error.is_none() {
        final_errors(cfg.problem, &setup, record)
    } else {
        None
    };
    let iterations: Vec<usize> = record
        .stage_reports()
        .map(|(_, _, r)| r.iterations)
        .collect();
    let last = record.last();
    let summary = Summary {
        problem: cfg.problem.to_string(),
        scheme: cfg.scheme.to_string(),
        completed_steps: record.snapshots.len().saturating_sub(1),
        requested_steps: cfg.n_steps,
        final_time: last.map_or(0.0, |s| s.t),
        all_stages_converged: outcome.error.is_none()
            && record.stage_reports().all(|(_, _, r)| r.converged),
        total_sqp_iterations: iterations.iter().sum(),
        max_stage_iterations: iterations.iter().copied().max().unwrap_or(0),
        final_shock_positions: last.map(|s| s.shock_positions.clone()).unwrap_or_default(),
        l1_solution_error: errors
            .map(|e| e.l1_solution_error)
            .filter(|v| v.is_finite()),
        shock_location_error: errors.map(|e| e.shock_location_error),
        wall_time_seconds: wall,
        error: outcome.error.as_ref().map(|e| e.to_string()),
    };
    write_run(
        &cfg.output_dir,
        &setup.disc,
        record,
        &summary,
        &cfg.to_text(),
    )?;
    println!(
        "{} {}: {} of {} steps, {} SQP iterations, shock at {:?}",
        summary.problem,
        summary.scheme,
        summary.completed_steps,
        summary.requested_steps,
        summary.total_sqp_iterations,
        summary.final_shock_positions
    );
    if let Some(e) = summary.shock_location_error {
        println!("shock location error {e:.3e}");
    }
    if let Some(e) = summary.l1_solution_error {
        println!("L1 solution error {e:.3e}");
    }
    match outcome.error {
        Some(e) => Err(Failure::Solver(e.to_string())),
        None => Ok(()),
    }
}

fn cmd_convergence(
    config: &Path,
    overrides: &[String],
    output_dir: Option<PathBuf>,
) -> Result<(), Failure> {
    let mut study = ConvergenceStudyConfig::parse(&read_config(config)?, overrides)?;
    if let Some(dir) = output_dir {
        study.output_dir = dir;
    }
    let mut table = String::from("scheme,n_steps,dt,l1_error,shock_error,observed_order\n");
    for &scheme in &study.schemes {
        let mut previous: Option<(f64, f64)> = None;
        for &n in &study.step_counts {
            let cfg = study.run_config(scheme, n);
            let setup = build(&cfg)?;
            let outcome = run(&setup);
            if let Some(e) = outcome.error {
                return Err(e.into());
            }
            let m = final_errors(cfg.problem, &setup, &outcome.record)
                .ok_or_else(|| Failure::Solver("no reference solution".into()))?;
            let order = previous.map_or(String::new(), |(l1, _)| {
                fmt_f64((l1 / m.l1_solution_error).log2())
            });
            table.push_str(&format!(
                "{scheme},{n},{},{},{},{order}\n",
                fmt_f64(setup.dt()),
                fmt_f64(m.l1_solution_error),
                fmt_f64(m.shock_location_error)
            ));
            println!(
                "{scheme} n_steps={n} l1={:.3e} shock={:.3e}",
                m.l1_solution_error, m.shock_location_error
            );
            previous = Some((m.l1_solution_error, m.shock_location_error));
        }
    }
    fs::create_dir_all(&study.output_dir).map_err(Error::from)?;
    fs::write(study.output_dir.join("convergence.csv"), table).map_err(Error::from)?;
    Ok(())
}

fn cmd_verify(suite: &str) -> Result<(), Failure> {
    let parsed: Suite = suite.parse().map_err(Failure::Config)?;
    let checks = run_suite(parsed).map_err(|e| Failure::Verify(e.to_string()))?;
    print!("{}", format_table(suite, &checks));
    if checks.iter().all(|c| c.passed()) {
        Ok(())
    } else {
        Err(Failure::Verify(format!(
            "suite `{suite}` has failing checks"
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            overrides,
            output_dir,
        } => cmd_run(&config, &overrides, output_dir),
        Command::Convergence {
            config,
            overrides,
            output_dir,
        } => cmd_convergence(&config, &overrides, output_dir),
        Command::Verify { suite } => cmd_verify(&suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(EXIT_SOLVER)
        }
        Err(Failure::Verify(msg)) => {
            eprintln!("verification failure: {msg}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}

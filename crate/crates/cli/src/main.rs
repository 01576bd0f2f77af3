//! `nodal` — load declarative model files, run structural checks, solve the
//! steady state, and sweep ramped boundary conditions.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand, ValueEnum};

use nodal_core::expr::Binding;
use nodal_core::model::structural_check;
use nodal_core::solve::{newton_solve, sweep};

use nodal_cli::build::{build_system, BuiltSystem};
use nodal_cli::document::load_model;
use nodal_cli::report;

#[derive(Parser)]
#[command(
    name = "nodal",
    version,
    about = "Component-based steady-state system solver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a model file and report structural well-posedness
    Check { file: PathBuf },
    /// Solve the steady state and print every variable
    Solve {
        file: PathBuf,
        /// Output format
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Override the residual tolerance ‖F‖∞
        #[arg(long)]
        tol: Option<f64>,
        /// Use the literal q² loss form instead of sign-aware q·|q|
        #[arg(long)]
        literal_q2: bool,
        /// Emit the per-iteration residual trace on stderr
        #[arg(long)]
        trace: bool,
    },
    /// Run the continuation sweep over the model's time grid
    Sweep {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    /// Human-readable table
    Table,
    /// Line-delimited JSON records
    Records,
}

/// Model paths resolve as given, then relative to `$NODAL_FIXTURES`.
fn resolve(file: &Path) -> PathBuf {
    if file.exists() {
        return file.to_path_buf();
    }
    if let Ok(dir) = std::env::var("NODAL_FIXTURES") {
        let candidate = Path::new(&dir).join(file);
        if candidate.exists() {
            return candidate;
        }
    }
    file.to_path_buf()
}

fn load_and_build(file: &Path) -> Result<BuiltSystem> {
    let doc = load_model(&resolve(file))?;
    build_system(&doc)
}

fn cmd_check(file: &Path) -> Result<ExitCode> {
    let built = load_and_build(file)?;
    let report = structural_check(&built.reduced);
    println!("model: {}", file.display());
    println!(
        "components: {}, connect sets: {}",
        built.n_components, built.n_connects
    );
    println!("{report}");
    Ok(if report.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_solve(
    file: &Path,
    format: Format,
    tol: Option<f64>,
    literal_q2: bool,
    trace: bool,
) -> Result<ExitCode> {
    let mut doc = load_model(&resolve(file))?;
    if let Some(tol) = tol {
        doc.options.tolerance = Some(tol);
    }
    doc.options.literal_q2 |= literal_q2;
    let built = build_system(&doc)?;

    let report = structural_check(&built.reduced);
    if !report.is_ok() {
        eprintln!("{report}");
        return Ok(ExitCode::FAILURE);
    }

    let sol = newton_solve(&built.reduced, &Binding::new(), &built.solve_options)?;
    if trace || !sol.converged {
        report::print_trace(&sol);
    }
    if !sol.converged {
        eprintln!(
            "not converged after {} iterations (residual {:e})",
            sol.iterations, sol.residual_norm
        );
        return Ok(ExitCode::FAILURE);
    }
    match format {
        Format::Table => report::print_table(&built.full, &sol),
        Format::Records => report::print_records(&built.full, &sol, None),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(file: &Path, format: Format) -> Result<ExitCode> {
    let built = load_and_build(file)?;
    let Some(schedule) = &built.schedule else {
        bail!("model has no sweep block");
    };
    let report = structural_check(&built.reduced);
    if !report.is_ok() {
        eprintln!("{report}");
        return Ok(ExitCode::FAILURE);
    }

    let solutions = sweep(&built.reduced, schedule, &built.solve_options)?;
    match format {
        Format::Records => {
            for sol in &solutions {
                report::print_records(&built.full, sol, Some(sol.time));
            }
        }
        Format::Table => {
            for sol in &solutions {
                println!(
                    "t = {:>10}: {} iterations, residual {:.3e}",
                    sol.time, sol.iterations, sol.residual_norm
                );
            }
            println!();
            let last = solutions.last().unwrap();
            println!("final point (t = {}):", last.time);
            report::print_table(&built.full, last);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // die quietly when the consumer of a pipe goes away (e.g. `| head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check { file } => cmd_check(file),
        Command::Solve {
            file,
            format,
            tol,
            literal_q2,
            trace,
        } => cmd_solve(file, *format, *tol, *literal_q2, *trace),
        Command::Sweep { file, format } => cmd_sweep(file, *format),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

//! `jetflow`: derive, simulate and cross-check higher-order Lagrangian
//! problems described in TOML files.
//!
//! Exit codes: 0 success, 1 a check or solver failure, 2 bad input.

mod problem;
mod report;
mod routes;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use jetflow::integrator::{Method, Route};

use problem::{load_problem, Overrides};
use routes::Runner;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Solver(#[from] jetflow::Error),
    #[error("checks failed")]
    Checks,
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Solver(_) | CliError::Checks => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "jetflow", version, about = "Higher-order Lagrangian mechanics along three equivalent routes")]
struct Cli {
    /// Step size for rk4 (initial step for rk45), replacing run.dt.
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Final time, replacing run.t1.
    #[arg(long, global = true)]
    t1: Option<f64>,
    /// Integration method (rk4 or rk45), replacing run.method.
    #[arg(long, global = true)]
    method: Option<Method>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the Euler-Lagrange equations, momenta, Hamiltonian and regularity expressions.
    Derive { file: PathBuf },
    /// Integrate along one route and write the trajectory as CSV.
    Simulate {
        file: PathBuf,
        /// el, ostro, pontryagin-full or pontryagin-reduced.
        #[arg(long)]
        route: Route,
        /// Output path; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every applicable route and the consistency checks.
    Verify {
        file: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn write_output(path: Option<&PathBuf>, write: impl FnOnce(&mut dyn Write) -> Result<(), CliError>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::Input(format!("cannot create {}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            write(&mut w)?;
            w.flush().map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))
        }
        None => write(&mut io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides { dt: cli.dt, t1: cli.t1, method: cli.method };
    match cli.command {
        Command::Derive { file } => {
            let loaded = load_problem(&file, &overrides)?;
            match report::derive(&loaded) {
                Ok(r) => {
                    print!("{}", r.derivation_text());
                    Ok(())
                }
                Err(r) => {
                    print!("{}", r.derivation_text());
                    Err(CliError::Checks)
                }
            }
        }
        Command::Simulate { file, route, out } => {
            let loaded = load_problem(&file, &overrides)?;
            let runner = Runner::new(&loaded)?;
            if let Some(why) = runner.unavailable(route) {
                return Err(CliError::Input(format!("route {} {why}", route.short_name())));
            }
            match runner.run(route) {
                Ok(run) => write_output(out.as_ref(), |w| run.write_csv(w)),
                Err(failure) => {
                    if let (Some(partial), Some(_)) = (&failure.partial, &out) {
                        write_output(out.as_ref(), |w| partial.write_csv(w))?;
                        eprintln!("jetflow: partial trajectory ({} samples) written", partial.traj.len());
                    }
                    Err(failure.into())
                }
            }
        }
        Command::Verify { file, json } => {
            let loaded = load_problem(&file, &overrides)?;
            let report = report::verify(&loaded);
            print!("{}", report.to_text());
            if let Some(path) = &json {
                write_output(Some(path), |w| {
                    serde_json::to_writer_pretty(&mut *w, &report)
                        .map_err(|e| CliError::Input(format!("cannot write JSON: {e}")))?;
                    writeln!(w).map_err(|e| CliError::Input(e.to_string()))
                })?;
            }
            if report.pass {
                Ok(())
            } else {
                Err(CliError::Checks)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Checks) => ExitCode::from(1),
        Err(e) => {
            eprintln!("jetflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

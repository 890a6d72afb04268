//! Batch front end for `linf-isotonic`: read a problem document, solve
//! it, optionally cross-check with the reference solver, write the fit.
//!
//! Exit codes: 0 on success, 1 on bad input, 2 when a fit fails
//! verification.

pub mod problem;
pub mod stats;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use clap::Parser;
use linf_isotonic::reference::{reference_solve, REFERENCE_CAP};
use linf_isotonic::{IsoError, Trace};
use serde::Serialize;

use problem::{parse_dims, Dims, OrderKind, Problem};
use stats::{stats_report, Stats};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Solver(#[from] IsoError),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) | CliError::Solver(_) => 1,
            CliError::Verify(_) => 2,
        }
    }
}

/// Weighted L-infinity isotonic regression.
#[derive(Debug, Parser)]
#[command(name = "linf-iso", version)]
pub struct Args {
    /// Order type; may also be given in the file.
    #[arg(long, value_enum)]
    pub order: Option<OrderKind>,
    /// Problem document (JSON).
    #[arg(long)]
    pub input: PathBuf,
    /// Where to write the result; stdout if absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Grid sides such as `4x3x2`.
    #[arg(long, value_parser = parse_dims)]
    pub dims: Option<Dims>,
    /// Cross-check against the quadratic reference solver (n <= 4096).
    #[arg(long)]
    pub verify: bool,
    /// Include per-level instrumentation in the output.
    #[arg(long)]
    pub stats: bool,
    /// Recorded in the stats; the solvers themselves are deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Solve this many extra times and report timings on stderr.
    #[arg(long, value_name = "REPS")]
    pub bench: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct Output {
    pub epsilon: f64,
    pub fit: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<Stats>,
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("linf-iso: error: {e}");
            e.exit_code()
        }
    }
}

/// Solves `args` and writes the output document.
pub fn execute(args: &Args) -> Result<(), CliError> {
    // `--dims` implies a grid when no order is given anywhere else
    let order = args.order.or(args.dims.as_ref().map(|_| OrderKind::Grid));
    let problem = Problem::load(&args.input, order, args.dims.clone().map(|d| d.0))?;
    if args.verify && problem.len() > REFERENCE_CAP {
        return Err(CliError::Input(format!(
            "--verify is limited to n <= {REFERENCE_CAP}, this problem has n = {}",
            problem.len()
        )));
    }

    let mut trace = args.stats.then(Trace::new);
    let fit = problem.solve(trace.as_mut())?;
    problem.check_fit(&fit).map_err(CliError::Verify)?;

    if let Some(reps) = args.bench {
        bench(&problem, reps)?;
    }

    if args.verify {
        let reference = reference_solve(&problem.data, &problem.order_spec())?;
        let tol = 1e-9 * (1.0 + reference.epsilon.abs());
        if (reference.epsilon - fit.epsilon).abs() > tol {
            return Err(CliError::Verify(format!(
                "epsilon {} differs from the reference {}",
                fit.epsilon, reference.epsilon
            )));
        }
        eprintln!("linf-iso: verified against the reference solver (epsilon {})", reference.epsilon);
    }

    let output = Output {
        epsilon: fit.epsilon,
        fit: fit.values,
        stats: trace.map(|t| stats_report(&problem, &t, args.seed)),
    };
    let mut text = serde_json::to_string_pretty(&output).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    match &args.output {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("stdout: {e}")))?,
    }
    Ok(())
}

fn bench(problem: &Problem, reps: usize) -> Result<(), CliError> {
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        std::hint::black_box(problem.solve(None)?);
        times.push(start.elapsed());
    }
    if let Some(best) = times.iter().min() {
        let mean = times.iter().sum::<Duration>() / reps as u32;
        eprintln!("linf-iso: bench n={} reps={reps} best={best:?} mean={mean:?}", problem.len());
    }
    Ok(())
}

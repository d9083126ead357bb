//! `cvtool`: contextual values, conditioned averages and figure data from the
//! command line.
//!
//! Exit codes: 0 success, 1 usage/config/other errors, 2 observable not
//! reconstructable, 3 zero postselection probability, 4 failed check
//! (verify suite, figure self-check, or `--strict` warning).

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use cvtool_core::operator::DEFAULT_TOL;

use cvtool::commands::{self, fail, Outcome, Settings, EXIT_CHECK_FAILED, EXIT_ERROR};
use cvtool::config::GridSpec;
use cvtool::output::Format;
use cvtool::verify;

#[derive(Parser, Debug)]
#[command(name = "cvtool", version, about = "Contextual values of quantum observables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Write output here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Monte Carlo trials; with `conditioned` or `moment`, adds a sampled estimate.
    #[arg(long, global = true, value_name = "N")]
    trials: Option<u64>,
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,
    /// Relative singular-value cutoff for the solver.
    #[arg(long, global = true, value_name = "X")]
    svd_tol: Option<f64>,
    /// Detector grid, or the plotted range for fig1/fig2.
    #[arg(long, global = true, value_name = "MIN:MAX:POINTS", allow_hyphen_values = true)]
    grid: Option<GridSpec>,
    /// Treat warnings as failures.
    #[arg(long, global = true)]
    strict: bool,
    /// Tolerance for completeness, hermiticity and trace checks; also the
    /// default solver cutoff.
    #[arg(long, global = true, env = "CVTOOL_DEFAULT_TOL", default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Minimum-norm contextual values with the solver diagnostics.
    Solve,
    /// Conditioned average under the configured postselection.
    Conditioned,
    /// n-th moment from repeated measurements.
    Moment {
        #[arg(long, default_value_t = 2)]
        order: u32,
    },
    /// Re-evaluate while one numeric config field runs over a range.
    Sweep {
        /// Dotted path into the config, e.g. `context.coupling`.
        #[arg(long)]
        param: String,
        #[arg(long, value_name = "MIN:MAX:POINTS", allow_hyphen_values = true)]
        values: GridSpec,
    },
    /// Pointer contextual values and conditioned weights, Gaussian and box.
    Fig1 {
        #[arg(long, default_value_t = 0.1, allow_negative_numbers = true)]
        g: f64,
        #[arg(long, default_value_t = 0.3)]
        sigma: f64,
        /// Preparation angle; defaults to 47 pi / 32.
        #[arg(long, allow_negative_numbers = true)]
        alpha: Option<f64>,
    },
    /// QPC contextual values against the reading for several times.
    Fig2 {
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.5, 2.0, 10.0])]
        tau: Vec<f64>,
    },
    /// Sampled estimate of the configured average, moment or conditioned average.
    Mc {
        #[arg(long, default_value_t = 1)]
        order: u32,
    },
    /// Run a property suite: eq8, eq10, eq11, weak-limit or all.
    Verify { suite: String },
}

fn run(cli: Cli) -> Result<Outcome> {
    let c = &cli.common;
    let settings = Settings {
        config: c.config.clone(),
        format: c.format,
        trials: c.trials,
        seed: c.seed,
        svd_tol: c.svd_tol,
        grid: c.grid,
        tol: c.tol,
    };
    match &cli.command {
        Command::Solve => commands::solve(&settings),
        Command::Conditioned => commands::conditioned(&settings),
        Command::Moment { order } => commands::moments(&settings, *order),
        Command::Sweep { param, values } => commands::sweep(&settings, param, *values),
        Command::Fig1 { g, sigma, alpha } => {
            commands::fig1(&settings, *g, *sigma, alpha.unwrap_or_else(commands::default_alpha))
        }
        Command::Fig2 { tau } => commands::fig2(&settings, tau),
        Command::Mc { order } => commands::mc(&settings, *order),
        Command::Verify { suite } => verify_suite(suite),
    }
}

fn verify_suite(name: &str) -> Result<Outcome> {
    let checks = verify::run_suite(name).ok_or_else(|| {
        fail(
            EXIT_ERROR,
            format!(
                "unknown suite `{name}`; expected one of {}, all",
                verify::SUITES.join(", ")
            ),
        )
    })?;
    let mut document = String::new();
    for c in &checks {
        let mark = if c.passed { "PASS" } else { "FAIL" };
        document.push_str(&format!("{mark} {} ({})\n", c.name, c.detail));
    }
    let passed = checks.iter().filter(|c| c.passed).count();
    document.push_str(&format!("{passed}/{} properties hold\n", checks.len()));
    let error = checks
        .iter()
        .find(|c| !c.passed)
        .map(|c| fail(EXIT_CHECK_FAILED, format!("property failed: {}: {}", c.name, c.detail)));
    Ok(Outcome {
        document,
        warnings: Vec::new(),
        error,
    })
}

fn emit(outcome: Outcome, out: Option<&PathBuf>, strict: bool) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, &outcome.document).with_context(|| format!("writing {}", path.display()))?,
        None => match std::io::stdout().write_all(outcome.document.as_bytes()) {
            Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
            other => other?,
        },
    }
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(e) = outcome.error {
        return Err(e);
    }
    if strict && !outcome.warnings.is_empty() {
        return Err(fail(EXIT_CHECK_FAILED, "warnings raised under --strict"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    let out = cli.common.out.clone();
    let strict = cli.common.strict;
    match run(cli).and_then(|outcome| emit(outcome, out.as_ref(), strict)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}

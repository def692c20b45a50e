//! `sosid`: generate benchmark data, fit sum-of-squares models, evaluate
//! them and run the full reproduction.
//!
//! Exit codes: 0 success, 1 other failure (including a failed verdict),
//! 2 solver not optimal, 3 invariant violation, 4 I/O.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sosid::experiment::{self, ExperimentConfig, Stage, StageError};
use sosid::sdp::SolveStatus;
use sosid::Error;

#[derive(Parser)]
#[command(name = "sosid", version, about = "Nonnegative operator identification with sum-of-squares kernel models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the training inputs and write dataset.json and trajectories.
    Generate(Common),
    /// Fit one model per configured kernel to <out>/dataset.json.
    Fit(Common),
    /// Evaluate the fitted models on seeded random test inputs.
    Evaluate(Common),
    /// Run generate, fit and evaluate, then write the summary, plot data and verdict.
    ReproducePaper(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_NOT_OPTIMAL: u8 = 2;
const EXIT_INVARIANT: u8 = 3;
const EXIT_IO: u8 = 4;

fn error_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => EXIT_IO,
        Error::NotPsd { .. } | Error::InvariantViolation(_) => EXIT_INVARIANT,
        _ => EXIT_FAILURE,
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, Error> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => {
            let c = ExperimentConfig::default();
            c.validate()?;
            Ok(c)
        }
    }
}

fn status_code(statuses: impl IntoIterator<Item = SolveStatus>) -> u8 {
    if statuses.into_iter().all(|s| s == SolveStatus::Optimal) {
        0
    } else {
        EXIT_NOT_OPTIMAL
    }
}

fn run(cli: Cli) -> Result<u8, (Option<Stage>, Error)> {
    let plain = |e: Error| (None, e);
    let staged = |e: StageError| (Some(e.stage), e.source);
    match cli.command {
        Command::Generate(c) => {
            let config = load_config(c.config.as_deref()).map_err(plain)?;
            let data = experiment::cmd_generate(&config, &c.out).map_err(plain)?;
            for (i, e) in data.projection_errors.iter().enumerate() {
                println!("y{}: projection relative error {e:.3e}", i + 1);
            }
            println!("wrote {}", experiment::dataset_path(&c.out).display());
            Ok(0)
        }
        Command::Fit(c) => {
            let config = load_config(c.config.as_deref()).map_err(plain)?;
            let (report, _) = experiment::cmd_fit(&config, &c.out).map_err(plain)?;
            for f in &report.fits {
                println!(
                    "{:<16} misfit {:.4e}  norm {:.4e}  {} after {} iterations",
                    experiment::kernel_slug(&f.kernel),
                    f.misfit,
                    f.norm_term,
                    f.solver_status.as_str(),
                    f.iterations
                );
            }
            Ok(status_code(report.fits.iter().map(|f| f.solver_status)))
        }
        Command::Evaluate(c) => {
            let config = load_config(c.config.as_deref()).map_err(plain)?;
            let metrics = experiment::cmd_evaluate(&config, &c.out).map_err(plain)?;
            for m in &metrics.metrics {
                println!(
                    "{:<16} avg relative error {:.4e}  min ⟨Gu,u⟩ {:.3e}",
                    experiment::kernel_slug(&m.kernel),
                    m.avg_relative_error,
                    m.min_quadratic_form
                );
            }
            Ok(status_code(metrics.metrics.iter().map(|m| m.solver_status)))
        }
        Command::ReproducePaper(c) => {
            let config = load_config(c.config.as_deref()).map_err(|e| (Some(Stage::Generate), e))?;
            let rep = experiment::cmd_reproduce_paper(&config, &c.out).map_err(staged)?;
            println!("{:<16} {:>12} {:>12} {:>10}", "kernel", "misfit", "avg error", "status");
            for r in &rep.summary.rows {
                println!(
                    "{:<16} {:>12.4e} {:>12.4e} {:>10}",
                    experiment::kernel_slug(&r.kernel),
                    r.misfit,
                    r.avg_relative_error,
                    r.solver_status.as_str()
                );
            }
            for check in &rep.verdict.checks {
                println!(
                    "{} {} = {:.4e} (threshold {:.1e})",
                    if check.pass { "PASS" } else { "FAIL" },
                    check.name,
                    check.value,
                    check.threshold
                );
            }
            println!(
                "{} ordering by avg error: {}",
                if rep.verdict.ordering_pass { "PASS" } else { "FAIL" },
                rep.verdict.ordering.join(" < ")
            );
            println!("verdict: {}", if rep.verdict.pass { "PASS" } else { "FAIL" });
            let code = status_code(rep.summary.rows.iter().map(|r| r.solver_status));
            Ok(if code != 0 {
                code
            } else if rep.verdict.pass {
                0
            } else {
                EXIT_FAILURE
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err((stage, e)) => {
            match stage {
                Some(s) => eprintln!("error: {s} stage failed: {e}"),
                None => eprintln!("error: {e}"),
            }
            ExitCode::from(error_code(&e))
        }
    }
}

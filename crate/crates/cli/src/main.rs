use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use apcert::cli::{self, parse_matrix, parse_mode, parse_mu, parse_notion, parse_vector, Command, Report};
use apcert::Error;
use clap::{Args, Parser, Subcommand};

/// Approximate Pareto optimality certificates.
///
/// Exit codes: 0 certified/holds, 1 refuted/violated, 2 inconclusive,
/// 3 input error.
#[derive(Parser)]
#[command(name = "apcert", version)]
struct Cli {
    /// Print the machine-readable JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Also write the JSON report to this file.
    #[arg(long, global = true, value_name = "PATH")]
    report: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct At {
    /// Problem file (TOML).
    file: PathBuf,
    /// Point, comma separated (e.g. `--point=-0.5,1`).
    #[arg(long, allow_hyphen_values = true)]
    point: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the approximate KKT inclusion at a point.
    Check {
        #[command(flatten)]
        at: At,
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        /// Objective weights to verify instead of searching.
        #[arg(long)]
        lambda: Option<String>,
        /// Constraint multipliers `block:index=weight,...` to verify.
        #[arg(long)]
        mu: Option<String>,
    },
    /// Approximate KKT at a nearby point within distance delta.
    Fuzzy {
        #[command(flatten)]
        at: At,
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        #[arg(long)]
        delta: f64,
    },
    /// Constraint qualification (U), or (A_i) with --ai.
    Cq {
        #[command(flatten)]
        at: At,
        #[arg(long)]
        ai: Option<usize>,
    },
    /// Grid oracle for the six (approximate) Pareto notions.
    Classify {
        #[command(flatten)]
        at: At,
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        /// Notion deciding the exit code.
        #[arg(long, default_value = "xi-quasi-weak")]
        notion: String,
    },
    /// Find a xi-Pareto (or, with --quasi, xi-quasi Pareto) grid point.
    Exists {
        file: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        #[arg(long)]
        quasi: bool,
        #[arg(long, allow_hyphen_values = true)]
        start: Option<String>,
        /// Write the grid's non-xi-dominated points as CSV.
        #[arg(long, value_name = "PATH")]
        front_csv: Option<PathBuf>,
    },
    /// KKT plus sampled generalized convexity.
    Suffice {
        #[command(flatten)]
        at: At,
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        /// quasi-weak or quasi.
        #[arg(long, default_value = "quasi-weak")]
        mode: String,
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// KKT with a semidefinite multiplier for the [sdp] block.
    Sdp {
        #[command(flatten)]
        at: At,
        #[arg(long, allow_hyphen_values = true)]
        xi: Option<String>,
        #[arg(long)]
        lambda: Option<String>,
        /// Matrix multiplier to verify, rows separated by `;`.
        #[arg(long, allow_hyphen_values = true)]
        multiplier: Option<String>,
    },
    /// Run a built-in worked example (example-3.1, example-3.2).
    Example { name: String },
}

fn opt(s: &Option<String>) -> Result<Option<Vec<f64>>, Error> {
    s.as_deref().map(parse_vector).transpose()
}

fn command(cmd: &Cmd) -> Result<(Command, Option<PathBuf>), Error> {
    Ok(match cmd {
        Cmd::Check { at, xi, lambda, mu } => (
            Command::Check {
                file: at.file.clone(),
                point: parse_vector(&at.point)?,
                xi: opt(xi)?,
                lambda: opt(lambda)?,
                mu: mu.as_deref().map(parse_mu).transpose()?,
            },
            None,
        ),
        Cmd::Fuzzy { at, xi, delta } => (
            Command::Fuzzy {
                file: at.file.clone(),
                point: parse_vector(&at.point)?,
                xi: opt(xi)?,
                delta: *delta,
            },
            None,
        ),
        Cmd::Cq { at, ai } => (
            Command::Cq {
                file: at.file.clone(),
                point: parse_vector(&at.point)?,
                ai: *ai,
            },
            None,
        ),
        Cmd::Classify { at, xi, notion } => (
            Command::Classify {
                file: at.file.clone(),
                point: parse_vector(&at.point)?,
                xi: opt(xi)?,
                notion: parse_notion(notion)?,
            },
            None,
        ),
        Cmd::Exists { file, xi, quasi, start, front_csv } => (
            Command::Exists {
                file: file.clone(),
                xi: opt(xi)?,
                quasi: *quasi,
                start: opt(start)?,
            },
            front_csv.clone(),
        ),
        Cmd::Suffice { at, xi, mode, samples } => (
            Command::Suffice {
                file: at.file.clone(),
                point: parse_vector(&at.point)?,
                xi: opt(xi)?,
                mode: parse_mode(mode)?,
                samples: *samples,
            },
            None,
        ),
        Cmd::Sdp { at, xi, lambda, multiplier } => (
            Command::Sdp {
                file: at.file.clone(),
                point: parse_vector(&at.point)?,
                xi: opt(xi)?,
                lambda: opt(lambda)?,
                multiplier: multiplier.as_deref().map(parse_matrix).transpose()?,
            },
            None,
        ),
        Cmd::Example { name } => (Command::Example { name: name.clone() }, None),
    })
}

fn write_csv(path: &PathBuf, report: &Report) -> Result<(), Box<dyn std::error::Error>> {
    let Some(table) = &report.table else { return Ok(()) };
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let (cmd, csv_path) = match command(&args.cmd) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("apcert: {e}");
            return ExitCode::from(3);
        }
    };
    let mut report = match cli::run(&cmd) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("apcert: {e}");
            return ExitCode::from(3);
        }
    };
    report.command = std::env::args().skip(1).collect();
    if let Some(path) = &csv_path {
        if let Err(e) = write_csv(path, &report) {
            eprintln!("apcert: cannot write {}: {e}", path.display());
            return ExitCode::from(3);
        }
    }
    if let Some(path) = &args.report {
        if let Err(e) = std::fs::write(path, report.to_json()) {
            eprintln!("apcert: cannot write {}: {e}", path.display());
            return ExitCode::from(3);
        }
    }
    let out = if args.json { report.to_json() } else { report.to_text() };
    let _ = std::io::stdout().write_all(out.as_bytes());
    ExitCode::from(report.exit_code as u8)
}

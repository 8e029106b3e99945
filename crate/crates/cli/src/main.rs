//! `rodservo`: run rod shape-servoing scenarios and write CSV reports.
//!
//! Exit status: 0 when every run converged (or the study has no stopping
//! rule), 1 on configuration, input or solver errors, 2 when a run
//! diverged, 3 when a run hit `max_steps` without converging.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rodservo_core::harness::{emit_reports, run_scenario, run_sweep, write_sweep, Outcome, Scenario, StudyReport, Task};
use rodservo_core::{Error, Result};

#[derive(Parser)]
#[command(name = "rodservo", version, about = "Shape servoing of a simulated elastic rod")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a scenario file.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare fit errors of the four bases on a seeded shape corpus.
    CompareFeatures {
        /// Scenario supplying rod, corpus and NURBS weights; defaults otherwise.
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        shapes: Option<usize>,
    },
    /// Repeat a study for each value of one parameter.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true, allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Status {
    Ok,
    Diverged,
    Unfinished,
}

impl Status {
    fn code(&self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Diverged => 2,
            Status::Unfinished => 3,
        }
    }

    fn of(report: &StudyReport) -> Self {
        let runs = report.runs();
        if runs.iter().any(|l| matches!(l.outcome, Outcome::Diverged { .. })) {
            Status::Diverged
        } else if runs.iter().any(|l| l.outcome == Outcome::MaxSteps) {
            Status::Unfinished
        } else {
            Status::Ok
        }
    }

    fn worst(self, other: Self) -> Self {
        match (self, other) {
            (Status::Diverged, _) | (_, Status::Diverged) => Status::Diverged,
            (Status::Unfinished, _) | (_, Status::Unfinished) => Status::Unfinished,
            _ => Status::Ok,
        }
    }
}

fn load(path: Option<&Path>, seed: Option<u64>) -> Result<Scenario> {
    let mut sc = match path {
        Some(p) => Scenario::load(p)?,
        None => Scenario::default(),
    };
    if let Some(seed) = seed {
        sc.seed = seed;
    }
    sc.validate()?;
    Ok(sc)
}

fn save_scenario(dir: &Path, sc: &Scenario) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join("scenario.toml");
    fs::write(&path, sc.to_toml()).map_err(|e| io_err(&path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn print_report(report: &StudyReport) {
    match report {
        StudyReport::Features(table) => {
            for row in &table.rows {
                println!(
                    "{:<10} p={:<3} shapes={:<3} mean={:.4} px  max={:.4} px",
                    row.basis.family.to_string(),
                    row.dim(),
                    row.shapes,
                    row.mean_error,
                    row.max_error
                );
            }
            for (i, reason) in &table.failures {
                eprintln!("shape {i} skipped: {reason}");
            }
        }
        StudyReport::Runs(logs) => {
            for log in logs {
                let steps = log.steps().map(|s| s.to_string()).unwrap_or_else(|| "-".into());
                let t1 = log.final_t1().map(|t| format!("{t:.3}")).unwrap_or_else(|| "-".into());
                println!("{:<16} {:<10} steps={steps:<5} final_t1={t1}", log.name, log.outcome.name());
                if let Err(e) = log.check() {
                    eprintln!("{}: {e}", log.name);
                }
            }
        }
    }
}

fn run(path: &Path, out: &Path, seed: Option<u64>) -> Result<Status> {
    let sc = load(Some(path), seed)?;
    let report = run_scenario(&sc)?;
    save_scenario(out, &sc)?;
    emit_reports(out, &report)?;
    print_report(&report);
    Ok(Status::of(&report))
}

fn compare_features(path: Option<&Path>, out: &Path, seed: Option<u64>, shapes: Option<usize>) -> Result<Status> {
    let mut sc = load(path, seed)?;
    sc.task = Task::FeatureComparison;
    if let Some(n) = shapes {
        sc.corpus.shapes = n;
    }
    let report = run_scenario(&sc)?;
    save_scenario(out, &sc)?;
    emit_reports(out, &report)?;
    print_report(&report);
    Ok(Status::Ok)
}

fn sweep(path: &Path, param: &str, values: &[f64], out: &Path, seed: Option<u64>) -> Result<Status> {
    let sc = load(Some(path), seed)?;
    let results = run_sweep(&sc, param, values)?;
    save_scenario(out, &sc)?;
    let mut status = Status::Ok;
    for (value, report) in &results {
        println!("{param} = {value}");
        emit_reports(out.join(format!("{param}={value}")), report)?;
        print_report(report);
        status = status.worst(Status::of(report));
    }
    write_sweep(&out.join("sweep.csv"), param, &results)?;
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, out, seed } => run(scenario, out, *seed),
        Command::CompareFeatures {
            scenario,
            out,
            seed,
            shapes,
        } => compare_features(scenario.as_deref(), out, *seed, *shapes),
        Command::Sweep {
            scenario,
            param,
            values,
            out,
            seed,
        } => sweep(scenario, param, values, out, *seed),
    };
    match result {
        Ok(status) => ExitCode::from(status.code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

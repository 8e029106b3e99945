//! CSV reports.
//!
//! | file              | columns                                                         |
//! |-------------------|-----------------------------------------------------------------|
//! | `trace_<run>.csv` | `k, r_*, dr_raw_*, dr_*, e_norm, t1, t2, lambda, dv_measured, dv_predicted, saturated, clamped, lyapunov_violated, s_*` |
//! | `summary.csv`     | `run, estimator, tuner, outcome, steps, ticks, final_t1, mean_t2, max_dr, lyapunov_violation_rate, wall_time_s` |
//! | `plot.csv`        | `run, tick, series, value`                                      |
//! | `features.csv`    | `family, degree, p, shapes, mean_error_px, max_error_px, mean_fit_time_s` |
//! | `sweep.csv`       | `param, value, run, outcome, steps, final_t1, mean_t2, max_dr`  |
//!
//! Everything except the timing columns is a pure function of the scenario.

use std::fs;
use std::path::{Path, PathBuf};

use super::corpus::FeatureTable;
use super::runlog::RunLog;
use super::StudyReport;
use crate::error::{Error, Result};
use crate::features::csv_err;

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_summary(path: &Path, logs: &[RunLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "run",
        "estimator",
        "tuner",
        "outcome",
        "steps",
        "ticks",
        "final_t1",
        "mean_t2",
        "max_dr",
        "lyapunov_violation_rate",
        "wall_time_s",
    ])
    .map_err(|e| csv_err(path, e))?;
    for log in logs {
        w.write_record([
            log.name.clone(),
            log.estimator.clone(),
            log.tuner.clone(),
            log.outcome.name().to_string(),
            log.steps().map(|s| s.to_string()).unwrap_or_default(),
            log.records.last().map(|r| r.k).unwrap_or(0).to_string(),
            fmt_opt(log.final_t1()),
            fmt_opt(log.mean_t2(1)),
            log.max_step_norm().to_string(),
            log.lyapunov_violation_rate().to_string(),
            format!("{:.6}", log.wall_time),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_plot(path: &Path, logs: &[RunLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["run", "tick", "series", "value"])
        .map_err(|e| csv_err(path, e))?;
    for log in logs {
        for (run, tick, series, value) in log.plot_rows() {
            w.write_record([run, tick.to_string(), series.to_string(), value.to_string()])
                .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_features(path: &Path, table: &FeatureTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "family",
        "degree",
        "p",
        "shapes",
        "mean_error_px",
        "max_error_px",
        "mean_fit_time_s",
    ])
    .map_err(|e| csv_err(path, e))?;
    for row in &table.rows {
        w.write_record([
            row.basis.family.to_string(),
            row.basis.degree.to_string(),
            row.dim().to_string(),
            row.shapes.to_string(),
            row.mean_error.to_string(),
            row.max_error.to_string(),
            format!("{:.9}", row.mean_fit_time),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    if !table.failures.is_empty() {
        let fpath = path.with_file_name("feature_failures.csv");
        let mut w = csv::Writer::from_path(&fpath).map_err(|e| csv_err(&fpath, e))?;
        w.write_record(["shape", "reason"]).map_err(|e| csv_err(&fpath, e))?;
        for (i, reason) in &table.failures {
            w.write_record([i.to_string(), reason.clone()])
                .map_err(|e| csv_err(&fpath, e))?;
        }
        w.flush().map_err(|e| Error::io(&fpath, e))?;
    }
    Ok(())
}

pub fn write_sweep(path: &Path, param: &str, results: &[(f64, StudyReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["param", "value", "run", "outcome", "steps", "final_t1", "mean_t2", "max_dr"])
        .map_err(|e| csv_err(path, e))?;
    for (value, report) in results {
        for log in report.runs() {
            w.write_record([
                param.to_string(),
                value.to_string(),
                log.name.clone(),
                log.outcome.name().to_string(),
                log.steps().map(|s| s.to_string()).unwrap_or_default(),
                fmt_opt(log.final_t1()),
                fmt_opt(log.mean_t2(1)),
                log.max_step_norm().to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes all report files for a study into `dir` and returns their paths.
pub fn emit_reports(dir: impl AsRef<Path>, report: &StudyReport) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    match report {
        StudyReport::Features(table) => {
            let path = dir.join("features.csv");
            write_features(&path, table)?;
            written.push(path);
        }
        StudyReport::Runs(logs) => {
            if logs.is_empty() {
                return Err(Error::Config("no runs to report".into()));
            }
            for log in logs {
                let path = dir.join(format!("trace_{}.csv", log.name));
                log.write_csv(&path)?;
                written.push(path);
            }
            let path = dir.join("summary.csv");
            write_summary(&path, logs)?;
            written.push(path);
            let path = dir.join("plot.csv");
            write_plot(&path, logs)?;
            written.push(path);
        }
    }
    Ok(written)
}

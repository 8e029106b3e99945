//! Per-tick run traces and their CSV form.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::csv_err;

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub k: usize,
    pub r: Vec<f64>,
    pub dr_raw: Vec<f64>,
    pub dr: Vec<f64>,
    pub s: Vec<f64>,
    pub e_norm: Option<f64>,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub lambda: Option<f64>,
    pub dv_measured: Option<f64>,
    pub dv_predicted: Option<f64>,
    pub saturated: bool,
    pub clamped: bool,
    pub lyapunov_violated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    /// T1 stayed below tolerance for the required window; `steps` is the
    /// first tick of that window.
    Converged { steps: usize },
    /// Ran the full tick budget.
    Completed,
    MaxSteps,
    Diverged { tick: usize, t1: f64, limit: f64 },
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Converged { .. } => "converged",
            Outcome::Completed => "completed",
            Outcome::MaxSteps => "max_steps",
            Outcome::Diverged { .. } => "diverged",
        }
    }

    pub fn steps(&self) -> Option<usize> {
        match self {
            Outcome::Converged { steps } => Some(*steps),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub name: String,
    pub estimator: String,
    pub tuner: String,
    pub records: Vec<TickRecord>,
    pub outcome: Outcome,
    /// Wall-clock seconds, excluding report writing.
    pub wall_time: f64,
}

impl RunLog {
    /// `Err(RunDiverged)` for a diverged run.
    pub fn check(&self) -> Result<()> {
        match self.outcome {
            Outcome::Diverged { tick, t1, limit } => Err(Error::RunDiverged { tick, t1, limit }),
            _ => Ok(()),
        }
    }

    pub fn converged(&self) -> bool {
        matches!(self.outcome, Outcome::Converged { .. })
    }

    pub fn steps(&self) -> Option<usize> {
        self.outcome.steps()
    }

    pub fn final_t1(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.t1)
    }

    /// Mean T2 over ticks `from..` where it is defined.
    pub fn mean_t2(&self, from: usize) -> Option<f64> {
        let v: Vec<f64> = self.records.iter().filter(|r| r.k >= from).filter_map(|r| r.t2).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn max_step_norm(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.dr.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    pub fn lyapunov_violation_rate(&self) -> f64 {
        let n = self.records.iter().filter(|r| r.dv_measured.is_some()).count();
        if n == 0 {
            return 0.0;
        }
        self.records.iter().filter(|r| r.lyapunov_violated).count() as f64 / n as f64
    }

    fn dims(&self) -> (usize, usize) {
        self.records
            .first()
            .map(|r| (r.r.len(), r.s.len()))
            .unwrap_or((0, 0))
    }

    pub fn header(q: usize, p: usize) -> Vec<String> {
        let mut h: Vec<String> = vec!["k".into()];
        for prefix in ["r", "dr_raw", "dr"] {
            h.extend((0..q).map(|i| format!("{prefix}_{i}")));
        }
        h.extend(
            [
                "e_norm",
                "t1",
                "t2",
                "lambda",
                "dv_measured",
                "dv_predicted",
                "saturated",
                "clamped",
                "lyapunov_violated",
            ]
            .map(String::from),
        );
        h.extend((0..p).map(|i| format!("s_{i}")));
        h
    }

    /// Writes the per-tick trace.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (q, p) = self.dims();
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(Self::header(q, p)).map_err(|e| csv_err(path, e))?;
        for r in &self.records {
            let mut row = vec![r.k.to_string()];
            row.extend(r.r.iter().chain(&r.dr_raw).chain(&r.dr).map(|v| v.to_string()));
            for v in [r.e_norm, r.t1, r.t2, r.lambda, r.dv_measured, r.dv_predicted] {
                row.push(v.map(|v| v.to_string()).unwrap_or_default());
            }
            for b in [r.saturated, r.clamped, r.lyapunov_violated] {
                row.push(u8::from(b).to_string());
            }
            row.extend(r.s.iter().map(|v| v.to_string()));
            w.write_record(&row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a trace written by [`RunLog::write_csv`]. Run metadata is not part
    /// of the trace and is left empty.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<TickRecord>> {
        let path = path.as_ref();
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
        let q = header.iter().filter(|h| h.starts_with("r_")).count();
        let p = header.iter().filter(|h| h.starts_with("s_")).count();
        if header.len() != Self::header(q, p).len() {
            return Err(Error::parse(path, "unexpected trace header"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(path, e));
        let opt = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(Error::parse(path, format!("bad flag `{other}`"))),
        };
        let mut out = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let f: Vec<&str> = rec.iter().collect();
            let vec_at = |start: usize, n: usize| -> Result<Vec<f64>> { f[start..start + n].iter().map(|s| num(s)).collect() };
            let base = 1 + 3 * q;
            out.push(TickRecord {
                k: f[0].parse().map_err(|e| Error::parse(path, e))?,
                r: vec_at(1, q)?,
                dr_raw: vec_at(1 + q, q)?,
                dr: vec_at(1 + 2 * q, q)?,
                e_norm: opt(f[base])?,
                t1: opt(f[base + 1])?,
                t2: opt(f[base + 2])?,
                lambda: opt(f[base + 3])?,
                dv_measured: opt(f[base + 4])?,
                dv_predicted: opt(f[base + 5])?,
                saturated: flag(f[base + 6])?,
                clamped: flag(f[base + 7])?,
                lyapunov_violated: flag(f[base + 8])?,
                s: vec_at(base + 9, p)?,
            });
        }
        Ok(out)
    }

    /// Long-format rows `(run, tick, series, value)` for plotting.
    pub fn plot_rows(&self) -> Vec<(String, usize, &'static str, f64)> {
        let mut rows = Vec::new();
        for r in &self.records {
            let dr_norm = r.dr.iter().map(|v| v * v).sum::<f64>().sqrt();
            let series: [(&'static str, Option<f64>); 6] = [
                ("t1", r.t1),
                ("t2", r.t2),
                ("dr_norm", Some(dr_norm)),
                ("lambda", r.lambda),
                ("e_norm", r.e_norm),
                ("dv_measured", r.dv_measured),
            ];
            for (name, v) in series {
                if let Some(v) = v {
                    rows.push((self.name.clone(), r.k, name, v));
                }
            }
        }
        rows
    }
}

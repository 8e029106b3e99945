//! Scenario-driven studies: feature comparison, circular Jacobian tracking,
//! closed-loop servoing and gain-tuner comparison.

mod circle;
mod corpus;
pub mod report;
mod runlog;
mod scenario;
mod servo;

pub use circle::run_circle_track;
pub use corpus::{comparison_bases, run_feature_comparison, shape_corpus, FeatureRow, FeatureTable};
pub use report::{emit_reports, write_sweep};
pub use runlog::{Outcome, RunLog, TickRecord};
pub use scenario::{
    CenterlineConfig, CircleConfig, ControllerConfig, CorpusConfig, Scenario, ServoConfig, StudyConfig, Task,
};
pub use servo::{bend_ratio, check_not_straight, prepare_servo, run_servo, ServoSetup};

use crate::error::Result;
use crate::tuner::TunerMode;

#[derive(Debug, Clone)]
pub enum StudyReport {
    Features(FeatureTable),
    Runs(Vec<RunLog>),
}

impl StudyReport {
    pub fn runs(&self) -> &[RunLog] {
        match self {
            StudyReport::Runs(logs) => logs,
            StudyReport::Features(_) => &[],
        }
    }
}

/// Runs every estimator listed in the scenario through `f`.
fn per_estimator(sc: &Scenario, prefix: &str, f: fn(&Scenario) -> Result<RunLog>) -> Result<Vec<RunLog>> {
    sc.estimator_kinds()
        .into_iter()
        .map(|kind| {
            let mut s = sc.clone();
            s.estimator.kind = kind;
            let mut log = f(&s)?;
            log.name = format!("{prefix}-{kind}");
            Ok(log)
        })
        .collect()
}

/// Servo runs for each tuner mode plus the extra JEU weightings.
pub fn run_tuner_comparison(sc: &Scenario) -> Result<Vec<RunLog>> {
    let mut logs = Vec::new();
    for &mode in &sc.study.tuners {
        let mut s = sc.clone();
        s.tuner.mode = mode;
        let mut log = run_servo(&s)?;
        log.name = format!("tuner-{mode}");
        logs.push(log);
    }
    for &[w1, w2] in &sc.study.jeu_weights {
        let mut s = sc.clone();
        s.tuner.mode = TunerMode::Jeu;
        s.tuner.omega1 = w1;
        s.tuner.omega2 = w2;
        s.validate()?;
        let mut log = run_servo(&s)?;
        log.name = format!("jeu-{w1}-{w2}");
        logs.push(log);
    }
    Ok(logs)
}

pub fn run_scenario(sc: &Scenario) -> Result<StudyReport> {
    sc.validate()?;
    Ok(match sc.task {
        Task::FeatureComparison => StudyReport::Features(run_feature_comparison(sc)?),
        Task::CircleTrack => StudyReport::Runs(per_estimator(sc, "circle", run_circle_track)?),
        Task::ServoRun => StudyReport::Runs(per_estimator(sc, "servo", run_servo)?),
        Task::TunerComparison => StudyReport::Runs(run_tuner_comparison(sc)?),
    })
}

/// One study per value of a scalar parameter, each on a copy of `sc`.
pub fn run_sweep(sc: &Scenario, param: &str, values: &[f64]) -> Result<Vec<(f64, StudyReport)>> {
    values
        .iter()
        .map(|&v| {
            let mut s = sc.clone();
            s.set_param(param, v)?;
            Ok((v, run_scenario(&s)?))
        })
        .collect()
}

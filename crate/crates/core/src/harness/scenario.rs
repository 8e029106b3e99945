//! Scenario files.
//!
//! A scenario is a TOML document. Every section and key is optional; the
//! defaults below are used for anything left out.
//!
//! ```toml
//! task = "servo_run"        # feature_comparison | circle_track | servo_run | tuner_comparison
//! seed = 1
//! samples = 100             # contour points N
//!
//! [rod]                     # length, segments, stiffness, clamp_base, clamp_angle
//! [basis]                   # family, degree, weights
//! [estimator]               # type, mu, a_scale, b_scale, p0_scale, u0_scale,
//!                           # alpha, beta, lambda_scale, n_probe, probe_step
//! [controller]              # max_step, tol_t1, window, max_steps, divergence_factor,
//!                           # workspace_lower, workspace_upper
//! [tuner]                   # mode, lambda_init, d, omega1, omega2, lambda_min, lambda_max
//! [centerline]              # enabled, box_size
//! [servo]                   # start, target, branch, target_branch,
//!                           # straight_tolerance
//! [circle]                  # center, radius, step, revolutions
//! [corpus]                  # shapes, min_reach, max_reach, max_angle
//! [study]                   # estimators, tuners, jeu_weights
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controller::{CommandLimits, Workspace};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorKind};
use crate::features::{BasisSpec, Point2};
use crate::rod::{Branch, RodModel};
use crate::tuner::{TunerConfig, TunerMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    FeatureComparison,
    CircleTrack,
    ServoRun,
    TunerComparison,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::FeatureComparison => "feature_comparison",
            Task::CircleTrack => "circle_track",
            Task::ServoRun => "servo_run",
            Task::TunerComparison => "tuner_comparison",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub max_step: f64,
    /// Convergence threshold on T1 in pixels.
    pub tol_t1: f64,
    /// Consecutive ticks below `tol_t1` required to stop.
    pub window: usize,
    pub max_steps: usize,
    /// A run diverges when T1 exceeds this multiple of its initial value.
    pub divergence_factor: f64,
    pub workspace_lower: [f64; 2],
    pub workspace_upper: [f64; 2],
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            max_step: 2.0,
            tol_t1: 5.0,
            window: 10,
            max_steps: 1000,
            divergence_factor: 10.0,
            workspace_lower: [0.0, 0.0],
            workspace_upper: [600.0, 600.0],
        }
    }
}

impl ControllerConfig {
    pub fn limits(&self) -> Result<CommandLimits> {
        CommandLimits::new(self.max_step)
    }

    pub fn workspace(&self) -> Result<Workspace> {
        Workspace::new(self.workspace_lower.to_vec(), self.workspace_upper.to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        self.limits()?;
        self.workspace()?;
        if !(self.tol_t1 > 0.0) {
            return Err(Error::Config("tol_t1 must be positive".into()));
        }
        if self.window == 0 || self.max_steps == 0 {
            return Err(Error::Config("window and max_steps must be at least 1".into()));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(Error::Config("divergence_factor must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CenterlineConfig {
    /// Shuffle, re-order and resample the sampled contour every tick.
    /// Unset means on for servo runs and off for circle tracking.
    pub enabled: Option<bool>,
    pub box_size: f64,
}

impl Default for CenterlineConfig {
    fn default() -> Self {
        Self {
            enabled: None,
            box_size: crate::centerline::DEFAULT_BOX_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServoConfig {
    /// Initial gripper position.
    pub start: [f64; 2],
    /// Gripper position that defines the target shape.
    pub target: [f64; 2],
    pub branch: Branch,
    /// Settle the target on this branch from scratch instead of deforming
    /// the start shape into it. A branch other than `branch` gives a target
    /// no continuous gripper path reaches.
    pub target_branch: Option<Branch>,
    /// Targets whose minor/major principal spread ratio is below this are
    /// rejected as straight.
    pub straight_tolerance: f64,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            start: [420.0, 380.0],
            target: [380.0, 420.0],
            branch: Branch::Left,
            target_branch: None,
            straight_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircleConfig {
    pub center: [f64; 2],
    pub radius: f64,
    /// Arc length travelled per tick, pixels.
    pub step: f64,
    pub revolutions: f64,
    pub branch: Branch,
}

impl Default for CircleConfig {
    fn default() -> Self {
        Self {
            center: [400.0, 360.0],
            radius: 40.0,
            step: 2.0,
            revolutions: 2.0,
            branch: Branch::Left,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub shapes: usize,
    /// Gripper distance from the clamp as a fraction of rod length.
    pub min_reach: f64,
    pub max_reach: f64,
    /// Largest gripper bearing from the clamp tangent, radians.
    pub max_angle: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            shapes: 30,
            min_reach: 0.5,
            max_reach: 0.95,
            max_angle: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Estimators to compare; empty means the `[estimator]` type only.
    pub estimators: Vec<EstimatorKind>,
    /// Tuner modes for `tuner_comparison`.
    pub tuners: Vec<TunerMode>,
    /// Extra JEU runs `(ω₁, ω₂)` for `tuner_comparison`.
    pub jeu_weights: Vec<[f64; 2]>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            estimators: Vec::new(),
            tuners: TunerMode::ALL.to_vec(),
            jeu_weights: vec![[0.1, 0.9], [0.9, 0.1]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub task: Task,
    pub seed: u64,
    pub samples: usize,
    pub rod: RodModel,
    pub basis: BasisSpec,
    pub estimator: EstimatorConfig,
    pub controller: ControllerConfig,
    pub tuner: TunerConfig,
    pub centerline: CenterlineConfig,
    pub servo: ServoConfig,
    pub circle: CircleConfig,
    pub corpus: CorpusConfig,
    pub study: StudyConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            task: Task::ServoRun,
            seed: 1,
            samples: 100,
            rod: RodModel::default(),
            basis: BasisSpec::nurbs(8),
            estimator: EstimatorConfig::default(),
            controller: ControllerConfig::default(),
            tuner: TunerConfig::default(),
            centerline: CenterlineConfig::default(),
            servo: ServoConfig::default(),
            circle: CircleConfig::default(),
            corpus: CorpusConfig::default(),
            study: StudyConfig::default(),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let sc: Scenario = toml::from_str(&text).map_err(|e| Error::parse(path, e))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.rod.validate()?;
        self.basis.validate()?;
        if 2 * self.samples <= self.basis.feature_dim() {
            return Err(Error::InsufficientSamples {
                rows: 2 * self.samples,
                features: self.basis.feature_dim(),
            });
        }
        self.estimator.validate()?;
        self.controller.validate()?;
        crate::tuner::TunerState::from_config(&self.tuner)?;
        if !(self.centerline.box_size > 0.0) {
            return Err(Error::Config("centerline box_size must be positive".into()));
        }
        match self.task {
            Task::ServoRun | Task::TunerComparison => {
                self.check_reachable(self.servo.start, "servo.start")?;
                self.check_reachable(self.servo.target, "servo.target")?;
            }
            Task::CircleTrack => {
                let c = &self.circle;
                if !(c.radius >= 0.0) || !(c.step > 0.0) || !(c.revolutions >= 0.0) {
                    return Err(Error::Config(
                        "circle needs radius >= 0, step > 0 and revolutions >= 0".into(),
                    ));
                }
                let far = (Point2::from(c.center) - self.rod.base()).norm() + c.radius;
                if far >= self.rod.length {
                    return Err(Error::Config(format!(
                        "circle reaches {far:.1} px from the clamp, beyond rod length {}",
                        self.rod.length
                    )));
                }
                let ws = self.controller.workspace()?;
                for (dx, dy) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
                    let p = DVector::from_vec(vec![c.center[0] + dx * c.radius, c.center[1] + dy * c.radius]);
                    if !ws.contains(&p) {
                        return Err(Error::Config("circle leaves the workspace".into()));
                    }
                }
            }
            Task::FeatureComparison => {
                let c = &self.corpus;
                if c.shapes == 0 || !(0.0 < c.min_reach && c.min_reach < c.max_reach && c.max_reach < 1.0) {
                    return Err(Error::Config(
                        "corpus needs shapes >= 1 and 0 < min_reach < max_reach < 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn check_reachable(&self, p: [f64; 2], what: &str) -> Result<()> {
        let p = Point2::from(p);
        let d = (p - self.rod.base()).norm();
        // Full extension is allowed so that straight targets reach the guard.
        if d > self.rod.length * (1.0 + 1e-12) || !d.is_finite() {
            return Err(Error::Unreachable {
                x: p.x,
                y: p.y,
                distance: d,
                length: self.rod.length,
            });
        }
        let ws = self.controller.workspace()?;
        if !ws.contains(&DVector::from_column_slice(p.as_slice())) {
            return Err(Error::Config(format!("{what} lies outside the workspace")));
        }
        Ok(())
    }

    /// Kinds to run for estimator studies.
    pub fn estimator_kinds(&self) -> Vec<EstimatorKind> {
        if self.study.estimators.is_empty() {
            vec![self.estimator.kind]
        } else {
            self.study.estimators.clone()
        }
    }

    /// Overrides one numeric parameter by name, for sweeps.
    pub fn set_param(&mut self, name: &str, value: f64) -> Result<()> {
        match name {
            "lambda_ctrl" | "lambda_init" => self.tuner.lambda_init = value,
            "max_step" => self.controller.max_step = value,
            "tol_t1" => self.controller.tol_t1 = value,
            "d" => self.tuner.d = value,
            "omega1" => {
                self.tuner.omega1 = value;
                self.tuner.omega2 = 1.0 - value;
            }
            "mu" => self.estimator.mu = value,
            "a_scale" => self.estimator.a_scale = value,
            "b_scale" => self.estimator.b_scale = value,
            "p0_scale" => self.estimator.p0_scale = value,
            "alpha" => self.estimator.alpha = value,
            "probe_step" => self.estimator.probe_step = value,
            "stiffness" => self.rod.stiffness = value,
            "seed" => self.seed = value as u64,
            other => {
                return Err(Error::Config(format!(
                    "unknown sweep parameter `{other}` (expected one of lambda_ctrl, max_step, tol_t1, d, omega1, mu, a_scale, b_scale, p0_scale, alpha, probe_step, stiffness, seed)"
                )))
            }
        }
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let sc: Scenario = "".parse().unwrap();
        assert_eq!(sc, Scenario::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut sc = Scenario::default();
        sc.task = Task::CircleTrack;
        sc.study.estimators = EstimatorKind::ALL.to_vec();
        sc.basis = BasisSpec::nurbs_weighted(vec![1.0, 2.0, 1.0]).unwrap();
        let back: Scenario = sc.to_toml().parse().unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn rejects_bad_documents() {
        assert!("bogus = 1".parse::<Scenario>().is_err());
        assert!("[servo]\ntarget = [900.0, 300.0]".parse::<Scenario>().is_err());
        assert!("samples = 5".parse::<Scenario>().is_err());
        assert!("[controller]\nmax_step = 0.0".parse::<Scenario>().is_err());
        assert!("task = \"circle_track\"\n[circle]\nradius = 300.0".parse::<Scenario>().is_err());
        assert!("[tuner]\nmode = \"jeu\"\nomega1 = 0.3\nomega2 = 0.3".parse::<Scenario>().is_err());
    }

    #[test]
    fn sweep_parameters() {
        let mut sc = Scenario::default();
        sc.set_param("lambda_ctrl", 3.0).unwrap();
        assert_eq!(sc.tuner.lambda_init, 3.0);
        assert!(sc.set_param("nope", 1.0).is_err());
        assert!(sc.set_param("max_step", -1.0).is_err());
    }
}

//! Regularized incremental shape controller.
//!
//! ```text
//! Δr_k = (λ I + Ĵᵀ Ĵ)⁻¹ Ĵᵀ e_{k−1}
//! ```
//!
//! minimizes `‖e_k‖² + λ‖Δr_k‖²` under the local model `e_k = e_{k−1} − ĴΔr_k`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Constant target features for a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ServoGoal {
    pub s_star: FeatureVector,
}

impl ServoGoal {
    pub fn error(&self, s: &FeatureVector) -> Result<DVector<f64>> {
        if s.basis() != self.s_star.basis() {
            return Err(Error::Config(format!(
                "feature basis {} does not match goal basis {}",
                s.basis().family,
                self.s_star.basis().family
            )));
        }
        Ok(self.s_star.values() - s.values())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandLimits {
    /// Upper bound on `‖Δr‖` per tick.
    pub max_step: f64,
}

impl CommandLimits {
    pub fn new(max_step: f64) -> Result<Self> {
        if !(max_step > 0.0) {
            return Err(Error::Config(format!("max_step must be positive, got {max_step}")));
        }
        Ok(Self { max_step })
    }

    pub fn unlimited() -> Self {
        Self { max_step: f64::INFINITY }
    }
}

/// Axis-aligned box the gripper must stay in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Workspace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                actual: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::Config("workspace lower bounds must be below upper bounds".into()));
        }
        Ok(Self { lower, upper })
    }

    /// Returns the clamped point and whether any coordinate moved.
    pub fn clamp(&self, r: &DVector<f64>) -> (DVector<f64>, bool) {
        let mut out = r.clone();
        let mut clamped = false;
        for i in 0..out.len().min(self.lower.len()) {
            let v = out[i].clamp(self.lower[i], self.upper[i]);
            clamped |= v != out[i];
            out[i] = v;
        }
        (out, clamped)
    }

    pub fn contains(&self, r: &DVector<f64>) -> bool {
        r.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub raw: DVector<f64>,
    pub saturated: DVector<f64>,
    pub was_saturated: bool,
}

pub fn compute_command(
    j_hat: &DMatrix<f64>,
    e_prev: &DVector<f64>,
    lambda_ctrl: f64,
    limits: &CommandLimits,
) -> Result<Command> {
    if !(lambda_ctrl > 0.0) {
        return Err(Error::Config(format!("lambda_ctrl must be positive, got {lambda_ctrl}")));
    }
    if j_hat.nrows() != e_prev.len() {
        return Err(Error::DimensionMismatch {
            expected: j_hat.nrows(),
            actual: e_prev.len(),
        });
    }
    if j_hat.iter().chain(e_prev.iter()).any(|v| !v.is_finite()) || !lambda_ctrl.is_finite() {
        return Err(Error::NonFiniteCommand);
    }
    let q = j_hat.ncols();
    let jt = j_hat.transpose();
    let lhs = DMatrix::identity(q, q) * lambda_ctrl + &jt * j_hat;
    let rhs = &jt * e_prev;
    let raw = lhs
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or(Error::NonFiniteCommand)?;
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteCommand);
    }
    let norm = raw.norm();
    let (saturated, was_saturated) = if norm > limits.max_step {
        (&raw * (limits.max_step / norm), true)
    } else {
        (raw.clone(), false)
    };
    Ok(Command {
        raw,
        saturated,
        was_saturated,
    })
}

/// `r_prev + Δr`, clamped to the workspace when one is given.
pub fn apply_command(
    r_prev: &DVector<f64>,
    delta_r: &DVector<f64>,
    workspace: Option<&Workspace>,
) -> (DVector<f64>, bool) {
    let r = r_prev + delta_r;
    match workspace {
        Some(ws) => ws.clamp(&r),
        None => (r, false),
    }
}

/// Relative slack for calling a step a descent; absorbs round-off once the
/// error has reached its floor.
pub const DESCENT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentReport {
    /// `½(‖e_k‖² − ‖e_{k−1}‖²)`.
    pub measured: f64,
    /// `−Δrᵀ(λI + ½ĴᵀĴ)Δr`.
    pub predicted: f64,
    /// `−e_{k−1}ᵀĴΔr + ½ΔrᵀĴᵀĴΔr`.
    pub expansion: f64,
    pub descended: bool,
}

pub fn lyapunov_check(
    j_hat: &DMatrix<f64>,
    e_prev: &DVector<f64>,
    e_curr: &DVector<f64>,
    delta_r: &DVector<f64>,
    lambda_ctrl: f64,
) -> DescentReport {
    let measured = 0.5 * (e_curr.norm_squared() - e_prev.norm_squared());
    let jd = j_hat * delta_r;
    let predicted = -(lambda_ctrl * delta_r.norm_squared() + 0.5 * jd.norm_squared());
    let expansion = -e_prev.dot(&jd) + 0.5 * jd.norm_squared();
    DescentReport {
        measured,
        predicted,
        expansion,
        descended: measured <= DESCENT_TOLERANCE * (1.0 + e_prev.norm_squared()),
    }
}

/// Stopping rule: `T1 < tol` for `window` consecutive ticks.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    tol: f64,
    window: usize,
    streak: usize,
}

impl ConvergenceMonitor {
    pub fn new(tol: f64, window: usize) -> Self {
        Self { tol, window, streak: 0 }
    }

    /// Records one tick; returns `true` once the streak is long enough.
    pub fn observe(&mut self, t1: f64) -> bool {
        if t1 < self.tol {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= self.window
    }

    pub fn streak(&self) -> usize {
        self.streak
    }
}

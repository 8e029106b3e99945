//! Online gradient adaptation of the controller weight `λ`.
//!
//! With `Z = (λI + ĴᵀĴ)⁻²` the per-step derivatives of the three criteria are
//!
//! ```text
//! ISE: e_kᵀ Ĵ Z Ĵᵀ e_{k−1}
//! IAE: e_kᵀ Ĵ Z Ĵᵀ e_{k−1} / ‖e_k‖
//! JEU: (ω₁ e_kᵀ Ĵ − ω₂ Δr_kᵀ) Z Ĵᵀ e_{k−1}
//! ```

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TunerMode {
    Fix,
    Ise,
    Iae,
    Jeu,
}

impl TunerMode {
    pub const ALL: [TunerMode; 4] = [TunerMode::Fix, TunerMode::Ise, TunerMode::Iae, TunerMode::Jeu];

    pub fn name(self) -> &'static str {
        match self {
            TunerMode::Fix => "fix",
            TunerMode::Ise => "ise",
            TunerMode::Iae => "iae",
            TunerMode::Jeu => "jeu",
        }
    }
}

impl fmt::Display for TunerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TunerMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TunerMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown tuner mode `{s}`")))
    }
}

/// Tuner section of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TunerConfig {
    pub mode: TunerMode,
    pub lambda_init: f64,
    pub d: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            mode: TunerMode::Fix,
            lambda_init: 1.0,
            d: 1e-3,
            omega1: 0.5,
            omega2: 0.5,
            lambda_min: 1e-4,
            lambda_max: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunerState {
    pub lambda_ctrl: f64,
    pub mode: TunerMode,
    pub omega1: f64,
    pub omega2: f64,
    pub d: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl TunerState {
    pub fn from_config(cfg: &TunerConfig) -> Result<Self> {
        if !(cfg.lambda_min > 0.0 && cfg.lambda_min <= cfg.lambda_max) {
            return Err(Error::Config(format!(
                "lambda bounds must satisfy 0 < min <= max, got [{}, {}]",
                cfg.lambda_min, cfg.lambda_max
            )));
        }
        if !(cfg.lambda_init >= cfg.lambda_min && cfg.lambda_init <= cfg.lambda_max) {
            return Err(Error::Config(format!(
                "lambda_init {} outside [{}, {}]",
                cfg.lambda_init, cfg.lambda_min, cfg.lambda_max
            )));
        }
        if !(cfg.d > 0.0) {
            return Err(Error::Config(format!("tuner step d must be positive, got {}", cfg.d)));
        }
        if cfg.mode == TunerMode::Jeu
            && (!(cfg.omega1 > 0.0 && cfg.omega2 > 0.0) || (cfg.omega1 + cfg.omega2 - 1.0).abs() > 1e-12)
        {
            return Err(Error::Config(format!(
                "JEU weights must be positive and sum to 1, got ({}, {})",
                cfg.omega1, cfg.omega2
            )));
        }
        Ok(Self {
            lambda_ctrl: cfg.lambda_init,
            mode: cfg.mode,
            omega1: cfg.omega1,
            omega2: cfg.omega2,
            d: cfg.d,
            lambda_min: cfg.lambda_min,
            lambda_max: cfg.lambda_max,
        })
    }

    pub fn gradient(
        &self,
        j_hat: &DMatrix<f64>,
        e_curr: &DVector<f64>,
        e_prev: &DVector<f64>,
        delta_r: &DVector<f64>,
    ) -> f64 {
        criterion_gradient(
            self.mode,
            j_hat,
            e_curr,
            e_prev,
            delta_r,
            self.lambda_ctrl,
            self.omega1,
            self.omega2,
        )
    }
}

/// `Z Ĵᵀ e_prev` with `Z = (λI + ĴᵀĴ)⁻²`, by two solves.
fn z_jt_e(j_hat: &DMatrix<f64>, e_prev: &DVector<f64>, lambda_ctrl: f64) -> Option<DVector<f64>> {
    let q = j_hat.ncols();
    let a = DMatrix::identity(q, q) * lambda_ctrl + j_hat.transpose() * j_hat;
    let chol = a.cholesky()?;
    let once = chol.solve(&(j_hat.transpose() * e_prev));
    Some(chol.solve(&once))
}

/// Instantaneous `∂H/∂λ` for one tick. Returns 0 for `Fix`, for a vanishing
/// current error, and if the regularized matrix cannot be factored.
#[allow(clippy::too_many_arguments)]
pub fn criterion_gradient(
    mode: TunerMode,
    j_hat: &DMatrix<f64>,
    e_curr: &DVector<f64>,
    e_prev: &DVector<f64>,
    delta_r: &DVector<f64>,
    lambda_ctrl: f64,
    omega1: f64,
    omega2: f64,
) -> f64 {
    if mode == TunerMode::Fix {
        return 0.0;
    }
    let Some(v) = z_jt_e(j_hat, e_prev, lambda_ctrl) else {
        return 0.0;
    };
    let ejt = j_hat.transpose() * e_curr;
    match mode {
        TunerMode::Fix => 0.0,
        TunerMode::Ise => ejt.dot(&v),
        TunerMode::Iae => {
            let n = e_curr.norm();
            if n > 0.0 {
                ejt.dot(&v) / n
            } else {
                0.0
            }
        }
        // Distributed so that ω₂ = 0 reproduces ω₁·ISE bit for bit.
        TunerMode::Jeu => omega1 * ejt.dot(&v) - omega2 * delta_r.dot(&v),
    }
}

/// `λ ← clamp(λ − d·grad, λ_min, λ_max)`; `Fix` keeps `λ`.
pub fn update_lambda(state: &TunerState, grad: f64) -> TunerState {
    let mut next = state.clone();
    if state.mode != TunerMode::Fix && grad.is_finite() {
        next.lambda_ctrl = (state.lambda_ctrl - state.d * grad).clamp(state.lambda_min, state.lambda_max);
    }
    next
}

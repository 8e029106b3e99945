//! Online estimation of the deformation Jacobian `Ĵ ∈ ℝ^{p×q}` from motion /
//! feature increments.
//!
//! The Kalman filters treat the row-major vectorization of `Ĵ` as a random-walk
//! state `x ∈ ℝ^{pq}` observed through `y = Δs = M(Δr) x`, where `M(Δr)` is the
//! block diagonal arrangement of `p` copies of `Δrᵀ`.

mod init;
mod lkf;
mod rls;
mod ukf;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use init::{batch_jacobian, init_jacobian, probe_pairs};
pub use lkf::lkf_step;
pub use rls::{rls_step, RlsState};
pub use ukf::{sigma_weights, ukf_step, UkfParams};

/// Increments below this norm carry no information and are skipped.
pub const MIN_MOTION: f64 = 1e-12;

/// One `(Δr, Δs)` observation.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPair {
    pub delta_r: DVector<f64>,
    pub delta_s: DVector<f64>,
}

impl MeasurementPair {
    pub fn new(delta_r: DVector<f64>, delta_s: DVector<f64>) -> Self {
        Self { delta_r, delta_s }
    }

    pub fn is_informative(&self) -> bool {
        self.delta_r.norm() > MIN_MOTION
    }
}

/// `M_k = diag(Δrᵀ, …, Δrᵀ)` with `p` blocks.
pub fn measurement_matrix(delta_r: &DVector<f64>, p: usize) -> DMatrix<f64> {
    let q = delta_r.len();
    let mut m = DMatrix::zeros(p, p * q);
    for i in 0..p {
        for j in 0..q {
            m[(i, i * q + j)] = delta_r[j];
        }
    }
    m
}

/// Row-major vectorization of a `p×q` matrix.
pub fn jacobian_to_state(jacobian: &DMatrix<f64>) -> DVector<f64> {
    let (p, q) = jacobian.shape();
    DVector::from_fn(p * q, |k, _| jacobian[(k / q, k % q)])
}

/// Inverse of [`jacobian_to_state`].
pub fn state_to_jacobian(x: &DVector<f64>, p: usize, q: usize) -> DMatrix<f64> {
    assert_eq!(x.len(), p * q, "state length must equal p*q");
    DMatrix::from_fn(p, q, |i, j| x[i * q + j])
}

/// Mean and covariance of the vectorized Jacobian plus the noise model.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    /// Process-noise covariance `A` (pq×pq).
    pub process_noise: DMatrix<f64>,
    /// Measurement-noise covariance `B` (p×p).
    pub measurement_noise: DMatrix<f64>,
    rows: usize,
    cols: usize,
    /// `M x̂` after the last update.
    pub last_prediction: Option<DVector<f64>>,
}

impl FilterState {
    pub fn new(
        jacobian: &DMatrix<f64>,
        p0: DMatrix<f64>,
        process_noise: DMatrix<f64>,
        measurement_noise: DMatrix<f64>,
    ) -> Result<Self> {
        let (rows, cols) = jacobian.shape();
        let n = rows * cols;
        for (m, expected, what) in [
            (&p0, n, "P0"),
            (&process_noise, n, "A"),
            (&measurement_noise, rows, "B"),
        ] {
            if m.shape() != (expected, expected) {
                return Err(Error::Config(format!(
                    "{what} must be {expected}x{expected}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(Self {
            x_hat: jacobian_to_state(jacobian),
            p: p0,
            process_noise,
            measurement_noise,
            rows,
            cols,
            last_prediction: None,
        })
    }

    /// Isotropic covariances `P₀ = p0·I`, `A = a·I`, `B = b·I`.
    pub fn isotropic(jacobian: &DMatrix<f64>, p0: f64, a: f64, b: f64) -> Result<Self> {
        let n = jacobian.len();
        let p = jacobian.nrows();
        Self::new(
            jacobian,
            DMatrix::identity(n, n) * p0,
            DMatrix::identity(n, n) * a,
            DMatrix::identity(p, p) * b,
        )
    }

    pub fn jacobian(&self) -> DMatrix<f64> {
        state_to_jacobian(&self.x_hat, self.rows, self.cols)
    }

    pub fn feature_dim(&self) -> usize {
        self.rows
    }

    pub fn motion_dim(&self) -> usize {
        self.cols
    }

    pub(crate) fn check(&self, meas: &MeasurementPair) -> Result<()> {
        if meas.delta_r.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: meas.delta_r.len(),
            });
        }
        if meas.delta_s.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                actual: meas.delta_s.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Rls,
    Lkf,
    Ukf,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [EstimatorKind::Rls, EstimatorKind::Lkf, EstimatorKind::Ukf];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Rls => "rls",
            EstimatorKind::Lkf => "lkf",
            EstimatorKind::Ukf => "ukf",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Estimator section of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    #[serde(rename = "type")]
    pub kind: EstimatorKind,
    /// RLS forgetting factor in (0, 1].
    pub mu: f64,
    pub a_scale: f64,
    pub b_scale: f64,
    pub p0_scale: f64,
    /// Initial RLS matrix `U₀ = u0_scale·I`.
    pub u0_scale: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_scale: f64,
    pub n_probe: usize,
    /// Probe amplitude in pixels.
    pub probe_step: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Lkf,
            mu: 0.99,
            a_scale: 1e-6,
            b_scale: 1e-2,
            p0_scale: 1e-2,
            u0_scale: 1e3,
            alpha: 1.0,
            beta: 2.0,
            lambda_scale: 0.0,
            n_probe: 8,
            probe_step: 2.0,
        }
    }
}

impl EstimatorConfig {
    pub fn with_kind(mut self, kind: EstimatorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::Config(format!("mu must lie in (0, 1], got {}", self.mu)));
        }
        for (v, name) in [
            (self.a_scale, "a_scale"),
            (self.p0_scale, "p0_scale"),
            (self.u0_scale, "u0_scale"),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be non-negative, got {v}")));
            }
        }
        if !(self.b_scale > 0.0) {
            return Err(Error::Config(format!("b_scale must be positive, got {}", self.b_scale)));
        }
        if !(self.u0_scale > 0.0) {
            return Err(Error::Config("u0_scale must be positive".into()));
        }
        if self.probe_step <= 0.0 {
            return Err(Error::Config("probe_step must be positive".into()));
        }
        self.ukf_params().validate_for(1)?;
        Ok(())
    }

    pub fn ukf_params(&self) -> UkfParams {
        UkfParams {
            alpha: self.alpha,
            beta: self.beta,
            lambda_scale: self.lambda_scale,
        }
    }
}

/// What an update produced.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    /// `Ĵ_new Δr`.
    pub prediction: DVector<f64>,
    /// `‖Δs − Ĵ_new Δr‖`.
    pub t2: f64,
}

/// One of the three interchangeable estimators.
#[derive(Debug, Clone)]
pub enum Estimator {
    Rls(RlsState),
    Lkf(FilterState),
    Ukf(FilterState, UkfParams),
}

impl Estimator {
    /// Builds the estimator described by `config` around an initial Jacobian.
    pub fn from_config(config: &EstimatorConfig, jacobian: &DMatrix<f64>) -> Result<Self> {
        config.validate()?;
        Ok(match config.kind {
            EstimatorKind::Rls => Estimator::Rls(RlsState::new(
                jacobian.clone(),
                DMatrix::identity(jacobian.ncols(), jacobian.ncols()) * config.u0_scale,
                config.mu,
            )?),
            EstimatorKind::Lkf => Estimator::Lkf(FilterState::isotropic(
                jacobian,
                config.p0_scale,
                config.a_scale,
                config.b_scale,
            )?),
            EstimatorKind::Ukf => {
                let params = config.ukf_params();
                params.validate_for(jacobian.len())?;
                Estimator::Ukf(
                    FilterState::isotropic(jacobian, config.p0_scale, config.a_scale, config.b_scale)?,
                    params,
                )
            }
        })
    }

    pub fn kind(&self) -> EstimatorKind {
        match self {
            Estimator::Rls(_) => EstimatorKind::Rls,
            Estimator::Lkf(_) => EstimatorKind::Lkf,
            Estimator::Ukf(..) => EstimatorKind::Ukf,
        }
    }

    pub fn jacobian(&self) -> DMatrix<f64> {
        match self {
            Estimator::Rls(s) => s.jacobian.clone(),
            Estimator::Lkf(s) | Estimator::Ukf(s, _) => s.jacobian(),
        }
    }

    /// Incorporates one pair. Returns `None` (and leaves the state untouched)
    /// when the motion is too small to be informative.
    pub fn update(&mut self, meas: &MeasurementPair) -> Result<Option<UpdateReport>> {
        if !meas.is_informative() {
            return Ok(None);
        }
        match self {
            Estimator::Rls(s) => *s = rls_step(s, meas)?,
            Estimator::Lkf(s) => *s = lkf_step(s, meas)?,
            Estimator::Ukf(s, params) => *s = ukf_step(s, params, meas)?,
        }
        let prediction = self.jacobian() * &meas.delta_r;
        let t2 = (&meas.delta_s - &prediction).norm();
        Ok(Some(UpdateReport { prediction, t2 }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn measurement_matrix_examples() {
        let m = measurement_matrix(&DVector::from_vec(vec![3.0, -2.0]), 1);
        assert_eq!(m, DMatrix::from_row_slice(1, 2, &[3.0, -2.0]));
        let m = measurement_matrix(&DVector::from_vec(vec![1.0, 0.0]), 2);
        assert_eq!(
            m,
            DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        );
    }

    proptest! {
        #[test]
        fn measurement_matrix_matches_reshape(
            p in 1usize..7, q in 1usize..4,
            seed in proptest::collection::vec(-5.0f64..5.0, 32),
        ) {
            let x = DVector::from_fn(p * q, |k, _| seed[k % 32] + k as f64 * 0.1);
            let dr = DVector::from_fn(q, |k, _| seed[(31 - k) % 32]);
            let lhs = measurement_matrix(&dr, p) * &x;
            let j = state_to_jacobian(&x, p, q);
            let rhs = &j * &dr;
            // Same products in the same order: exact.
            prop_assert_eq!(lhs, rhs);
            prop_assert_eq!(jacobian_to_state(&j), x);
        }
    }

    #[test]
    fn zero_motion_is_skipped() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        for kind in EstimatorKind::ALL {
            let cfg = EstimatorConfig::default().with_kind(kind);
            let mut est = Estimator::from_config(&cfg, &j).unwrap();
            let meas = MeasurementPair::new(DVector::zeros(2), DVector::from_vec(vec![1.0, 1.0]));
            assert!(est.update(&meas).unwrap().is_none());
            assert_eq!(est.jacobian(), j);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = EstimatorConfig::default();
        cfg.mu = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = EstimatorConfig::default();
        cfg.alpha = 0.05;
        assert!(cfg.validate().is_err());
        let mut cfg = EstimatorConfig::default();
        cfg.b_scale = 0.0;
        assert!(cfg.validate().is_err());
        assert!(EstimatorConfig::default().validate().is_ok());
    }

    #[test]
    fn config_parses_from_toml() {
        let cfg: EstimatorConfig = toml::from_str("type = \"ukf\"\nalpha = 0.5\n").unwrap();
        assert_eq!(cfg.kind, EstimatorKind::Ukf);
        assert_eq!(cfg.alpha, 0.5);
        assert_eq!(cfg.n_probe, 8);
        assert!(toml::from_str::<EstimatorConfig>("bogus = 1").is_err());
    }

    /// Posterior prediction moves toward the measurement for every estimator.
    #[test]
    fn update_reduces_prediction_error() {
        let j_true = DMatrix::from_row_slice(3, 2, &[1.0, -0.5, 0.3, 2.0, -1.2, 0.7]);
        let j0 = DMatrix::from_row_slice(3, 2, &[0.5, 0.0, 0.0, 1.0, -1.0, 0.0]);
        for kind in EstimatorKind::ALL {
            let mut cfg = EstimatorConfig::default().with_kind(kind);
            if kind != EstimatorKind::Rls {
                cfg.a_scale = 0.0;
            }
            let mut est = Estimator::from_config(&cfg, &j0).unwrap();
            for k in 0..50 {
                let t = k as f64 * 0.7;
                let dr = DVector::from_vec(vec![t.cos(), (1.3 * t).sin()]);
                let ds = &j_true * &dr;
                let before = (&ds - est.jacobian() * &dr).norm();
                let rep = est.update(&MeasurementPair::new(dr, ds)).unwrap().unwrap();
                assert!(rep.t2 <= before + 1e-9, "{kind}: {} > {before}", rep.t2);
            }
        }
    }
}

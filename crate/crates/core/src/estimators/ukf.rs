use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{measurement_matrix, symmetrize, FilterState, MeasurementPair};
use crate::error::{Error, Result};

/// Unscented-transform scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UkfParams {
    /// Sigma-point spread, `0.1 ≤ α ≤ 1`.
    pub alpha: f64,
    /// Prior-distribution parameter, 2 for Gaussians.
    pub beta: f64,
    /// Secondary scale, usually 0.
    pub lambda_scale: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 2.0,
            lambda_scale: 0.0,
        }
    }
}

impl UkfParams {
    /// `κ = α²(n + λ) − n`
    pub fn kappa(&self, n: usize) -> f64 {
        let n = n as f64;
        self.alpha * self.alpha * (n + self.lambda_scale) - n
    }

    pub fn validate_for(&self, n: usize) -> Result<()> {
        if !(0.1..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "UKF alpha must lie in [0.1, 1], got {}",
                self.alpha
            )));
        }
        if !(n as f64 + self.kappa(n) > 0.0) {
            return Err(Error::Config(format!(
                "UKF requires n + kappa > 0 (n = {n}, kappa = {})",
                self.kappa(n)
            )));
        }
        Ok(())
    }
}

/// Mean and covariance weights `(W⁽ᵐ⁾, W⁽ᶜ⁾)` for `2n+1` sigma points.
pub fn sigma_weights(params: &UkfParams, n: usize) -> (Vec<f64>, Vec<f64>) {
    let kappa = params.kappa(n);
    let c = n as f64 + kappa;
    let w0m = kappa / c;
    let w0c = w0m + (1.0 - params.alpha * params.alpha + params.beta);
    let wi = 1.0 / (2.0 * c);
    let mut wm = vec![wi; 2 * n + 1];
    let mut wc = wm.clone();
    wm[0] = w0m;
    wc[0] = w0c;
    (wm, wc)
}

/// Columns of a symmetric square root `S Sᵀ = scale·P` by eigen-decomposition.
/// Small negative eigenvalues from round-off are clipped to zero; a clearly
/// indefinite `P` is projected to the nearest PSD matrix once before giving up.
fn sqrt_columns(p: &DMatrix<f64>, scale: f64) -> Result<DMatrix<f64>> {
    let norm = p.amax().max(f64::MIN_POSITIVE);
    let mut attempt = p.clone();
    for _ in 0..2 {
        let eig = SymmetricEigen::new(attempt.clone());
        if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
            break;
        }
        if eig.eigenvalues.min() >= -1e-9 * norm {
            let mut cols = eig.eigenvectors.clone();
            for (j, mut col) in cols.column_iter_mut().enumerate() {
                col *= (scale * eig.eigenvalues[j].max(0.0)).sqrt();
            }
            return Ok(cols);
        }
        let clipped = eig.eigenvalues.map(|v| v.max(0.0));
        attempt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
        symmetrize(&mut attempt);
    }
    Err(Error::DecompositionFailure(
        "covariance is not positive semi-definite".into(),
    ))
}

/// One unscented Kalman filter step with identity dynamics and the linear
/// observation `γ = M χ`.
///
/// Sigma points are drawn once from the posterior of the previous step and
/// used for both the prediction and the observation statistics; the process
/// noise `A` enters the predicted covariance only. With `A = 0` the step
/// reproduces the linear Kalman filter exactly.
pub fn ukf_step(state: &FilterState, params: &UkfParams, meas: &MeasurementPair) -> Result<FilterState> {
    state.check(meas)?;
    let n = state.x_hat.len();
    params.validate_for(n)?;
    let m = measurement_matrix(&meas.delta_r, state.feature_dim());
    let (wm, wc) = sigma_weights(params, n);
    let spread = n as f64 + params.kappa(n);

    let root = sqrt_columns(&state.p, spread)?;
    let mut sigma = Vec::with_capacity(2 * n + 1);
    sigma.push(state.x_hat.clone());
    for i in 0..n {
        sigma.push(&state.x_hat + root.column(i));
    }
    for i in 0..n {
        sigma.push(&state.x_hat - root.column(i));
    }

    // Identity dynamics: χ_k = χ_{k-1}.
    let x_prior = sigma
        .iter()
        .zip(&wm)
        .fold(DVector::zeros(n), |acc, (s, w)| acc + s * *w);
    let gamma: Vec<DVector<f64>> = sigma.iter().map(|s| &m * s).collect();
    let y_prior = gamma
        .iter()
        .zip(&wm)
        .fold(DVector::zeros(m.nrows()), |acc, (g, w)| acc + g * *w);

    let mut p_prior = state.process_noise.clone();
    let mut p_y = state.measurement_noise.clone();
    let mut p_xy = DMatrix::zeros(n, m.nrows());
    for ((s, g), w) in sigma.iter().zip(&gamma).zip(&wc) {
        let dx = s - &x_prior;
        let dy = g - &y_prior;
        p_prior.ger(*w, &dx, &dx, 1.0);
        p_y.ger(*w, &dy, &dy, 1.0);
        p_xy.ger(*w, &dx, &dy, 1.0);
    }

    let inv = p_y
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| p_y.clone().try_inverse())
        .ok_or(Error::SingularInnovation)?;
    let gain = &p_xy * inv;
    let x_hat = &x_prior + &gain * (&meas.delta_s - &y_prior);
    let mut p = p_prior - &gain * &p_y * gain.transpose();
    symmetrize(&mut p);

    Ok(FilterState {
        last_prediction: Some(&m * &x_hat),
        x_hat,
        p,
        ..state.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::lkf_step;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn weights_sum_to_one() {
        for n in [1, 2, 4, 36] {
            for alpha in [0.1, 0.3, 1.0] {
                for lambda_scale in [0.0, 1.0, 3.0] {
                    let params = UkfParams { alpha, beta: 2.0, lambda_scale };
                    let (wm, _) = sigma_weights(&params, n);
                    assert_relative_eq!(wm.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
                    assert_relative_eq!(wm[0], params.kappa(n) / (n as f64 + params.kappa(n)), epsilon = 1e-15);
                }
            }
        }
    }

    #[test]
    fn alpha_gate() {
        assert!(UkfParams { alpha: 0.05, ..Default::default() }.validate_for(4).is_err());
        assert!(UkfParams { alpha: 1.5, ..Default::default() }.validate_for(4).is_err());
        assert!(UkfParams { alpha: 0.1, ..Default::default() }.validate_for(4).is_ok());
    }

    fn random_instance(rng: &mut ChaCha8Rng, a_scale: f64) -> FilterState {
        let j = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
        let l = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-0.5..0.5));
        let p0 = &l * l.transpose() + DMatrix::identity(4, 4) * 0.05;
        let lb = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.3..0.3));
        let b = &lb * lb.transpose() + DMatrix::identity(2, 2) * 0.01;
        FilterState::new(&j, p0, DMatrix::identity(4, 4) * a_scale, b).unwrap()
    }

    #[test]
    fn matches_lkf_without_process_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for alpha in [0.1, 0.5, 1.0] {
            let params = UkfParams { alpha, beta: 2.0, lambda_scale: 0.0 };
            for _ in 0..10 {
                let s = random_instance(&mut rng, 0.0);
                let meas = MeasurementPair::new(
                    DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
                    DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)),
                );
                let a = lkf_step(&s, &meas).unwrap();
                let b = ukf_step(&s, &params, &meas).unwrap();
                assert!((&a.x_hat - &b.x_hat).norm() <= 1e-6 * a.x_hat.norm().max(1e-12));
                assert!((&a.p - &b.p).norm() <= 1e-6 * a.p.norm());
            }
        }
    }

    #[test]
    fn process_noise_enters_prediction_only() {
        // With A > 0 the gain is computed from P rather than P + A, so the
        // two filters differ at order A.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_instance(&mut rng, 1e-2);
        let meas = MeasurementPair::new(DVector::from_vec(vec![0.4, -0.9]), DVector::from_vec(vec![1.0, 0.3]));
        let a = lkf_step(&s, &meas).unwrap();
        let b = ukf_step(&s, &UkfParams::default(), &meas).unwrap();
        let rel = (&a.x_hat - &b.x_hat).norm() / a.x_hat.norm();
        assert!(rel > 1e-6 && rel < 0.1, "{rel}");
        // Both keep a symmetric PSD covariance.
        for p in [&a.p, &b.p] {
            assert!((p - p.transpose()).amax() <= 1e-12 * p.amax());
            assert!(SymmetricEigen::new(p.clone()).eigenvalues.min() >= -1e-9 * p.amax());
        }
    }

    #[test]
    fn indefinite_covariance_is_repaired() {
        let j = DMatrix::from_element(2, 1, 1.0);
        let mut s = FilterState::isotropic(&j, 1.0, 0.0, 1.0).unwrap();
        s.p[(1, 1)] = -1e-3;
        let meas = MeasurementPair::new(DVector::from_element(1, 1.0), DVector::from_vec(vec![1.5, 0.5]));
        let next = ukf_step(&s, &UkfParams::default(), &meas).unwrap();
        assert!(next.x_hat.iter().all(|v| v.is_finite()));
    }
}

use nalgebra::DMatrix;

use super::{measurement_matrix, symmetrize, FilterState, MeasurementPair};
use crate::error::{Error, Result};

/// One linear Kalman filter step for the random-walk Jacobian model.
///
/// ```text
/// P⁻ = P + A
/// H  = P⁻ Mᵀ (M P⁻ Mᵀ + B)⁻¹
/// x̂  = x̂ + H (y − M x̂)
/// P  = (I − H M) P⁻
/// ```
pub fn lkf_step(state: &FilterState, meas: &MeasurementPair) -> Result<FilterState> {
    state.check(meas)?;
    let n = state.x_hat.len();
    let m = measurement_matrix(&meas.delta_r, state.feature_dim());

    let p_prior = &state.p + &state.process_noise;
    let pm_t = &p_prior * m.transpose();
    let innovation_cov = &m * &pm_t + &state.measurement_noise;
    let inv = innovation_cov
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| innovation_cov.try_inverse())
        .ok_or(Error::SingularInnovation)?;
    let gain = pm_t * inv;

    let innovation = &meas.delta_s - &m * &state.x_hat;
    let x_hat = &state.x_hat + &gain * innovation;
    let mut p = (DMatrix::identity(n, n) - &gain * &m) * p_prior;
    symmetrize(&mut p);

    Ok(FilterState {
        last_prediction: Some(&m * &x_hat),
        x_hat,
        p,
        ..state.clone()
    })
}

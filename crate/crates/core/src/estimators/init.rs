use nalgebra::DMatrix;

use super::{Estimator, EstimatorConfig, MeasurementPair};
use crate::controller::Workspace;
use crate::error::{Error, Result};
use crate::features::RANK_TOLERANCE;
use crate::plant::Plant;

/// Axis-aligned `±` probes around the current position.
///
/// Probe `i` moves along axis `(i / 2) mod q` with sign `+` for even `i`,
/// amplitude `step · (1 + ⌊i / 2q⌋)`, and returns to the start afterwards.
/// Targets are clamped to `workspace` and to what the plant can reach, so the
/// recorded `Δr` is the motion that actually happened.
pub fn probe_pairs(
    plant: &mut dyn Plant,
    workspace: Option<&Workspace>,
    n_probe: usize,
    step: f64,
) -> Result<Vec<MeasurementPair>> {
    let q = plant.motion_dim();
    if n_probe < q {
        return Err(Error::InsufficientSamples {
            rows: n_probe,
            features: q,
        });
    }
    let r0 = plant.position();
    let s0 = plant.features().clone();
    let mut pairs = Vec::with_capacity(n_probe);
    for i in 0..n_probe {
        let axis = (i / 2) % q;
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        let amplitude = step * (1 + i / (2 * q)) as f64;
        let mut target = r0.clone();
        target[axis] += sign * amplitude;
        if let Some(ws) = workspace {
            target = ws.clamp(&target).0;
        }
        let target = plant.reachable(target).0;
        plant.move_to(&target)?;
        pairs.push(MeasurementPair::new(&target - &r0, plant.features() - &s0));
    }
    plant.move_to(&r0)?;
    Ok(pairs)
}

/// Least-squares `Ĵ = argmin Σ ‖Δs − J Δr‖²`.
pub fn batch_jacobian(pairs: &[MeasurementPair]) -> Result<DMatrix<f64>> {
    let first = pairs.first().ok_or(Error::InsufficientSamples { rows: 0, features: 1 })?;
    let q = first.delta_r.len();
    let p = first.delta_s.len();
    let mut rr = DMatrix::zeros(q, q);
    let mut sr = DMatrix::zeros(p, q);
    for pair in pairs {
        rr.ger(1.0, &pair.delta_r, &pair.delta_r, 1.0);
        sr.ger(1.0, &pair.delta_s, &pair.delta_r, 1.0);
    }
    let svd = rr.clone().svd(false, false);
    let (max, min) = (svd.singular_values.max(), svd.singular_values.min());
    if !(min > RANK_TOLERANCE * max) {
        return Err(Error::SingularRegression(
            "probe motions do not span the motion space".into(),
        ));
    }
    let inv = rr.try_inverse().ok_or_else(|| {
        Error::SingularRegression("probe motions do not span the motion space".into())
    })?;
    Ok(sr * inv)
}

/// Probes the plant and builds the configured estimator around the batch
/// estimate. Returns the estimator together with the probe pairs.
pub fn init_jacobian(
    plant: &mut dyn Plant,
    workspace: Option<&Workspace>,
    config: &EstimatorConfig,
) -> Result<(Estimator, Vec<MeasurementPair>)> {
    config.validate()?;
    let pairs = probe_pairs(plant, workspace, config.n_probe, config.probe_step)?;
    let jacobian = batch_jacobian(&pairs)?;
    Ok((Estimator::from_config(config, &jacobian)?, pairs))
}

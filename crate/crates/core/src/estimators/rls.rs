use nalgebra::DMatrix;

use super::{symmetrize, MeasurementPair};
use crate::error::{Error, Result};

/// Recursive least squares with exponential forgetting.
#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    pub jacobian: DMatrix<f64>,
    /// q×q inverse-information matrix.
    pub u: DMatrix<f64>,
    /// Forgetting factor in (0, 1].
    pub mu: f64,
}

impl RlsState {
    pub fn new(jacobian: DMatrix<f64>, u: DMatrix<f64>, mu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu <= 1.0) {
            return Err(Error::Config(format!("forgetting factor must lie in (0, 1], got {mu}")));
        }
        let q = jacobian.ncols();
        if u.shape() != (q, q) {
            return Err(Error::DimensionMismatch {
                expected: q,
                actual: u.nrows(),
            });
        }
        Ok(Self { jacobian, u, mu })
    }
}

/// ```text
/// Ĵ ← Ĵ + (y − Ĵ Δr) Δrᵀ U / (μ + Δrᵀ U Δr)
/// U ← (U − U Δr Δrᵀ U / (μ + Δrᵀ U Δr)) / μ
/// ```
pub fn rls_step(state: &RlsState, meas: &MeasurementPair) -> Result<RlsState> {
    let (p, q) = state.jacobian.shape();
    if meas.delta_r.len() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            actual: meas.delta_r.len(),
        });
    }
    if meas.delta_s.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            actual: meas.delta_s.len(),
        });
    }
    let dr = &meas.delta_r;
    let u_dr = &state.u * dr;
    let denom = state.mu + dr.dot(&u_dr);
    let residual = &meas.delta_s - &state.jacobian * dr;
    let jacobian = &state.jacobian + &residual * u_dr.transpose() / denom;
    let mut u = (&state.u - &u_dr * u_dr.transpose() / denom) / state.mu;
    symmetrize(&mut u);
    Ok(RlsState {
        jacobian,
        u,
        mu: state.mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DVector, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_innovation_keeps_jacobian() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let s = RlsState::new(j.clone(), DMatrix::identity(2, 2), 0.9).unwrap();
        let dr = DVector::from_vec(vec![0.5, -1.0]);
        let next = rls_step(&s, &MeasurementPair::new(dr.clone(), &j * dr)).unwrap();
        assert_eq!(next.jacobian, j);
    }

    #[test]
    fn converges_to_batch_solution() {
        // Batch least-squares oracle: with orthogonal unit excitations and
        // exact linear data the batch solution is J itself; RLS with a large
        // U₀ reaches it after q updates up to the 1/U₀ prior weight.
        let j_true = DMatrix::from_row_slice(2, 2, &[1.5, -0.25, 0.75, 2.0]);
        let mut s = RlsState::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2) * 1e12, 1.0).unwrap();
        for axis in 0..2 {
            let mut dr = DVector::zeros(2);
            dr[axis] = 1.0;
            s = rls_step(&s, &MeasurementPair::new(dr.clone(), &j_true * dr)).unwrap();
        }
        assert!((&s.jacobian - &j_true).amax() <= 1e-10);
    }

    #[test]
    fn u_stays_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = RlsState::new(DMatrix::zeros(3, 2), DMatrix::identity(2, 2) * 1e3, 0.98).unwrap();
        for _ in 0..1000 {
            let dr = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let ds = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            s = rls_step(&s, &MeasurementPair::new(dr, ds)).unwrap();
            assert!((&s.u - s.u.transpose()).amax() == 0.0);
            assert!(SymmetricEigen::new(s.u.clone()).eigenvalues.min() > 0.0);
        }
    }

    #[test]
    fn rejects_bad_forgetting_factor() {
        assert!(RlsState::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1), 1.5).is_err());
        assert!(RlsState::new(DMatrix::zeros(1, 1), DMatrix::identity(1, 1), 0.0).is_err());
    }
}

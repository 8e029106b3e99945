use std::time::Instant;

use nalgebra::{Matrix2, SymmetricEigen};

use super::runlog::{Outcome, RunLog, TickRecord};
use super::scenario::Scenario;
use crate::controller::{apply_command, compute_command, lyapunov_check, ConvergenceMonitor, ServoGoal};
use crate::error::{Error, Result};
use crate::estimators::{init_jacobian, MeasurementPair};
use crate::features::{Contour, Point2, Regressor};
use crate::plant::{CenterlineStage, Plant, RodPlant};
use crate::rod::{sample_contour, settle, solve_equilibrium, RodState};
use crate::tuner::{update_lambda, TunerState};

/// Ratio of minor to major principal standard deviation of the points.
pub fn bend_ratio(contour: &Contour) -> f64 {
    let n = contour.len() as f64;
    let mean = contour.points().iter().fold(Point2::zeros(), |a, p| a + p) / n;
    let cov = contour
        .points()
        .iter()
        .fold(Matrix2::zeros(), |a, p| a + (p - mean) * (p - mean).transpose())
        / n;
    let eig = SymmetricEigen::new(cov).eigenvalues;
    let (lo, hi) = (eig.min().max(0.0), eig.max());
    if hi > 0.0 {
        (lo / hi).sqrt()
    } else {
        0.0
    }
}

/// Rejects straight target contours: their features admit no bending
/// direction the rod can be driven along, so servoing towards them stalls.
pub fn check_not_straight(contour: &Contour, tolerance: f64) -> Result<()> {
    let ratio = bend_ratio(contour);
    if ratio < tolerance {
        return Err(Error::SingularRegression(format!(
            "target contour is straight (bend ratio {ratio:.2e} < {tolerance:.1e}); the rod Jacobian collapses at full extension"
        )));
    }
    Ok(())
}

/// Target and initial rod states for a servo scenario.
pub struct ServoSetup {
    pub start: RodState,
    pub target: RodState,
    pub target_contour: Contour,
}

pub fn prepare_servo(sc: &Scenario) -> Result<ServoSetup> {
    sc.validate()?;
    let start = settle(&sc.rod, Point2::from(sc.servo.start), sc.servo.branch)?;
    let target = match sc.servo.target_branch {
        Some(branch) => settle(&sc.rod, Point2::from(sc.servo.target), branch)?,
        None => solve_equilibrium(&sc.rod, &start, Point2::from(sc.servo.target))?,
    };
    let target_contour = sample_contour(&sc.rod, &target, sc.samples)?;
    check_not_straight(&target_contour, sc.servo.straight_tolerance)?;
    Ok(ServoSetup {
        start,
        target,
        target_contour,
    })
}

/// Closed-loop shape servoing. A diverged run is returned as a log with a
/// [`Outcome::Diverged`] outcome; use [`RunLog::check`] to turn it into an
/// error.
pub fn run_servo(sc: &Scenario) -> Result<RunLog> {
    let clock = Instant::now();
    let setup = prepare_servo(sc)?;
    let regressor = Regressor::new(&sc.basis, setup.target_contour.rho())?;
    let goal = ServoGoal {
        s_star: regressor.fit(&setup.target_contour)?,
    };
    let stage = sc
        .centerline
        .enabled
        .unwrap_or(true)
        .then(|| CenterlineStage::new(sc.centerline.box_size, sc.seed));
    let mut plant = RodPlant::new(sc.rod.clone(), setup.start.clone(), &sc.basis, sc.samples, stage)?;
    let workspace = sc.controller.workspace()?;
    let limits = sc.controller.limits()?;
    let (mut estimator, _) = init_jacobian(&mut plant, Some(&workspace), &sc.estimator)?;
    let mut tuner = TunerState::from_config(&sc.tuner)?;
    let mut monitor = ConvergenceMonitor::new(sc.controller.tol_t1, sc.controller.window);

    let mut s_prev = plant.features().clone();
    let mut e_prev = goal.error(plant.feature_vector())?;
    let t1_0 = plant.contour().distance(&setup.target_contour)?;
    let limit = sc.controller.divergence_factor * t1_0.max(sc.controller.tol_t1);
    let q = plant.motion_dim();
    let mut records = vec![TickRecord {
        k: 0,
        r: plant.position().as_slice().to_vec(),
        dr_raw: vec![0.0; q],
        dr: vec![0.0; q],
        s: s_prev.as_slice().to_vec(),
        e_norm: Some(e_prev.norm()),
        t1: Some(t1_0),
        t2: None,
        lambda: Some(tuner.lambda_ctrl),
        dv_measured: None,
        dv_predicted: None,
        saturated: false,
        clamped: false,
        lyapunov_violated: false,
    }];

    let mut outcome = Outcome::MaxSteps;
    if monitor.observe(t1_0) {
        outcome = Outcome::Converged { steps: 0 };
    }
    let mut k = 0;
    while outcome == Outcome::MaxSteps && k < sc.controller.max_steps {
        k += 1;
        let j_hat = estimator.jacobian();
        let lambda = tuner.lambda_ctrl;
        let cmd = compute_command(&j_hat, &e_prev, lambda, &limits)?;
        let r_prev = plant.position();
        let (r_ws, clamped_ws) = apply_command(&r_prev, &cmd.saturated, Some(&workspace));
        let (r_new, clamped_reach) = plant.reachable(r_ws);
        plant.move_to(&r_new)?;
        let dr = &r_new - &r_prev;

        let s = plant.features().clone();
        let e = goal.error(plant.feature_vector())?;
        let report = estimator.update(&MeasurementPair::new(dr.clone(), &s - &s_prev))?;
        let descent = lyapunov_check(&j_hat, &e_prev, &e, &cmd.raw, lambda);
        let grad = tuner.gradient(&estimator.jacobian(), &e, &e_prev, &dr);
        tuner = update_lambda(&tuner, grad);
        let t1 = plant.contour().distance(&setup.target_contour)?;

        records.push(TickRecord {
            k,
            r: r_new.as_slice().to_vec(),
            dr_raw: cmd.raw.as_slice().to_vec(),
            dr: dr.as_slice().to_vec(),
            s: s.as_slice().to_vec(),
            e_norm: Some(e.norm()),
            t1: Some(t1),
            t2: report.map(|r| r.t2),
            lambda: Some(lambda),
            dv_measured: Some(descent.measured),
            dv_predicted: Some(descent.predicted),
            saturated: cmd.was_saturated,
            clamped: clamped_ws || clamped_reach,
            lyapunov_violated: !descent.descended,
        });

        if t1 > limit {
            outcome = Outcome::Diverged { tick: k, t1, limit };
        } else if monitor.observe(t1) {
            outcome = Outcome::Converged {
                steps: k + 1 - sc.controller.window,
            };
        }
        s_prev = s;
        e_prev = e;
    }

    Ok(RunLog {
        name: String::new(),
        estimator: sc.estimator.kind.to_string(),
        tuner: sc.tuner.mode.to_string(),
        records,
        outcome,
        wall_time: clock.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rod::{Branch, RodModel};

    #[test]
    fn straight_contour_rejected() {
        let model = RodModel::default();
        let straight = RodState::straight(&model);
        let c = sample_contour(&model, &straight, 100).unwrap();
        assert_eq!(bend_ratio(&c), 0.0);
        assert!(matches!(check_not_straight(&c, 1e-3), Err(Error::SingularRegression(_))));
        let bent = settle(&model, Point2::new(420.0, 380.0), Branch::Left).unwrap();
        let c = sample_contour(&model, &bent, 100).unwrap();
        assert!(check_not_straight(&c, 1e-3).is_ok());
    }
}

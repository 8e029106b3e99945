//! Plants that the servo loop and the probing routine drive.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::centerline::{resample_equidistant, sort_centerline, PointCloud};
use crate::error::{Error, Result};
use crate::features::{BasisSpec, Contour, FeatureVector, Point2, Regressor};
use crate::rod::{sample_contour, solve_equilibrium, RodModel, RodState};

/// Position-controlled system whose output is a feature vector.
pub trait Plant {
    /// Current actuator position `r`.
    fn position(&self) -> DVector<f64>;
    /// Features at the current position.
    fn features(&self) -> &DVector<f64>;
    /// Moves to `target` and refreshes the features.
    fn move_to(&mut self, target: &DVector<f64>) -> Result<()>;

    /// Nearest position the plant can actually reach, with a flag telling
    /// whether `target` had to be moved.
    fn reachable(&self, target: DVector<f64>) -> (DVector<f64>, bool) {
        (target, false)
    }

    fn motion_dim(&self) -> usize {
        self.position().len()
    }
}

/// `s = s₀ + J (r − r₀)`.
#[derive(Debug, Clone)]
pub struct LinearPlant {
    jacobian: DMatrix<f64>,
    r0: DVector<f64>,
    s0: DVector<f64>,
    r: DVector<f64>,
    s: DVector<f64>,
}

impl LinearPlant {
    pub fn new(jacobian: DMatrix<f64>, r0: DVector<f64>, s0: DVector<f64>) -> Result<Self> {
        if jacobian.shape() != (s0.len(), r0.len()) {
            return Err(Error::DimensionMismatch {
                expected: s0.len() * r0.len(),
                actual: jacobian.len(),
            });
        }
        Ok(Self {
            jacobian,
            r: r0.clone(),
            s: s0.clone(),
            r0,
            s0,
        })
    }

    pub fn jacobian(&self) -> &DMatrix<f64> {
        &self.jacobian
    }

    /// Features this plant would show at `r`.
    pub fn features_at(&self, r: &DVector<f64>) -> DVector<f64> {
        &self.s0 + &self.jacobian * (r - &self.r0)
    }
}

impl Plant for LinearPlant {
    fn position(&self) -> DVector<f64> {
        self.r.clone()
    }

    fn features(&self) -> &DVector<f64> {
        &self.s
    }

    fn move_to(&mut self, target: &DVector<f64>) -> Result<()> {
        if target.len() != self.r.len() {
            return Err(Error::DimensionMismatch {
                expected: self.r.len(),
                actual: target.len(),
            });
        }
        self.s = self.features_at(target);
        self.r = target.clone();
        Ok(())
    }
}

/// Optional vision-like stage: shuffle the sampled points, order them again
/// from the clamp end and resample.
#[derive(Debug, Clone)]
pub struct CenterlineStage {
    pub box_size: f64,
    rng: ChaCha8Rng,
}

impl CenterlineStage {
    pub fn new(box_size: f64, seed: u64) -> Self {
        Self {
            box_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn process(&mut self, contour: &Contour, start: Point2) -> Result<Contour> {
        let mut points = contour.points().to_vec();
        points.shuffle(&mut self.rng);
        let ordered = sort_centerline(&PointCloud::new(points, start), self.box_size)?;
        resample_equidistant(&ordered, contour.len())
    }
}

/// Simulated rod observed through fitted contour features.
#[derive(Debug, Clone)]
pub struct RodPlant {
    model: RodModel,
    state: RodState,
    regressor: Regressor,
    samples: usize,
    stage: Option<CenterlineStage>,
    contour: Contour,
    features: FeatureVector,
    values: DVector<f64>,
}

impl RodPlant {
    pub fn new(
        model: RodModel,
        state: RodState,
        basis: &BasisSpec,
        samples: usize,
        stage: Option<CenterlineStage>,
    ) -> Result<Self> {
        model.validate()?;
        let contour = sample_contour(&model, &state, samples)?;
        let regressor = Regressor::new(basis, contour.rho())?;
        let mut plant = Self {
            model,
            state,
            regressor,
            samples,
            stage,
            features: FeatureVector::new(basis.clone(), DVector::zeros(basis.feature_dim()))?,
            values: DVector::zeros(basis.feature_dim()),
            contour,
        };
        plant.observe()?;
        Ok(plant)
    }

    fn observe(&mut self) -> Result<()> {
        let sampled = sample_contour(&self.model, &self.state, self.samples)?;
        self.contour = match &mut self.stage {
            Some(stage) => stage.process(&sampled, self.model.base())?,
            None => sampled,
        };
        self.features = self.regressor.fit(&self.contour)?;
        self.values = self.features.values().clone();
        Ok(())
    }

    pub fn model(&self) -> &RodModel {
        &self.model
    }

    pub fn state(&self) -> &RodState {
        &self.state
    }

    /// Observed contour (after the optional centerline stage).
    pub fn contour(&self) -> &Contour {
        &self.contour
    }

    pub fn feature_vector(&self) -> &FeatureVector {
        &self.features
    }

    pub fn gripper(&self) -> Point2 {
        self.state.gripper
    }
}

impl Plant for RodPlant {
    fn position(&self) -> DVector<f64> {
        DVector::from_column_slice(self.state.gripper.as_slice())
    }

    fn features(&self) -> &DVector<f64> {
        &self.values
    }

    fn move_to(&mut self, target: &DVector<f64>) -> Result<()> {
        if target.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                actual: target.len(),
            });
        }
        let gripper = Point2::new(target[0], target[1]);
        self.state = solve_equilibrium(&self.model, &self.state, gripper)?;
        self.observe()
    }

    /// Pulls `target` back inside the disc the gripper can reach, keeping
    /// clear of full extension where the rod is straight.
    fn reachable(&self, target: DVector<f64>) -> (DVector<f64>, bool) {
        if target.len() != 2 {
            return (target, false);
        }
        let base = self.model.base();
        let p = Point2::new(target[0], target[1]);
        let d = (p - base).norm();
        let max = self.model.length * (1.0 - 1e-6);
        if d <= max {
            return (target, false);
        }
        let q = base + (p - base) * (max / d);
        (DVector::from_vec(vec![q.x, q.y]), true)
    }

    fn motion_dim(&self) -> usize {
        2
    }
}

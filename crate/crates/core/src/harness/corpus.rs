use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::Scenario;
use crate::error::Result;
use crate::features::{fit_features, mean_reconstruction_error, BasisFamily, BasisSpec, Contour, Point2};
use crate::rod::{sample_contour, settle, Branch};

/// Bases compared at matched `p = 18`. The NURBS entry takes its weights
/// from the scenario basis when that is a degree-8 NURBS.
pub fn comparison_bases(sc: &Scenario) -> Vec<BasisSpec> {
    let nurbs = if sc.basis.family == BasisFamily::Nurbs && sc.basis.degree == 8 {
        sc.basis.clone()
    } else {
        BasisSpec::nurbs(8)
    };
    vec![
        BasisSpec::polynomial(8),
        BasisSpec::bezier(8),
        nurbs,
        BasisSpec::fourier(4),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub basis: BasisSpec,
    pub shapes: usize,
    pub mean_error: f64,
    pub max_error: f64,
    pub mean_fit_time: f64,
}

impl FeatureRow {
    pub fn dim(&self) -> usize {
        self.basis.feature_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub rows: Vec<FeatureRow>,
    /// Shapes that could not be generated or fitted, with the reason.
    pub failures: Vec<(usize, String)>,
}

impl FeatureTable {
    pub fn row(&self, family: BasisFamily) -> Option<&FeatureRow> {
        self.rows.iter().find(|r| r.basis.family == family)
    }
}

/// Seeded corpus of rod contours from random reachable gripper poses.
pub fn shape_corpus(sc: &Scenario) -> (Vec<Contour>, Vec<(usize, String)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let ws = sc.controller.workspace().expect("validated workspace");
    let base = sc.rod.base();
    let c = &sc.corpus;
    let mut contours = Vec::with_capacity(c.shapes);
    let mut failures = Vec::new();
    for i in 0..c.shapes {
        let gripper = loop {
            let reach = sc.rod.length * rng.random_range(c.min_reach..c.max_reach);
            let angle = sc.rod.clamp_angle + rng.random_range(-c.max_angle..c.max_angle);
            let g = base + Point2::new(angle.cos(), angle.sin()) * reach;
            if ws.contains(&nalgebra::DVector::from_column_slice(g.as_slice())) {
                break g;
            }
        };
        let branch = if rng.random_bool(0.5) { Branch::Left } else { Branch::Right };
        match settle(&sc.rod, gripper, branch).and_then(|s| sample_contour(&sc.rod, &s, sc.samples)) {
            Ok(contour) => contours.push(contour),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    (contours, failures)
}

pub fn run_feature_comparison(sc: &Scenario) -> Result<FeatureTable> {
    sc.validate()?;
    let (contours, mut failures) = shape_corpus(sc);
    let mut rows = Vec::new();
    for basis in comparison_bases(sc) {
        let mut errors = Vec::with_capacity(contours.len());
        let mut time = 0.0;
        for (i, contour) in contours.iter().enumerate() {
            let clock = Instant::now();
            let fitted = fit_features(&basis, contour);
            time += clock.elapsed().as_secs_f64();
            match fitted.and_then(|s| mean_reconstruction_error(contour, &s)) {
                Ok(e) => errors.push(e),
                Err(e) => failures.push((i, format!("{}: {e}", basis.family))),
            }
        }
        let n = errors.len().max(1) as f64;
        rows.push(FeatureRow {
            shapes: errors.len(),
            mean_error: errors.iter().sum::<f64>() / n,
            max_error: errors.iter().cloned().fold(0.0, f64::max),
            mean_fit_time: time / contours.len().max(1) as f64,
            basis,
        });
    }
    Ok(FeatureTable { rows, failures })
}

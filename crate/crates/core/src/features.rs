//! Linearly parameterized shape features.
//!
//! A planar contour `c̄ = [u₁, v₁, …, u_N, v_N]` is modelled as `c̄ = Ḡ(ρ) s`
//! where every 2-row block of `Ḡ` is a basis row `G(ρᵢ)` evaluated at the
//! normalized arc length of the point. Four families are supported:
//!
//! | family     | block `F_j`                         | `p`        |
//! |------------|-------------------------------------|------------|
//! | polynomial | `diag(ρʲ, ρʲ)`                      | `2(n+1)`   |
//! | Bézier     | `diag(B_{j,n}, B_{j,n})`            | `2(n+1)`   |
//! | NURBS      | `diag(R_{j,n}, R_{j,n})`            | `2(n+1)`   |
//! | Fourier    | `[[cos jρ, sin jρ, 0, 0], [0, 0, cos jρ, sin jρ]]` after a leading `E₂` | `4n+2` |
//!
//! The NURBS family uses Bernstein polynomials as its B-spline basis (degree
//! equal to the number of control points minus one), i.e. a rational Bézier
//! curve with per-control-point weights.
//!
//! Fourier harmonics are evaluated at `jρ` with `ρ ∈ [0, 1]`, without a `2π`
//! factor.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point2 = Vector2<f64>;

/// Smallest admissible ratio between the extreme singular values of `Ḡ`.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Ordered planar contour with its normalized arc-length parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<Point2>,
    rho: Vec<f64>,
}

impl Contour {
    /// Builds a contour and parameterizes it by cumulative chord length.
    pub fn new(points: Vec<Point2>) -> Result<Self> {
        arc_length_param(&points)
    }

    /// Builds a contour with explicit parameters, checking the invariants.
    pub fn with_rho(points: Vec<Point2>, rho: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::DegenerateContour(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if points.len() != rho.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                actual: rho.len(),
            });
        }
        if rho[0] != 0.0 || rho[rho.len() - 1] != 1.0 {
            return Err(Error::DegenerateContour(
                "arc-length parameters must start at 0 and end at 1".into(),
            ));
        }
        if rho.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::DegenerateContour(
                "arc-length parameters must be strictly increasing".into(),
            ));
        }
        Ok(Self { points, rho })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Interleaved `[u₁, v₁, …, u_N, v_N]`.
    pub fn stacked(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.points.len(),
            self.points.iter().flat_map(|p| [p.x, p.y]),
        )
    }

    /// Euclidean norm of the stacked difference `‖c̄ − c̄'‖`.
    pub fn distance(&self, other: &Contour) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(self
            .points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt())
    }

    /// Writes one `u,v` row per point.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_points_csv(path, &self.points)
    }

    /// Reads `u,v` rows and parameterizes them by chord length.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Contour::new(read_points_csv(path)?)
    }
}

/// Normalized cumulative chord length of an ordered point sequence.
pub fn arc_length_param(points: &[Point2]) -> Result<Contour> {
    if points.len() < 2 {
        return Err(Error::DegenerateContour(format!(
            "need at least 2 points, got {}",
            points.len()
        )));
    }
    let mut cumulative = Vec::with_capacity(points.len());
    cumulative.push(0.0);
    let mut total = 0.0;
    for w in points.windows(2) {
        total += (w[1] - w[0]).norm();
        cumulative.push(total);
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateContour(
            "total chord length is zero".into(),
        ));
    }
    let last = cumulative.len() - 1;
    let rho: Vec<f64> = cumulative
        .iter()
        .enumerate()
        .map(|(i, &c)| if i == last { 1.0 } else { c / total })
        .collect();
    // Repeated points give equal parameters; reject them rather than
    // silently nudging the data.
    if rho.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateContour(
            "consecutive coincident points".into(),
        ));
    }
    Ok(Contour {
        points: points.to_vec(),
        rho,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisFamily {
    Polynomial,
    Bezier,
    Nurbs,
    Fourier,
}

impl BasisFamily {
    pub const ALL: [BasisFamily; 4] = [
        BasisFamily::Polynomial,
        BasisFamily::Bezier,
        BasisFamily::Nurbs,
        BasisFamily::Fourier,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BasisFamily::Polynomial => "polynomial",
            BasisFamily::Bezier => "bezier",
            BasisFamily::Nurbs => "nurbs",
            BasisFamily::Fourier => "fourier",
        }
    }
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "polynomial" => Ok(BasisFamily::Polynomial),
            "bezier" => Ok(BasisFamily::Bezier),
            "nurbs" => Ok(BasisFamily::Nurbs),
            "fourier" => Ok(BasisFamily::Fourier),
            other => Err(Error::InvalidBasis(format!("unknown family `{other}`"))),
        }
    }
}

/// Basis family, degree and (for NURBS) control-point weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSpec {
    pub family: BasisFamily,
    pub degree: usize,
    /// NURBS weights `ω₀…ω_n`; empty means all ones.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<f64>,
}

impl BasisSpec {
    pub fn polynomial(degree: usize) -> Self {
        Self::plain(BasisFamily::Polynomial, degree)
    }

    pub fn bezier(degree: usize) -> Self {
        Self::plain(BasisFamily::Bezier, degree)
    }

    /// Rational Bézier with uniform weights.
    pub fn nurbs(degree: usize) -> Self {
        Self::plain(BasisFamily::Nurbs, degree)
    }

    pub fn nurbs_weighted(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidBasis("NURBS needs at least one weight".into()));
        }
        let spec = Self {
            family: BasisFamily::Nurbs,
            degree: weights.len() - 1,
            weights,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn fourier(degree: usize) -> Self {
        Self::plain(BasisFamily::Fourier, degree)
    }

    fn plain(family: BasisFamily, degree: usize) -> Self {
        Self {
            family,
            degree,
            weights: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.weights.is_empty() {
            if self.family != BasisFamily::Nurbs {
                return Err(Error::InvalidBasis(format!(
                    "weights are only meaningful for NURBS, not {}",
                    self.family
                )));
            }
            if self.weights.len() != self.degree + 1 {
                return Err(Error::InvalidBasis(format!(
                    "NURBS of degree {} needs {} weights, got {}",
                    self.degree,
                    self.degree + 1,
                    self.weights.len()
                )));
            }
            if let Some(w) = self.weights.iter().find(|w| !(**w > 0.0) || !w.is_finite()) {
                return Err(Error::InvalidBasis(format!(
                    "NURBS weights must be positive and finite, got {w}"
                )));
            }
        }
        Ok(())
    }

    /// Feature dimension `p`.
    pub fn feature_dim(&self) -> usize {
        match self.family {
            BasisFamily::Fourier => 4 * self.degree + 2,
            _ => 2 * (self.degree + 1),
        }
    }

    fn weight(&self, j: usize) -> f64 {
        self.weights.get(j).copied().unwrap_or(1.0)
    }

    /// Scalar weights of the block-diagonal families at `rho`: `n+1` values.
    ///
    /// # Panics
    /// For the Fourier family, which is not block diagonal.
    pub fn scalar_weights(&self, rho: f64) -> Vec<f64> {
        let n = self.degree;
        match self.family {
            BasisFamily::Polynomial => (0..=n).map(|j| rho.powi(j as i32)).collect(),
            BasisFamily::Bezier => bernstein(n, rho),
            BasisFamily::Nurbs => {
                let mut r = bernstein(n, rho);
                let mut total = 0.0;
                for (j, b) in r.iter_mut().enumerate() {
                    *b *= self.weight(j);
                    total += *b;
                }
                for b in &mut r {
                    *b /= total;
                }
                r
            }
            BasisFamily::Fourier => panic!("Fourier basis has no scalar weights"),
        }
    }

    /// Writes the 2×p block `G(rho)` into rows `row` and `row + 1` of `out`.
    fn fill_rows(&self, rho: f64, out: &mut DMatrix<f64>, row: usize) {
        match self.family {
            BasisFamily::Fourier => {
                out[(row, 0)] = 1.0;
                out[(row + 1, 1)] = 1.0;
                for j in 1..=self.degree {
                    let (s, c) = (j as f64 * rho).sin_cos();
                    let col = 2 + 4 * (j - 1);
                    out[(row, col)] = c;
                    out[(row, col + 1)] = s;
                    out[(row + 1, col + 2)] = c;
                    out[(row + 1, col + 3)] = s;
                }
            }
            _ => {
                for (j, w) in self.scalar_weights(rho).into_iter().enumerate() {
                    out[(row, 2 * j)] = w;
                    out[(row + 1, 2 * j + 1)] = w;
                }
            }
        }
    }
}

impl fmt::Display for BasisSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(n={}, p={})", self.family, self.degree, self.feature_dim())
    }
}

/// Bernstein polynomials `B_{j,n}(ρ)`, `j = 0..=n`.
pub fn bernstein(n: usize, rho: f64) -> Vec<f64> {
    let t = 1.0 - rho;
    let mut binom = 1.0;
    (0..=n)
        .map(|j| {
            if j > 0 {
                binom = binom * (n + 1 - j) as f64 / j as f64;
            }
            binom * t.powi((n - j) as i32) * rho.powi(j as i32)
        })
        .collect()
}

/// The 2×p regression block `G(rho)`.
pub fn basis_row(basis: &BasisSpec, rho: f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(2, basis.feature_dim());
    basis.fill_rows(rho, &mut g, 0);
    g
}

/// Stacks `G(ρᵢ)` for every contour parameter into the 2N×p matrix `Ḡ`.
pub fn stack_regression(basis: &BasisSpec, contour: &Contour) -> Result<DMatrix<f64>> {
    stack_rho(basis, contour.rho())
}

fn stack_rho(basis: &BasisSpec, rho: &[f64]) -> Result<DMatrix<f64>> {
    basis.validate()?;
    let p = basis.feature_dim();
    let rows = 2 * rho.len();
    if rows <= p {
        return Err(Error::InsufficientSamples { rows, features: p });
    }
    let mut g = DMatrix::zeros(rows, p);
    for (i, &r) in rho.iter().enumerate() {
        basis.fill_rows(r, &mut g, 2 * i);
    }
    Ok(g)
}

/// Fitted coefficient vector together with the basis it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    basis: BasisSpec,
    values: DVector<f64>,
}

impl FeatureVector {
    pub fn new(basis: BasisSpec, values: DVector<f64>) -> Result<Self> {
        basis.validate()?;
        if values.len() != basis.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.feature_dim(),
                actual: values.len(),
            });
        }
        Ok(Self { basis, values })
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn into_values(self) -> DVector<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `family,degree,s₁,…,s_p`
    pub fn to_csv_record(&self) -> Vec<String> {
        let mut rec = vec![self.basis.family.to_string(), self.basis.degree.to_string()];
        rec.extend(self.values.iter().map(|v| format!("{v:e}")));
        rec
    }

    /// Inverse of [`FeatureVector::to_csv_record`]. NURBS weights are not part of
    /// the record and must be supplied when they are not uniform.
    pub fn from_csv_record(fields: &[&str], nurbs_weights: Option<Vec<f64>>) -> Result<Self> {
        if fields.len() < 2 {
            return Err(Error::InvalidBasis("feature record needs family and degree".into()));
        }
        let family: BasisFamily = fields[0].parse()?;
        let degree: usize = fields[1]
            .trim()
            .parse()
            .map_err(|e| Error::InvalidBasis(format!("bad degree `{}`: {e}", fields[1])))?;
        let values = fields[2..]
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidBasis(format!("bad coefficient `{f}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let basis = BasisSpec {
            family,
            degree,
            weights: nurbs_weights.unwrap_or_default(),
        };
        FeatureVector::new(basis, DVector::from_vec(values))
    }
}

/// Least-squares solver for a fixed basis and parameter sequence.
///
/// Holds the SVD-based pseudo-inverse of `Ḡ` so that repeated fits on
/// contours sharing the same `ρ` cost one matrix-vector product.
#[derive(Debug, Clone)]
pub struct Regressor {
    basis: BasisSpec,
    rho: Vec<f64>,
    design: DMatrix<f64>,
    pinv: DMatrix<f64>,
    singular_values: DVector<f64>,
}

impl Regressor {
    pub fn new(basis: &BasisSpec, rho: &[f64]) -> Result<Self> {
        let design = stack_rho(basis, rho)?;
        let svd = design.clone().svd(true, true);
        let sv = svd.singular_values.clone();
        let max = sv.max();
        let min = sv.min();
        if !(min > RANK_TOLERANCE * max) {
            return Err(Error::SingularRegression(format!(
                "smallest singular value {min:.3e} below {RANK_TOLERANCE:e} x largest {max:.3e}"
            )));
        }
        let u = svd.u.expect("requested U");
        let v_t = svd.v_t.expect("requested Vᵀ");
        let mut sigma_inv_ut = u.transpose();
        for (i, mut row) in sigma_inv_ut.row_iter_mut().enumerate() {
            row /= sv[i];
        }
        let pinv = v_t.transpose() * sigma_inv_ut;
        Ok(Self {
            basis: basis.clone(),
            rho: rho.to_vec(),
            design,
            pinv,
            singular_values: sv,
        })
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.singular_values
    }

    pub fn condition_number(&self) -> f64 {
        self.singular_values.max() / self.singular_values.min()
    }

    fn matches(&self, rho: &[f64]) -> bool {
        self.rho.len() == rho.len()
            && self.rho.iter().zip(rho).all(|(a, b)| (a - b).abs() <= 1e-12)
    }

    /// Fits `s = argmin ‖c̄ − Ḡ s‖`. Falls back to a fresh factorization when
    /// the contour's parameters differ from the cached ones.
    pub fn fit(&self, contour: &Contour) -> Result<FeatureVector> {
        if self.matches(contour.rho()) {
            let s = &self.pinv * contour.stacked();
            FeatureVector::new(self.basis.clone(), s)
        } else {
            fit_features(&self.basis, contour)
        }
    }
}

/// Least-squares feature vector of `contour` under `basis`.
pub fn fit_features(basis: &BasisSpec, contour: &Contour) -> Result<FeatureVector> {
    Regressor::new(basis, contour.rho())?.fit(contour)
}

/// Evaluates `G(ρ) s` at each requested parameter.
pub fn reconstruct(
    basis: &BasisSpec,
    s: &FeatureVector,
    rho_samples: &[f64],
) -> Result<Vec<Point2>> {
    if s.dim() != basis.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.feature_dim(),
            actual: s.dim(),
        });
    }
    Ok(rho_samples
        .iter()
        .map(|&r| {
            let g = basis_row(basis, r);
            let c = g * s.values();
            Point2::new(c[0], c[1])
        })
        .collect())
}

/// Mean point-wise Euclidean distance between a contour and its
/// reconstruction from `s` at the contour's own parameters.
pub fn mean_reconstruction_error(contour: &Contour, s: &FeatureVector) -> Result<f64> {
    let rec = reconstruct(s.basis(), s, contour.rho())?;
    Ok(contour
        .points()
        .iter()
        .zip(&rec)
        .map(|(a, b)| (a - b).norm())
        .sum::<f64>()
        / contour.len() as f64)
}

pub(crate) fn write_points_csv(path: impl AsRef<Path>, points: &[Point2]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    for p in points {
        w.write_record([format!("{:e}", p.x), format!("{:e}", p.y)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_points_csv(path: impl AsRef<Path>) -> Result<Vec<Point2>> {
    let path = path.as_ref();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        if rec.len() != 2 {
            return Err(Error::parse(
                path,
                format!("expected `u,v`, got {} fields", rec.len()),
            ));
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|e| Error::parse(path, e));
        points.push(Point2::new(parse(&rec[0])?, parse(&rec[1])?));
    }
    Ok(points)
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::parse(path, e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point2> {
        v.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    #[test]
    fn arc_length_examples() {
        let c = arc_length_param(&pts(&[(0.0, 0.0), (1.0, 0.0)])).unwrap();
        assert_eq!(c.rho(), &[0.0, 1.0]);

        let c = arc_length_param(&pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)])).unwrap();
        assert_relative_eq!(c.rho()[1], 0.5, epsilon = 1e-15);

        // chords 3 and 4
        let c = arc_length_param(&pts(&[(0.0, 0.0), (3.0, 0.0), (3.0, 4.0)])).unwrap();
        assert_relative_eq!(c.rho()[1], 3.0 / 7.0, epsilon = 1e-15);
        assert_eq!(c.rho()[2], 1.0);
        // chords 3 and 5
        let c = arc_length_param(&pts(&[(0.0, 0.0), (3.0, 0.0), (0.0, 4.0)])).unwrap();
        assert_relative_eq!(c.rho()[1], 0.375, epsilon = 1e-15);
    }

    #[test]
    fn arc_length_rejects_degenerate() {
        assert!(matches!(
            arc_length_param(&pts(&[(1.0, 1.0), (1.0, 1.0)])),
            Err(Error::DegenerateContour(_))
        ));
        assert!(matches!(
            arc_length_param(&pts(&[(1.0, 1.0)])),
            Err(Error::DegenerateContour(_))
        ));
        assert!(arc_length_param(&pts(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0)])).is_err());
    }

    #[test]
    fn with_rho_checks_invariants() {
        let p = pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        assert!(Contour::with_rho(p.clone(), vec![0.0, 0.5, 1.0]).is_ok());
        assert!(Contour::with_rho(p.clone(), vec![0.0, 0.5, 0.9]).is_err());
        assert!(Contour::with_rho(p.clone(), vec![0.0, 0.0, 1.0]).is_err());
        assert!(Contour::with_rho(p, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn stacked_interleaves() {
        let c = Contour::new(pts(&[(1.0, 2.0), (3.0, 4.0)])).unwrap();
        assert_eq!(c.stacked().as_slice(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn feature_dims() {
        assert_eq!(BasisSpec::polynomial(8).feature_dim(), 18);
        assert_eq!(BasisSpec::bezier(8).feature_dim(), 18);
        assert_eq!(BasisSpec::nurbs(8).feature_dim(), 18);
        assert_eq!(BasisSpec::fourier(4).feature_dim(), 18);
        assert_eq!(BasisSpec::fourier(0).feature_dim(), 2);
        for b in [BasisSpec::polynomial(3), BasisSpec::fourier(3)] {
            assert_eq!(basis_row(&b, 0.3).ncols(), b.feature_dim());
        }
    }

    #[test]
    fn fourier_row_at_zero() {
        let g = basis_row(&BasisSpec::fourier(3), 0.0);
        assert_eq!(g[(0, 0)], 1.0);
        assert_eq!(g[(1, 1)], 1.0);
        for j in 0..3 {
            let c = 2 + 4 * j;
            let block = g.view((0, c), (2, 4));
            assert_eq!(
                block.clone_owned(),
                DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0])
            );
        }
    }

    #[test]
    fn nurbs_hand_example() {
        let b = BasisSpec::nurbs_weighted(vec![1.0, 2.0, 1.0]).unwrap();
        let r = b.scalar_weights(0.5);
        let expect = [0.25 / 1.5, 1.0 / 1.5, 0.25 / 1.5];
        for (a, e) in r.iter().zip(expect) {
            assert_relative_eq!(*a, e, epsilon = 1e-15);
        }
        let g = basis_row(&b, 0.5);
        assert_relative_eq!(g[(0, 2)], 1.0 / 1.5, epsilon = 1e-15);
        assert_relative_eq!(g[(1, 3)], 1.0 / 1.5, epsilon = 1e-15);
        assert_eq!(g[(0, 3)], 0.0);
    }

    #[test]
    fn nurbs_weight_validation() {
        assert!(BasisSpec::nurbs_weighted(vec![1.0, 0.0, 1.0]).is_err());
        assert!(BasisSpec::nurbs_weighted(vec![1.0, -1.0]).is_err());
        let bad = BasisSpec {
            family: BasisFamily::Nurbs,
            degree: 3,
            weights: vec![1.0, 1.0],
        };
        assert!(bad.validate().is_err());
        let wrong_family = BasisSpec {
            family: BasisFamily::Bezier,
            degree: 1,
            weights: vec![1.0, 1.0],
        };
        assert!(wrong_family.validate().is_err());
    }

    #[test]
    fn stack_regression_examples() {
        let one = Contour {
            points: pts(&[(0.0, 0.0)]),
            rho: vec![0.0],
        };
        assert!(matches!(
            stack_regression(&BasisSpec::fourier(0), &one),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(matches!(
            stack_regression(&BasisSpec::bezier(1), &one),
            Err(Error::InsufficientSamples { .. })
        ));

        let c = Contour::new(pts(&[(0.0, 0.0), (1.0, 0.0)])).unwrap();
        let g = stack_regression(&BasisSpec::polynomial(0), &c).unwrap();
        assert_eq!(g.shape(), (4, 2));
        assert_eq!(g, DMatrix::from_row_slice(4, 2, &[1., 0., 0., 1., 1., 0., 0., 1.]));

        // Bezier n = 1 on rho = [0, 1]: endpoints are selected exactly.
        let c = Contour::new(pts(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)])).unwrap();
        let g = stack_regression(&BasisSpec::bezier(1), &c).unwrap();
        assert_eq!(g.row(0).iter().copied().collect::<Vec<_>>(), vec![1., 0., 0., 0.]);
        assert_eq!(g.row(5).iter().copied().collect::<Vec<_>>(), vec![0., 0., 0., 1.]);
    }

    fn bezier_curve(control: &[(f64, f64)], rho: &[f64]) -> Vec<Point2> {
        let n = control.len() - 1;
        rho.iter()
            .map(|&r| {
                bernstein(n, r)
                    .iter()
                    .zip(control)
                    .fold(Point2::zeros(), |acc, (b, &(x, y))| acc + *b * Point2::new(x, y))
            })
            .collect()
    }

    #[test]
    fn exact_bezier_recovered() {
        let control = [(10.0, 5.0), (80.0, 140.0), (200.0, -30.0), (260.0, 90.0)];
        let rho: Vec<f64> = (0..25).map(|i| i as f64 / 24.0).collect();
        let c = Contour::with_rho(bezier_curve(&control, &rho), rho).unwrap();
        let s = fit_features(&BasisSpec::bezier(3), &c).unwrap();
        for (j, &(x, y)) in control.iter().enumerate() {
            assert_relative_eq!(s.values()[2 * j], x, max_relative = 1e-8);
            assert_relative_eq!(s.values()[2 * j + 1], y, max_relative = 1e-8);
        }
        let first = reconstruct(&BasisSpec::bezier(3), &s, &[0.0]).unwrap();
        assert_relative_eq!(first[0].x, 10.0, epsilon = 1e-8);
        assert!(mean_reconstruction_error(&c, &s).unwrap() < 1e-8);
    }

    #[test]
    fn reconstruction_equals_fit_residual() {
        let p: Vec<Point2> = (0..40)
            .map(|i| {
                let t = i as f64 / 39.0;
                Point2::new(300.0 * t, 40.0 * (7.0 * t).sin())
            })
            .collect();
        let c = Contour::new(p).unwrap();
        let basis = BasisSpec::polynomial(4);
        let s = fit_features(&basis, &c).unwrap();
        let g = stack_regression(&basis, &c).unwrap();
        let residual = (c.stacked() - &g * s.values()).norm();
        let rec = Contour::with_rho(reconstruct(&basis, &s, c.rho()).unwrap(), c.rho().to_vec())
            .unwrap();
        assert_relative_eq!(rec.distance(&c).unwrap(), residual, max_relative = 1e-10);
    }

    #[test]
    fn feature_csv_record_round_trip() {
        let s = FeatureVector::new(
            BasisSpec::fourier(1),
            DVector::from_vec(vec![1.0, -2.5, 3.0, 4.25e-3, 5.0, 6.0]),
        )
        .unwrap();
        let rec = s.to_csv_record();
        assert_eq!(rec[0], "fourier");
        let fields: Vec<&str> = rec.iter().map(String::as_str).collect();
        assert_eq!(FeatureVector::from_csv_record(&fields, None).unwrap(), s);
        assert!(FeatureVector::from_csv_record(&fields[..5], None).is_err());
    }

    #[test]
    fn contour_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = Contour::new(pts(&[(0.5, 1.0), (3.25, -4.0), (10.0, 2.0)])).unwrap();
        c.write_csv(&path).unwrap();
        assert_eq!(Contour::read_csv(&path).unwrap(), c);
    }

    proptest! {
        #[test]
        fn partition_of_unity(n in 0usize..16, rho in 0.0f64..=1.0,
                              w in proptest::collection::vec(0.05f64..20.0, 16)) {
            let bez: f64 = BasisSpec::bezier(n).scalar_weights(rho).iter().sum();
            prop_assert!((bez - 1.0).abs() <= 1e-12);
            let nurbs = BasisSpec::nurbs_weighted(w[..=n].to_vec()).unwrap();
            let total: f64 = nurbs.scalar_weights(rho).iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn residual_orthogonal_to_columns(
            ys in proptest::collection::vec(-200.0f64..200.0, 30),
            family in 0usize..4,
        ) {
            let p: Vec<Point2> = ys.iter().enumerate()
                .map(|(i, y)| Point2::new(10.0 * i as f64, *y)).collect();
            let c = Contour::new(p).unwrap();
            let basis = match family {
                0 => BasisSpec::polynomial(4),
                1 => BasisSpec::bezier(5),
                2 => BasisSpec::nurbs_weighted(vec![1.0, 2.0, 0.5, 1.5, 1.0]).unwrap(),
                _ => BasisSpec::fourier(2),
            };
            let s = fit_features(&basis, &c).unwrap();
            let g = stack_regression(&basis, &c).unwrap();
            let cbar = c.stacked();
            let normal = g.transpose() * (&cbar - &g * s.values());
            prop_assert!(normal.norm() <= 1e-8 * (g.transpose() * &cbar).norm());
        }
    }
}

//! Quasi-static planar elastic rod.
//!
//! The rod is a chain of `M` equal links. Link `i` has absolute angle `θᵢ`;
//! the base is clamped at `clamp_base` with a fixed tangent `clamp_angle`
//! (acting as `θ₀`), and the far end is pinned to the gripper position with
//! a free tangent. The equilibrium shape minimizes the discrete bending energy
//!
//! ```text
//! E(θ) = k · Σ_{i=0}^{M-1} (θ_{i+1} − θ_i)²
//! ```
//!
//! subject to `clamp_base + ℓ Σ (cos θᵢ, sin θᵢ) = gripper`.
//!
//! Each solve is warm-started from the previous state, so a sequence of solves
//! tracks one branch of equilibria. Snap-through between branches is not
//! modelled.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{fit_features, BasisSpec, Contour, Point2};

/// Constraint tolerance relative to rod length.
pub const CONSTRAINT_TOLERANCE: f64 = 1e-6;

const NEWTON_MAX_ITERS: usize = 60;
const MAX_BISECTIONS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RodModel {
    /// Total length in pixels.
    pub length: f64,
    /// Number of equal links `M`.
    pub segments: usize,
    /// Bending weight `k`.
    pub stiffness: f64,
    pub clamp_base: [f64; 2],
    /// Fixed tangent angle at the clamp, radians.
    pub clamp_angle: f64,
}

impl Default for RodModel {
    fn default() -> Self {
        Self {
            length: 400.0,
            segments: 33,
            stiffness: 1.0,
            clamp_base: [100.0, 300.0],
            clamp_angle: 0.0,
        }
    }
}

impl RodModel {
    pub fn validate(&self) -> Result<()> {
        if self.segments < 10 {
            return Err(Error::Config(format!(
                "rod needs at least 10 segments, got {}",
                self.segments
            )));
        }
        if !(self.length > 0.0) || !self.length.is_finite() {
            return Err(Error::Config("rod length must be positive".into()));
        }
        if !(self.stiffness > 0.0) || !self.stiffness.is_finite() {
            return Err(Error::Config("rod stiffness must be positive".into()));
        }
        Ok(())
    }

    pub fn base(&self) -> Point2 {
        Point2::new(self.clamp_base[0], self.clamp_base[1])
    }

    pub fn link_length(&self) -> f64 {
        self.length / self.segments as f64
    }

    /// Strictly inside the disc of radius `length` around the clamp.
    pub fn is_reachable(&self, gripper: &Point2) -> bool {
        (gripper - self.base()).norm() < self.length
    }

    fn check_reachable(&self, gripper: &Point2) -> Result<()> {
        let d = (gripper - self.base()).norm();
        // Full extension is admitted: it has a unique (straight) solution.
        if d > self.length * (1.0 + 1e-12) || !d.is_finite() {
            return Err(Error::Unreachable {
                x: gripper.x,
                y: gripper.y,
                distance: d,
                length: self.length,
            });
        }
        Ok(())
    }

    /// Bending energy of a configuration.
    pub fn energy(&self, angles: &[f64]) -> f64 {
        let mut prev = self.clamp_angle;
        let mut e = 0.0;
        for &a in angles {
            e += (a - prev).powi(2);
            prev = a;
        }
        self.stiffness * e
    }

    /// Joint positions `x₀ = base, …, x_M = tip`.
    pub fn nodes(&self, angles: &[f64]) -> Vec<Point2> {
        let l = self.link_length();
        let mut p = self.base();
        let mut out = Vec::with_capacity(angles.len() + 1);
        out.push(p);
        for &a in angles {
            p += l * Vector2::new(a.cos(), a.sin());
            out.push(p);
        }
        out
    }

    pub fn tip(&self, angles: &[f64]) -> Point2 {
        let l = self.link_length();
        let (c, s) = angles
            .iter()
            .fold((0.0, 0.0), |(c, s), a| (c + a.cos(), s + a.sin()));
        self.base() + l * Vector2::new(c, s)
    }

    fn constraint(&self, angles: &[f64], gripper: &Point2) -> Vector2<f64> {
        self.tip(angles) - gripper
    }

    /// 2×M constraint Jacobian.
    fn constraint_jacobian(&self, angles: &[f64]) -> DMatrix<f64> {
        let l = self.link_length();
        let m = angles.len();
        DMatrix::from_fn(2, m, |r, c| {
            if r == 0 {
                -l * angles[c].sin()
            } else {
                l * angles[c].cos()
            }
        })
    }

    fn energy_gradient(&self, angles: &[f64]) -> DVector<f64> {
        let m = angles.len();
        let k2 = 2.0 * self.stiffness;
        DVector::from_fn(m, |i, _| {
            let prev = if i == 0 { self.clamp_angle } else { angles[i - 1] };
            let mut g = angles[i] - prev;
            if i + 1 < m {
                g -= angles[i + 1] - angles[i];
            }
            k2 * g
        })
    }
}

/// Link angles together with the gripper position they were solved for.
#[derive(Debug, Clone, PartialEq)]
pub struct RodState {
    pub angles: Vec<f64>,
    pub gripper: Point2,
}

impl RodState {
    /// Straight rod along the clamp tangent, gripper at full extension.
    pub fn straight(model: &RodModel) -> Self {
        let angles = vec![model.clamp_angle; model.segments];
        let gripper = model.tip(&angles);
        Self { angles, gripper }
    }

    /// Uniformly curved rod, bending to the left of the clamp tangent for
    /// `bend > 0`. Not an equilibrium unless `curvature` is zero; meant as a
    /// branch selector for [`settle`].
    pub fn arc(model: &RodModel, curvature: f64) -> Self {
        let l = model.link_length();
        let angles: Vec<f64> = (0..model.segments)
            .map(|i| model.clamp_angle + curvature * l * (i as f64 + 0.5))
            .collect();
        let gripper = model.tip(&angles);
        Self { angles, gripper }
    }

    pub fn energy(&self, model: &RodModel) -> f64 {
        model.energy(&self.angles)
    }

    pub fn constraint_violation(&self, model: &RodModel) -> f64 {
        model.constraint(&self.angles, &self.gripper).norm()
    }
}

/// Which way the rod buckles when it is first posed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// Bends counter-clockwise from the clamp tangent (towards +v for a
    /// tangent along +u).
    Left,
    Right,
}

/// Poses the rod at `gripper` from a slightly curved start on the requested
/// branch, following a straight gripper path.
pub fn settle(model: &RodModel, gripper: Point2, branch: Branch) -> Result<RodState> {
    model.validate()?;
    let sign = match branch {
        Branch::Left => 1.0,
        Branch::Right => -1.0,
    };
    let start = RodState::arc(model, sign * 0.4 / model.length);
    solve_equilibrium(model, &start, gripper)
}

/// Minimum-energy configuration for `gripper`, warm-started from `prev`.
pub fn solve_equilibrium(model: &RodModel, prev: &RodState, gripper: Point2) -> Result<RodState> {
    model.validate()?;
    model.check_reachable(&gripper)?;
    if prev.angles.len() != model.segments {
        return Err(Error::DimensionMismatch {
            expected: model.segments,
            actual: prev.angles.len(),
        });
    }

    let d = gripper - model.base();
    if d.norm() >= model.length * (1.0 - 1e-9) {
        // Only the straight rod reaches full extension.
        let a = d.y.atan2(d.x);
        return Ok(RodState {
            angles: vec![a; model.segments],
            gripper,
        });
    }

    // Straight is a bifurcation point: leave it on the side the gripper
    // moves towards, left when it moves straight back.
    let mut prev = prev.clone();
    if (prev.gripper - model.base()).norm() >= model.length * (1.0 - 1e-9) {
        let axis = prev.gripper - model.base();
        let side = axis.x * d.y - axis.y * d.x;
        let sign = if side < 0.0 { -1.0 } else { 1.0 };
        prev = RodState::arc(model, sign * 0.4 / model.length);
    }

    // Bisect the gripper path until each piece converges.
    let start = prev.gripper;
    let mut angles = prev.angles.clone();
    let mut from = 0.0_f64;
    let mut step = 1.0_f64;
    let max_piece = 0.5 * model.link_length();
    let total = (gripper - start).norm();
    if total > max_piece {
        step = max_piece / total;
    }
    let mut halvings = 0;
    while from < 1.0 {
        let to = (from + step).min(1.0);
        let target = start + (gripper - start) * to;
        match newton_kkt(model, &angles, &target) {
            Ok(next) => {
                angles = next;
                from = to;
            }
            Err(e) => {
                halvings += 1;
                if halvings > MAX_BISECTIONS {
                    return Err(e);
                }
                step *= 0.5;
            }
        }
    }
    Ok(RodState { angles, gripper })
}

/// Minimum-norm change of `angles` that satisfies the endpoint constraint
/// (Gauss–Newton on `‖θ − θ₀‖²` s.t. `g(θ) = 0`).
pub fn feasible_projection(model: &RodModel, angles: &[f64], gripper: &Point2) -> Result<Vec<f64>> {
    let mut theta = angles.to_vec();
    let tol = 1e-12 * model.length;
    for _ in 0..NEWTON_MAX_ITERS {
        let g = model.constraint(&theta, gripper);
        if g.norm() <= tol {
            return Ok(theta);
        }
        let a = model.constraint_jacobian(&theta);
        let aat: Matrix2<f64> = (&a * a.transpose()).fixed_view::<2, 2>(0, 0).into_owned();
        let y = aat.lu().solve(&g).ok_or(Error::NoConvergence {
            iterations: 0,
            residual: g.norm(),
        })?;
        let delta = a.transpose() * DVector::from_column_slice(y.as_slice());
        for (t, d) in theta.iter_mut().zip(delta.iter()) {
            *t -= d;
        }
    }
    let residual = model.constraint(&theta, gripper).norm();
    if residual <= CONSTRAINT_TOLERANCE * model.length {
        Ok(theta)
    } else {
        Err(Error::NoConvergence {
            iterations: NEWTON_MAX_ITERS,
            residual,
        })
    }
}

/// Projected Newton on the KKT system: each step solves the equality-
/// constrained quadratic model, is projected back onto the constraint and is
/// accepted only if the energy decreases. Every iterate is feasible, so the
/// returned energy never exceeds that of the projected start.
fn newton_kkt(model: &RodModel, start: &[f64], gripper: &Point2) -> Result<Vec<f64>> {
    let m = model.segments;
    let l = model.link_length();
    let k2 = 2.0 * model.stiffness;
    let mut theta = feasible_projection(model, start, gripper)?;
    let mut energy = model.energy(&theta);
    let grad_tol = 1e-12 * model.stiffness;
    let mut residual = f64::INFINITY;

    for _ in 0..NEWTON_MAX_ITERS {
        let grad = model.energy_gradient(&theta);
        let a = model.constraint_jacobian(&theta);
        let mu = least_squares_multiplier(&a, &grad)?;
        residual = (&grad + a.transpose() * DVector::from_column_slice(mu.as_slice())).amax();
        if residual <= grad_tol {
            return Ok(theta);
        }

        let mut tau = 0.0;
        let delta = loop {
            let mut kkt = DMatrix::zeros(m + 2, m + 2);
            for i in 0..m {
                let curv = -l * (mu.x * theta[i].cos() + mu.y * theta[i].sin());
                kkt[(i, i)] = if i + 1 < m { 2.0 * k2 } else { k2 } + curv + tau;
                if i + 1 < m {
                    kkt[(i, i + 1)] = -k2;
                    kkt[(i + 1, i)] = -k2;
                }
                kkt[(m, i)] = a[(0, i)];
                kkt[(m + 1, i)] = a[(1, i)];
                kkt[(i, m)] = a[(0, i)];
                kkt[(i, m + 1)] = a[(1, i)];
            }
            let mut rhs = DVector::zeros(m + 2);
            rhs.rows_mut(0, m).copy_from(&(-&grad));
            if let Some(sol) = kkt.lu().solve(&rhs) {
                let delta = sol.rows(0, m).into_owned();
                // Negative curvature along the step means a saddle direction.
                let curvature = delta.dot(&model_hessian_times(model, &theta, &mu, &delta))
                    + tau * delta.norm_squared();
                if curvature > 0.0 && grad.dot(&delta) < 0.0 {
                    break delta;
                }
            }
            if tau > 1e8 * model.stiffness {
                return Err(Error::NoConvergence {
                    iterations: 0,
                    residual,
                });
            }
            tau = if tau == 0.0 { 1e-4 * model.stiffness } else { tau * 10.0 };
        };

        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..40 {
            let trial: Vec<f64> = theta
                .iter()
                .zip(delta.iter())
                .map(|(t, d)| t + alpha * d)
                .collect();
            if let Ok(trial) = feasible_projection(model, &trial, gripper) {
                let e = model.energy(&trial);
                // Within round-off of the current energy, fall back to the
                // stationarity residual so the last Newton steps still count.
                let flat = e <= energy + 64.0 * f64::EPSILON * energy.abs().max(model.stiffness);
                if e < energy || (flat && kkt_residual(model, &trial)? < 0.5 * residual) {
                    accepted = Some((trial, e));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((t, e)) => {
                theta = t;
                energy = e;
            }
            // No representable decrease left: stationary to working precision.
            None if residual <= 1e-8 * model.stiffness => return Ok(theta),
            None => {
                return Err(Error::NoConvergence {
                    iterations: NEWTON_MAX_ITERS,
                    residual,
                })
            }
        }
    }
    if residual <= 1e-8 * model.stiffness {
        return Ok(theta);
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITERS,
        residual,
    })
}

fn kkt_residual(model: &RodModel, theta: &[f64]) -> Result<f64> {
    let grad = model.energy_gradient(theta);
    let a = model.constraint_jacobian(theta);
    let mu = least_squares_multiplier(&a, &grad)?;
    Ok((&grad + a.transpose() * DVector::from_column_slice(mu.as_slice())).amax())
}

/// `μ = −(A Aᵀ)⁻¹ A ∇E`, the multiplier minimizing `‖∇E + Aᵀμ‖`.
fn least_squares_multiplier(a: &DMatrix<f64>, grad: &DVector<f64>) -> Result<Vector2<f64>> {
    let aat: Matrix2<f64> = (a * a.transpose()).fixed_view::<2, 2>(0, 0).into_owned();
    let rhs = a * grad;
    aat.lu()
        .solve(&Vector2::new(-rhs[0], -rhs[1]))
        .ok_or(Error::NoConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        })
}

/// `W δ` for the Lagrangian Hessian `W`, without forming it.
fn model_hessian_times(
    model: &RodModel,
    theta: &[f64],
    mu: &Vector2<f64>,
    delta: &DVector<f64>,
) -> DVector<f64> {
    let m = theta.len();
    let l = model.link_length();
    let k2 = 2.0 * model.stiffness;
    DVector::from_fn(m, |i, _| {
        let diag = if i + 1 < m { 2.0 * k2 } else { k2 };
        let curv = -l * (mu.x * theta[i].cos() + mu.y * theta[i].sin());
        let mut v = (diag + curv) * delta[i];
        if i > 0 {
            v -= k2 * delta[i - 1];
        }
        if i + 1 < m {
            v -= k2 * delta[i + 1];
        }
        v
    })
}

/// `n` points equally spaced in arc length from the clamp to the tip.
pub fn sample_contour(model: &RodModel, state: &RodState, n: usize) -> Result<Contour> {
    if n < 2 {
        return Err(Error::DegenerateContour(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let nodes = model.nodes(&state.angles);
    let m = model.segments;
    let intervals = n - 1;
    let points = (0..n)
        .map(|j| {
            // Integer arithmetic keeps samples that land on joints exact.
            let scaled = j * m;
            let link = scaled / intervals;
            if link >= m {
                return nodes[m];
            }
            let frac = (scaled % intervals) as f64 / intervals as f64;
            nodes[link] + (nodes[link + 1] - nodes[link]) * frac
        })
        .collect();
    Contour::new(points)
}

/// Central-difference Jacobian `∂s/∂r` of the fitted features with respect to
/// the gripper position.
pub fn true_jacobian(
    model: &RodModel,
    state: &RodState,
    basis: &BasisSpec,
    n: usize,
    h: f64,
) -> Result<DMatrix<f64>> {
    let p = basis.feature_dim();
    let mut jac = DMatrix::zeros(p, 2);
    for axis in 0..2 {
        let mut offset = Point2::zeros();
        offset[axis] = h;
        let plus = solve_equilibrium(model, state, state.gripper + offset)?;
        let minus = solve_equilibrium(model, state, state.gripper - offset)?;
        let sp = fit_features(basis, &sample_contour(model, &plus, n)?)?;
        let sm = fit_features(basis, &sample_contour(model, &minus, n)?)?;
        let col = (sp.values() - sm.values()) / (2.0 * h);
        jac.set_column(axis, &col);
    }
    Ok(jac)
}

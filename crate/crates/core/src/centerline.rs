//! Ordering and resampling of an unordered centerline point cloud.

use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{read_points_csv, write_points_csv, Contour, Point2};

pub const DEFAULT_BOX_SIZE: f64 = 10.0;

/// Unordered centerline points plus the point the ordering starts from.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point2>,
    pub start: Point2,
}

impl PointCloud {
    pub fn new(points: Vec<Point2>, start: Point2) -> Self {
        Self { points, start }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_points_csv(path, &self.points)
    }

    pub fn read_csv(path: impl AsRef<Path>, start: Point2) -> Result<Self> {
        Ok(Self::new(read_points_csv(path)?, start))
    }
}

/// Greedy box-gated nearest-neighbour ordering.
///
/// From the current point, all remaining points with `|Δu| ≤ box_size` and
/// `|Δv| ≤ box_size` are gathered and the Euclidean-nearest one becomes the
/// next output point. The walk begins at `cloud.start`, which itself is not
/// emitted. Equidistant candidates resolve to the lowest input index.
pub fn sort_centerline(cloud: &PointCloud, box_size: f64) -> Result<Vec<Point2>> {
    if cloud.points.is_empty() {
        return Err(Error::DegenerateContour("point cloud is empty".into()));
    }
    if !(box_size > 0.0) {
        return Err(Error::Config(format!("box_size must be positive, got {box_size}")));
    }
    let mut remaining: Vec<usize> = (0..cloud.points.len()).collect();
    let mut out = Vec::with_capacity(cloud.points.len());
    let mut current = cloud.start;
    while !remaining.is_empty() {
        let mut best: Option<(usize, f64)> = None;
        for (slot, &idx) in remaining.iter().enumerate() {
            let d = cloud.points[idx] - current;
            if d.x.abs() > box_size || d.y.abs() > box_size {
                continue;
            }
            let dist = d.norm_squared();
            if best.is_none_or(|(_, b)| dist < b) {
                best = Some((slot, dist));
            }
        }
        let Some((slot, _)) = best else {
            return Err(Error::BrokenChain {
                index: out.len(),
                box_size,
                x: current.x,
                y: current.y,
            });
        };
        current = cloud.points[remaining.remove(slot)];
        out.push(current);
    }
    Ok(out)
}

/// `n` points at equal arc-length spacing along the polyline `ordered`,
/// keeping both endpoints exactly.
pub fn resample_equidistant(ordered: &[Point2], n: usize) -> Result<Contour> {
    if ordered.len() < 2 || n < 2 {
        return Err(Error::DegenerateContour(format!(
            "resampling needs at least 2 input and 2 output points, got {} and {n}",
            ordered.len()
        )));
    }
    let mut cumulative = Vec::with_capacity(ordered.len());
    cumulative.push(0.0);
    for w in ordered.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + (w[1] - w[0]).norm());
    }
    let total = *cumulative.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::DegenerateContour("polyline has zero length".into()));
    }

    let mut points = Vec::with_capacity(n);
    points.push(ordered[0]);
    let mut seg = 0;
    for j in 1..n - 1 {
        let target = total * j as f64 / (n - 1) as f64;
        while seg + 2 < cumulative.len() && cumulative[seg + 1] < target {
            seg += 1;
        }
        let len = cumulative[seg + 1] - cumulative[seg];
        let t = if len > 0.0 { (target - cumulative[seg]) / len } else { 0.0 };
        points.push(ordered[seg] + (ordered[seg + 1] - ordered[seg]) * t);
    }
    points.push(ordered[ordered.len() - 1]);
    Contour::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn p(x: f64, y: f64) -> Point2 {
        Point2::new(x, y)
    }

    #[test]
    fn collinear_points_recovered() {
        let cloud = PointCloud::new(vec![p(10.0, 0.0), p(0.0, 0.0), p(5.0, 0.0)], p(0.0, 0.0));
        let out = sort_centerline(&cloud, 10.0).unwrap();
        assert_eq!(out, vec![p(0.0, 0.0), p(5.0, 0.0), p(10.0, 0.0)]);
    }

    #[test]
    fn gap_larger_than_box_breaks_chain() {
        let cloud = PointCloud::new(vec![p(0.0, 0.0), p(20.0, 0.0), p(40.0, 0.0)], p(0.0, 0.0));
        match sort_centerline(&cloud, 10.0) {
            Err(Error::BrokenChain { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected BrokenChain, got {other:?}"),
        }
    }

    #[test]
    fn start_outside_box_breaks_chain() {
        let cloud = PointCloud::new(vec![p(50.0, 0.0)], p(0.0, 0.0));
        assert!(matches!(
            sort_centerline(&cloud, 10.0),
            Err(Error::BrokenChain { index: 0, .. })
        ));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let cloud = PointCloud::new(vec![p(0.0, 3.0), p(0.0, -3.0)], p(0.0, 0.0));
        let out = sort_centerline(&cloud, 10.0).unwrap();
        assert_eq!(out[0], p(0.0, 3.0));
        let cloud = PointCloud::new(vec![p(0.0, -3.0), p(0.0, 3.0)], p(0.0, 0.0));
        assert_eq!(sort_centerline(&cloud, 10.0).unwrap()[0], p(0.0, -3.0));
    }

    /// Consecutive output pairs whose projection onto the generating curve
    /// parameter does not decrease.
    fn monotone_pairs(out: &[Point2], truth: &[(f64, Point2)]) -> usize {
        let project = |q: &Point2| {
            truth
                .iter()
                .min_by(|a, b| (a.1 - q).norm().total_cmp(&(b.1 - q).norm()))
                .unwrap()
                .0
        };
        let params: Vec<f64> = out.iter().map(project).collect();
        params.windows(2).filter(|w| w[1] >= w[0]).count()
    }

    /// 200 points of `v = 40 sin(u / 80)` at 3 px steps in `u`, Gaussian
    /// noise σ = 1 px per axis, shuffled. Returns the cloud and a dense
    /// ground-truth polyline `(u, point)`.
    fn noisy_sine(seed: u64) -> (PointCloud, Vec<(f64, Point2)>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let curve = |t: f64| p(100.0 + t, 300.0 + 40.0 * (t / 80.0).sin());
        let mut points: Vec<Point2> = (0..200)
            .map(|i| curve(3.0 * i as f64) + Point2::new(noise.sample(&mut rng), noise.sample(&mut rng)))
            .collect();
        let start = curve(0.0);
        points.shuffle(&mut rng);
        let fine = (0..6000).map(|i| {
            let t = 597.0 * i as f64 / 5999.0;
            (t, curve(t))
        });
        (PointCloud::new(points, start), fine.collect())
    }

    #[test]
    fn noisy_sine_order_is_mostly_monotone() {
        let (mut good, mut total) = (0, 0);
        for seed in 0..20 {
            let (cloud, truth) = noisy_sine(seed);
            if let Ok(out) = sort_centerline(&cloud, DEFAULT_BOX_SIZE) {
                assert_eq!(out.len(), 200);
                good += monotone_pairs(&out, &truth);
                total += 199;
            }
        }
        assert!(total >= 18 * 199);
        assert!(good as f64 >= 0.99 * total as f64, "{good}/{total}");
    }

    #[test]
    fn sort_is_deterministic() {
        let (cloud, _) = noisy_sine(5);
        assert_eq!(
            sort_centerline(&cloud, 10.0).unwrap(),
            sort_centerline(&cloud, 10.0).unwrap()
        );
    }

    proptest! {
        #[test]
        fn sort_output_is_permutation(
            xs in proptest::collection::vec((0.0f64..30.0, 0.0f64..30.0), 1..40),
        ) {
            let points: Vec<Point2> = xs.iter().map(|&(x, y)| p(x, y)).collect();
            let cloud = PointCloud::new(points.clone(), points[0]);
            if let Ok(out) = sort_centerline(&cloud, 40.0) {
                let key = |v: &Vec<Point2>| {
                    let mut k: Vec<(u64, u64)> = v.iter().map(|q| (q.x.to_bits(), q.y.to_bits())).collect();
                    k.sort();
                    k
                };
                prop_assert_eq!(key(&out), key(&points));
            } else {
                prop_assert!(false, "box covers the whole domain");
            }
        }

        #[test]
        fn resample_spacing_is_uniform(
            xs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 2..12),
            n in 2usize..60,
        ) {
            let points: Vec<Point2> = xs.iter().map(|&(x, y)| p(x, y)).collect();
            let total: f64 = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
            prop_assume!(points.windows(2).all(|w| (w[1] - w[0]).norm() > 1e-3));
            // Straight polyline along the arc-length axis has chords equal to
            // arc lengths; use the unrolled version of the input as oracle.
            let mut unrolled = vec![p(0.0, 0.0)];
            for w in points.windows(2) {
                let last = *unrolled.last().unwrap();
                unrolled.push(last + p((w[1] - w[0]).norm(), 0.0));
            }
            let c = resample_equidistant(&unrolled, n).unwrap();
            let step = total / (n - 1) as f64;
            for w in c.points().windows(2) {
                prop_assert!(((w[1] - w[0]).norm() - step).abs() <= 1e-9 * total);
            }
            let r = resample_equidistant(&points, n).unwrap();
            prop_assert_eq!(r.points()[0], points[0]);
            prop_assert_eq!(r.points()[n - 1], points[points.len() - 1]);
        }
    }

    #[test]
    fn two_point_segment_gets_midpoint() {
        let c = resample_equidistant(&[p(0.0, 0.0), p(4.0, 2.0)], 3).unwrap();
        assert_eq!(c.points()[1], p(2.0, 1.0));
    }

    #[test]
    fn uniform_contour_is_fixed_point() {
        let pts: Vec<Point2> = (0..20).map(|i| p(3.0 * i as f64, -2.0)).collect();
        let c = resample_equidistant(&pts, 20).unwrap();
        for (a, b) in c.points().iter().zip(&pts) {
            assert!((a - b).norm() <= 1e-9);
        }
    }

    #[test]
    fn l_shaped_path() {
        let c = resample_equidistant(&[p(0.0, 0.0), p(30.0, 0.0), p(30.0, 40.0)], 8).unwrap();
        // Spacing 10 lands a sample exactly on the corner.
        assert_eq!(c.points()[3], p(30.0, 0.0));
        for w in c.points().windows(2) {
            assert_relative_eq!((w[1] - w[0]).norm(), 10.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cloud.csv");
        let (cloud, _) = noisy_sine(2);
        cloud.write_csv(&path).unwrap();
        let back = PointCloud::read_csv(&path, cloud.start).unwrap();
        assert_eq!(back, cloud);
    }
}

//! Geometric medians and the Weiszfeld optimality residual.
//!
//! The geometric median of points `x_1..x_m` minimizes `Σ ‖x_i − y‖`. Away
//! from the data points it is characterized by a vanishing sum of unit
//! vectors, `Σ (x_i − y)/‖x_i − y‖ = 0`; [`weiszfeld_residual`] returns the
//! norm of that sum, and [`geometric_median`] drives it below a tolerance via
//! the Weiszfeld fixed-point iteration with the standard modification at data
//! points.

use thiserror::Error;

use crate::numerics::Vector;

/// Iterates stop once the residual drops below this by default.
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Distance below which an iterate is treated as coincident with a data point.
const SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point cloud must contain at least one point")]
    Empty,
    #[error("point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
}

/// Non-empty set of equal-dimension points.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Vec<Vector>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector>) -> Result<Self, GeometryError> {
        if points.is_empty() {
            return Err(GeometryError::Empty);
        }
        let dim = points[0].dim();
        for (index, p) in points.iter().enumerate() {
            if p.dim() != dim {
                return Err(GeometryError::DimensionMismatch {
                    index,
                    expected: dim,
                    found: p.dim(),
                });
            }
        }
        Ok(Self { points })
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Vector] {
        &self.points
    }

    fn centroid(&self) -> Vector {
        let mut c = Vector::zeros(self.dim());
        for p in &self.points {
            c.axpy(1.0, p.as_slice());
        }
        c.scaled(1.0 / self.len() as f64)
    }
}

/// Output of [`geometric_median`].
#[derive(Debug, Clone)]
pub struct GeometricMedian {
    pub point: Vector,
    /// Whether the residual tolerance was met within the iteration budget.
    pub converged: bool,
    pub iterations: usize,
    /// `Σ ‖x_i − y‖` at the returned point.
    pub objective: f64,
}

/// `Σ ‖x_i − y‖`.
pub fn sum_of_distances(cloud: &PointCloud, y: &[f64]) -> f64 {
    cloud
        .points()
        .iter()
        .map(|p| crate::numerics::dist(p.as_slice(), y))
        .sum()
}

/// Norm of the unit-vector sum `‖Σ (x_i − y)/‖x_i − y‖‖`; zero exactly at the
/// geometric median when `y` is distinct from every data point.
///
/// If `y` coincides with data points (distance ≤ 1e-12), those terms have no
/// defined direction; the residual then becomes `max(‖R‖ − k, 0)` where `R`
/// sums the remaining unit vectors and `k` counts the coincident points. This
/// is the one-sided optimality criterion: a data point of multiplicity `k` is
/// the median iff the pull of the others does not exceed `k`.
pub fn weiszfeld_residual(cloud: &PointCloud, candidate: &[f64]) -> f64 {
    debug_assert_eq!(candidate.len(), cloud.dim());
    let mut sum = vec![0.0; cloud.dim()];
    let mut coincident = 0usize;
    for p in cloud.points() {
        let d = crate::numerics::dist(p.as_slice(), candidate);
        if d <= SINGULAR_EPS {
            coincident += 1;
            continue;
        }
        for ((s, &pi), &yi) in sum.iter_mut().zip(p.as_slice()).zip(candidate) {
            *s += (pi - yi) / d;
        }
    }
    let r = crate::numerics::norm(&sum);
    if coincident == 0 {
        r
    } else {
        (r - coincident as f64).max(0.0)
    }
}

/// Weiszfeld's algorithm. Returns the best iterate found; `converged` is set
/// when `weiszfeld_residual` at that iterate is within `tol`.
///
/// Degenerate cases are handled deterministically: a single point returns
/// itself, two points return their midpoint, and one-dimensional clouds
/// return the coordinate median (midpoint of the middle pair for even
/// counts). When an iterate lands on a data point the pull of that point is
/// bounded by the modified step; if the point itself is optimal it is
/// returned.
pub fn geometric_median(cloud: &PointCloud, tol: f64, max_iter: usize) -> GeometricMedian {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = cloud.len();
    if n == 1 {
        let point = cloud.points()[0].clone();
        return GeometricMedian {
            objective: 0.0,
            converged: true,
            iterations: 0,
            point,
        };
    }
    if n == 2 {
        let point = cloud.points()[0].add(&cloud.points()[1]).scaled(0.5);
        let objective = sum_of_distances(cloud, point.as_slice());
        return GeometricMedian {
            point,
            converged: true,
            iterations: 0,
            objective,
        };
    }
    if cloud.dim() == 1 {
        let mut xs: Vec<f64> = cloud.points().iter().map(|p| p[0]).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let median = if n % 2 == 1 {
            xs[n / 2]
        } else {
            0.5 * (xs[n / 2 - 1] + xs[n / 2])
        };
        let point = Vector::from(vec![median]);
        let objective = sum_of_distances(cloud, point.as_slice());
        return GeometricMedian {
            point,
            converged: true,
            iterations: 0,
            objective,
        };
    }

    let mut y = cloud.centroid();
    let mut objective = sum_of_distances(cloud, y.as_slice());
    let mut iterations = 0;
    while iterations < max_iter {
        if weiszfeld_residual(cloud, y.as_slice()) <= tol {
            return GeometricMedian {
                point: y,
                converged: true,
                iterations,
                objective,
            };
        }
        let next = weiszfeld_step(cloud, &y);
        if next.as_slice() == y.as_slice() {
            // Exact fixed point; no further progress possible.
            break;
        }
        let next_objective = sum_of_distances(cloud, next.as_slice());
        // The Weiszfeld map never increases the objective; rounding may tick
        // it up at the last few ulps near the optimum.
        debug_assert!(
            next_objective <= objective * (1.0 + 1e-12) + 1e-12,
            "objective increased: {objective} -> {next_objective}"
        );
        y = next;
        objective = next_objective;
        iterations += 1;
    }
    let converged = weiszfeld_residual(cloud, y.as_slice()) <= tol;
    GeometricMedian {
        point: y,
        converged,
        iterations,
        objective,
    }
}

/// One Weiszfeld update. Away from data points this is the distance-weighted
/// average `Σ x_i/d_i / Σ 1/d_i`; at a data point the modified step of Vardi
/// and Zhang bounds that point's pull.
fn weiszfeld_step(cloud: &PointCloud, y: &Vector) -> Vector {
    let dim = cloud.dim();
    let mut weighted = vec![0.0; dim];
    let mut weight_sum = 0.0;
    let mut coincident = 0usize;
    for p in cloud.points() {
        let d = p.dist(y);
        if d <= SINGULAR_EPS {
            coincident += 1;
            continue;
        }
        let w = 1.0 / d;
        weight_sum += w;
        for (acc, &pi) in weighted.iter_mut().zip(p.as_slice()) {
            *acc += w * pi;
        }
    }
    if weight_sum == 0.0 {
        // Every point coincides with y.
        return y.clone();
    }
    let t: Vec<f64> = weighted.iter().map(|v| v / weight_sum).collect();
    if coincident == 0 {
        return Vector::from(t);
    }
    // y sits on a data point of multiplicity k. Pull of the rest:
    // R = Σ_{i: d_i > 0} (x_i − y)/d_i. If ‖R‖ <= k the point is optimal.
    let mut r = vec![0.0; dim];
    for p in cloud.points() {
        let d = p.dist(y);
        if d <= SINGULAR_EPS {
            continue;
        }
        for ((ri, &pi), &yi) in r.iter_mut().zip(p.as_slice()).zip(y.as_slice()) {
            *ri += (pi - yi) / d;
        }
    }
    let r_norm = crate::numerics::norm(&r);
    let k = coincident as f64;
    if r_norm <= k {
        return y.clone();
    }
    // Modified step: convex combination of the Weiszfeld target and y.
    let lambda = (1.0 - k / r_norm).max(0.0);
    let mut out = Vec::with_capacity(dim);
    for (ti, yi) in t.iter().zip(y.as_slice()) {
        out.push(lambda * ti + (1.0 - lambda) * yi);
    }
    Vector::from(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn cloud(points: Vec<Vec<f64>>) -> PointCloud {
        PointCloud::new(points.into_iter().map(Vector::from).collect()).unwrap()
    }

    fn random_cloud(n: usize, dim: usize, seed: u64) -> PointCloud {
        let mut rng = stream_rng(seed, "geometry-cloud");
        let normal = Normal::new(0.0, 1.0).unwrap();
        let points = (0..n)
            .map(|_| Vector::from((0..dim).map(|_| normal.sample(&mut rng)).collect::<Vec<_>>()))
            .collect();
        PointCloud::new(points).unwrap()
    }

    /// Independent oracle: projected subgradient descent with backtracking on
    /// the raw objective, no Weiszfeld machinery.
    fn descent_oracle(cloud: &PointCloud, iters: usize) -> f64 {
        // Start at the centroid.
        let n = cloud.len() as f64;
        let mut y = vec![0.0; cloud.dim()];
        for i in 0..cloud.dim() {
            y[i] = cloud.points().iter().map(|p| p[i]).sum::<f64>() / n;
        }
        let objective = |y: &[f64]| sum_of_distances(cloud, y);
        let mut best = objective(&y);
        let mut step = 0.5;
        for _ in 0..iters {
            // Subgradient: −Σ (x_i − y)/‖x_i − y‖ (skip coincident points).
            let mut g = vec![0.0; y.len()];
            for p in cloud.points() {
                let d = crate::numerics::dist(p.as_slice(), &y);
                if d <= 1e-15 {
                    continue;
                }
                for ((gi, &pi), &yi) in g.iter_mut().zip(p.as_slice()).zip(&y) {
                    *gi -= (pi - yi) / d;
                }
            }
            loop {
                let trial: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - step * gi).collect();
                let val = objective(&trial);
                if val < best {
                    y = trial;
                    best = val;
                    break;
                }
                step *= 0.5;
                if step < 1e-16 {
                    break;
                }
            }
            if step < 1e-16 {
                break;
            }
        }
        best
    }

    #[test]
    fn single_point_returns_itself() {
        let c = cloud(vec![vec![2.0, -1.0, 7.0]]);
        let m = geometric_median(&c, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(m.point.as_slice(), &[2.0, -1.0, 7.0]);
        assert!(m.converged);
    }

    #[test]
    fn one_dimensional_median_is_coordinate_median() {
        let c = cloud(vec![vec![0.0], vec![1.0], vec![10.0]]);
        let m = geometric_median(&c, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(m.point.as_slice(), &[1.0]);
    }

    #[test]
    fn equilateral_triangle_median_is_center() {
        let c = cloud(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.5, 3f64.sqrt() / 2.0],
        ]);
        let m = geometric_median(&c, 1e-10, DEFAULT_MAX_ITER);
        assert!((m.point[0] - 0.5).abs() <= 1e-6);
        assert!((m.point[1] - 3f64.sqrt() / 6.0).abs() <= 1e-6);
    }

    #[test]
    fn rectangle_corners_median_is_center() {
        let c = cloud(vec![
            vec![-1.0, -2.0],
            vec![5.0, -2.0],
            vec![5.0, 4.0],
            vec![-1.0, 4.0],
        ]);
        let m = geometric_median(&c, 1e-10, DEFAULT_MAX_ITER);
        assert!((m.point[0] - 2.0).abs() <= 1e-6);
        assert!((m.point[1] - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn two_points_return_midpoint_and_segment_objective() {
        let c = cloud(vec![vec![1.0, 1.0], vec![3.0, 5.0]]);
        let m = geometric_median(&c, DEFAULT_TOL, DEFAULT_MAX_ITER);
        assert_eq!(m.point.as_slice(), &[2.0, 3.0]);
        let separation = crate::numerics::dist(&[1.0, 1.0], &[3.0, 5.0]);
        assert!((m.objective - separation).abs() <= 1e-12);
    }

    #[test]
    fn matches_descent_oracle_on_random_cloud() {
        let c = random_cloud(10, 5, 404);
        let m = geometric_median(&c, 1e-10, DEFAULT_MAX_ITER);
        let oracle = descent_oracle(&c, 20_000);
        assert!(
            (m.objective - oracle).abs() <= 1e-6,
            "weiszfeld {} vs oracle {}",
            m.objective,
            oracle
        );
    }

    #[test]
    fn residual_cancels_for_symmetric_pair() {
        let c = cloud(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        assert_eq!(weiszfeld_residual(&c, &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn residual_adds_for_duplicated_point() {
        let c = cloud(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
        assert!((weiszfeld_residual(&c, &[0.0, 0.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn median_output_has_small_residual() {
        for seed in 0..20 {
            let mut rng = stream_rng(seed, "geometry-size");
            let n = rng.random_range(3..=50);
            let dim = rng.random_range(2..=16);
            let c = random_cloud(n, dim, 1000 + seed);
            let m = geometric_median(&c, 1e-9, DEFAULT_MAX_ITER);
            let r = weiszfeld_residual(&c, m.point.as_slice());
            assert!(r <= 1e-6, "seed {seed}: residual {r}");
        }
    }

    #[test]
    fn translation_equivariance() {
        let c = random_cloud(12, 4, 7);
        let shift = [2.5, -1.0, 0.25, 10.0];
        let shifted = PointCloud::new(
            c.points()
                .iter()
                .map(|p| {
                    let mut v = p.clone();
                    v.axpy(1.0, &shift);
                    v
                })
                .collect(),
        )
        .unwrap();
        let m = geometric_median(&c, 1e-10, DEFAULT_MAX_ITER);
        let ms = geometric_median(&shifted, 1e-10, DEFAULT_MAX_ITER);
        for i in 0..4 {
            assert!((ms.point[i] - (m.point[i] + shift[i])).abs() <= 1e-6);
        }
    }

    #[test]
    fn scale_equivariance() {
        let c = random_cloud(9, 3, 21);
        let s = 3.5;
        let scaled = PointCloud::new(c.points().iter().map(|p| p.scaled(s)).collect()).unwrap();
        let m = geometric_median(&c, 1e-10, DEFAULT_MAX_ITER);
        let ms = geometric_median(&scaled, 1e-10, DEFAULT_MAX_ITER);
        for i in 0..3 {
            assert!((ms.point[i] - s * m.point[i]).abs() <= s * 1e-6);
        }
    }

    #[test]
    fn handles_iterate_on_data_point() {
        // Center of a symmetric star is also a data point; it is optimal.
        let c = cloud(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
        ]);
        let m = geometric_median(&c, 1e-9, DEFAULT_MAX_ITER);
        assert!(crate::numerics::norm(m.point.as_slice()) <= 1e-9);
    }

    #[test]
    fn residual_of_median_on_heavier_cloud() {
        let c = random_cloud(50, 8, 99);
        let m = geometric_median(&c, 1e-9, DEFAULT_MAX_ITER);
        assert!(m.converged);
        assert!(weiszfeld_residual(&c, m.point.as_slice()) <= 1e-9);
    }
}

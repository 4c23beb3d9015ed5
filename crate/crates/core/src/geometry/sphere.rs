use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::cloud::Point;
use crate::geometry::kdtree::dist_sq;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingSphere {
    pub center: Point,
    pub radius: f64,
}

impl BoundingSphere {
    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        (p - self.center).norm() <= self.radius + tol
    }
}

const REFINE_ITERATIONS: usize = 64;

fn farthest_from(points: &[Point], from: &Point) -> usize {
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d = dist_sq(p, from);
        if d > best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn max_distance(points: &[Point], center: &Point) -> f64 {
    points.iter().map(|p| dist_sq(p, center)).fold(0.0, f64::max).sqrt()
}

/// Approximate minimum enclosing sphere.
///
/// Ritter's two-pass construction seeds the center; a short Bădoiu–Clarkson
/// refinement (step toward the farthest point with shrinking weight) is then
/// kept only where it tightens the radius. The returned radius is the exact
/// maximum distance from the returned center, so containment is exact.
pub fn min_bounding_sphere(points: &[Point]) -> Result<BoundingSphere> {
    if points.is_empty() {
        return Err(Error::contract("bounding sphere of an empty point set"));
    }
    let y = farthest_from(points, &points[0]);
    let z = farthest_from(points, &points[y]);
    let mut center = nalgebra::center(&points[y], &points[z]);
    let mut radius = (points[z] - points[y]).norm() / 2.0;
    for p in points {
        let d = (p - center).norm();
        if d > radius {
            let grown = (radius + d) / 2.0;
            center += (p - center) * ((grown - radius) / d);
            radius = grown;
        }
    }
    let mut best_center = center;
    let mut best_radius = max_distance(points, &center);

    let mut c = center;
    for i in 1..=REFINE_ITERATIONS {
        let far = farthest_from(points, &c);
        c += (points[far] - c) / (i as f64 + 1.0);
        let r = max_distance(points, &c);
        if r < best_radius {
            best_radius = r;
            best_center = c;
        }
    }
    Ok(BoundingSphere {
        center: best_center,
        radius: best_radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point() {
        let s = min_bounding_sphere(&[Point::new(1.0, 2.0, 3.0)]).unwrap();
        assert_eq!(s.center, Point::new(1.0, 2.0, 3.0));
        assert_eq!(s.radius, 0.0);
    }

    #[test]
    fn diameter_pair() {
        let s = min_bounding_sphere(&[Point::origin(), Point::new(2.0, 0.0, 0.0)]).unwrap();
        assert_eq!(s.center, Point::new(1.0, 0.0, 0.0));
        assert_eq!(s.radius, 1.0);
    }

    #[test]
    fn cube_corners() {
        let corners: Vec<Point> = (0..8)
            .map(|i| Point::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect();
        let s = min_bounding_sphere(&corners).unwrap();
        assert!(corners.iter().all(|p| s.contains(p, 1e-9)));
        assert!(s.radius <= 1.1 * 3f64.sqrt() / 2.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(min_bounding_sphere(&[]).is_err());
    }
}

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::cloud::{Point, PointCloud, Vector};
use crate::geometry::kdtree::KdTree;
use crate::geometry::pca::{covariance, sorted_eigen};

pub const DEFAULT_NORMAL_K: usize = 16;

/// Unoriented normal of a neighborhood: the smallest-eigenvalue eigenvector,
/// or `None` when the covariance vanishes.
pub fn neighborhood_normal(points: &[Point]) -> Option<Vector> {
    let mean = crate::geometry::cloud::centroid(points);
    let cov = covariance(points, &mean);
    let scale = cov.trace();
    if !(scale > 1e-300) {
        return None;
    }
    let (_, vectors) = sorted_eigen(cov);
    Some(vectors[2])
}

/// Sign rule for estimated normals: point away from `center`; on a tie
/// prefer +z, then +y, then +x.
pub fn orient_away(n: Vector, p: &Point, center: &Point) -> Vector {
    let offset = p - center;
    let dot = n.dot(&offset);
    if dot.abs() > 1e-12 * offset.norm() {
        return if dot < 0.0 { -n } else { n };
    }
    for a in [2usize, 1, 0] {
        if n[a].abs() > 1e-12 {
            return if n[a] < 0.0 { -n } else { n };
        }
    }
    n
}

/// Normals with the per-point list of degenerate neighborhoods that defaulted to +z.
#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    pub degenerate: Vec<usize>,
}

pub fn estimate_normals_detailed(cloud: &PointCloud, k: usize) -> Result<NormalEstimate> {
    let n = cloud.len();
    if k < 3 || k >= n {
        return Err(Error::contract(format!("normal estimation needs 3 <= k < {n}, got k = {k}")));
    }
    let points = cloud.points();
    let tree = KdTree::new(points);
    let center = cloud.centroid();
    let results: Vec<Option<Vector>> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut hood: Vec<Point> = tree.nearest(p, k, Some(i)).iter().map(|nb| points[nb.index]).collect();
            hood.push(*p);
            neighborhood_normal(&hood).map(|v| orient_away(v, p, &center))
        })
        .collect();
    let degenerate: Vec<usize> = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.is_none().then_some(i))
        .collect();
    if !degenerate.is_empty() {
        log::warn!(
            "{} of {n} points in \"{}\" have degenerate neighborhoods; normals default to +z",
            degenerate.len(),
            cloud.id
        );
    }
    let normals = results.into_iter().map(|r| r.unwrap_or_else(Vector::z)).collect();
    let mut out = cloud.clone();
    out.set_normals(normals)?;
    Ok(NormalEstimate { cloud: out, degenerate })
}

pub fn estimate_normals(cloud: &PointCloud, k: usize) -> Result<PointCloud> {
    Ok(estimate_normals_detailed(cloud, k)?.cloud)
}

/// Returns the cloud unchanged when it already has normals, otherwise
/// estimates them with `k` clamped to the cloud size.
pub fn ensure_normals(cloud: &PointCloud) -> Result<PointCloud> {
    if cloud.has_normals() {
        return Ok(cloud.clone());
    }
    if cloud.len() < 4 {
        return Err(Error::contract(format!(
            "cannot estimate normals for a cloud of {} points",
            cloud.len()
        )));
    }
    estimate_normals(cloud, DEFAULT_NORMAL_K.min(cloud.len() - 1))
}

/// Re-estimates normals of the listed points, orienting each new normal to
/// agree with the point's previous one.
pub fn reestimate_normals(cloud: &mut PointCloud, indices: &[usize], k: usize) -> Result<()> {
    let n = cloud.len();
    if indices.is_empty() {
        return Ok(());
    }
    let k = k.min(n - 1);
    if k < 3 {
        return Ok(());
    }
    let points = cloud.points().to_vec();
    let previous = cloud.require_normals()?.to_vec();
    let tree = KdTree::new(&points);
    let updates: Vec<(usize, Vector)> = indices
        .par_iter()
        .filter_map(|&i| {
            let mut hood: Vec<Point> = tree.nearest(&points[i], k, Some(i)).iter().map(|nb| points[nb.index]).collect();
            hood.push(points[i]);
            neighborhood_normal(&hood).map(|v| (i, if v.dot(&previous[i]) < 0.0 { -v } else { v }))
        })
        .collect();
    let normals = cloud.normals_mut().expect("normals checked above");
    for (i, v) in updates {
        normals[i] = v;
    }
    Ok(())
}

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::cloud::{Point, PointCloud, Vector};

/// Voxel-grid reduction: one centroid per occupied voxel.
#[derive(Debug, Clone)]
pub struct VoxelDownsample {
    pub cloud: PointCloud,
    /// `index_map[i]` is the output row representing original point `i`.
    pub index_map: Vec<usize>,
}

pub fn voxel_key(p: &Point, size: f64) -> [i64; 3] {
    [
        (p.x / size).floor() as i64,
        (p.y / size).floor() as i64,
        (p.z / size).floor() as i64,
    ]
}

/// Output rows are ordered by voxel key, so the result does not depend on input order
/// beyond floating-point summation.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<VoxelDownsample> {
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::contract(format!("voxel size must be positive, got {voxel_size}")));
    }
    let mut voxels: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.points().iter().enumerate() {
        voxels.entry(voxel_key(p, voxel_size)).or_default().push(i);
    }
    let mut index_map = vec![0usize; cloud.len()];
    let mut points = Vec::with_capacity(voxels.len());
    let mut normals = cloud.normals().map(|_| Vec::with_capacity(voxels.len()));
    for (slot, members) in voxels.values().enumerate() {
        let sum = members
            .iter()
            .fold(Vector::zeros(), |acc, &i| acc + cloud.points()[i].coords);
        points.push(Point::from(sum / members.len() as f64));
        if let (Some(out), Some(ns)) = (normals.as_mut(), cloud.normals()) {
            let mean = members.iter().fold(Vector::zeros(), |acc, &i| acc + ns[i]);
            let norm = mean.norm();
            out.push(if norm > 1e-9 { mean / norm } else { ns[members[0]] });
        }
        for &i in members {
            index_map[i] = slot;
        }
    }
    let mut out = PointCloud::new(cloud.id.clone(), points)?;
    if let Some(ns) = normals {
        out.set_normals(ns)?;
    }
    Ok(VoxelDownsample { cloud: out, index_map })
}

/// Pools per-point labels onto voxel representatives: a voxel is anomalous
/// iff any of its source points is.
pub fn pool_labels(labels: &[bool], index_map: &[usize], output_len: usize) -> Vec<bool> {
    let mut pooled = vec![false; output_len];
    for (&label, &slot) in labels.iter().zip(index_map) {
        pooled[slot] |= label;
    }
    pooled
}

/// Smallest voxel decimation that leaves at most `budget` points, found by
/// doubling then bisecting the voxel size.
pub fn decimate_to_budget(cloud: &PointCloud, budget: usize) -> Result<VoxelDownsample> {
    if budget == 0 {
        return Err(Error::contract("point budget must be at least 1"));
    }
    if cloud.len() <= budget {
        return Ok(VoxelDownsample {
            cloud: cloud.clone(),
            index_map: (0..cloud.len()).collect(),
        });
    }
    let extent = cloud.diameter_bound().max(1e-12);
    let mut lo = extent * 1e-6;
    let mut hi = extent / (budget as f64).cbrt();
    let mut best = voxel_downsample(cloud, hi)?;
    while best.cloud.len() > budget {
        lo = hi;
        hi *= 2.0;
        best = voxel_downsample(cloud, hi)?;
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let trial = voxel_downsample(cloud, mid)?;
        if trial.cloud.len() <= budget {
            hi = mid;
            best = trial;
        } else {
            lo = mid;
        }
    }
    Ok(best)
}

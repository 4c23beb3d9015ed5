//! Free-form defects supported by the surface of an anchor hull.
//!
//! Points near the hull boundary form a patch; a Gaussian-mixture height
//! field over the patch's tangent frame displaces them along their normals,
//! and an inverse-distance-weighted average smooths the displaced subset.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::hull::{convex_hull, distance_to_hull_surface, HullMesh};
use crate::geometry::kdtree::KdTree;
use crate::geometry::normals::{reestimate_normals, DEFAULT_NORMAL_K};
use crate::geometry::{pca_frame, Point, PointCloud, Vector};
use crate::mask::{AnomalyMask, DefectType};
use crate::rng::{self, Stream};
use crate::synth::{Synthesis, SynthesisDetails};

pub const DEFAULT_SMOOTH_K: usize = 8;
pub const DEFAULT_SMOOTH_LAMBDA: f64 = 0.5;
const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernel {
    pub amplitude: f64,
    /// Center in tangent coordinates (u, v).
    pub center: [f64; 2],
    pub sigma: f64,
}

impl GaussianKernel {
    pub fn evaluate(&self, u: f64, v: f64) -> f64 {
        let du = u - self.center[0];
        let dv = v - self.center[1];
        self.amplitude * (-(du * du + dv * dv) / (2.0 * self.sigma * self.sigma)).exp()
    }
}

#[derive(Debug, Clone)]
pub struct HullSupport {
    pub hull: HullMesh,
    /// Points within epsilon of the hull surface, ascending.
    pub members: Vec<usize>,
}

pub fn hull_mask(cloud: &PointCloud, anchors: &[usize], epsilon: f64) -> Result<HullSupport> {
    if !(epsilon > 0.0) {
        return Err(Error::contract(format!("hull proximity threshold must be positive, got {epsilon}")));
    }
    if let Some(&bad) = anchors.iter().find(|&&a| a >= cloud.len()) {
        return Err(Error::contract(format!("anchor {bad} out of range")));
    }
    let pts: Vec<Point> = anchors.iter().map(|&i| cloud.points()[i]).collect();
    let hull = convex_hull(&pts)?;
    let (mut lo, mut hi) = (hull.vertices[0], hull.vertices[0]);
    for v in &hull.vertices {
        for a in 0..3 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    let members: Vec<usize> = cloud
        .points()
        .par_iter()
        .enumerate()
        .filter(|(_, p)| (0..3).all(|a| p[a] > lo[a] - epsilon && p[a] < hi[a] + epsilon))
        .filter(|(_, p)| distance_to_hull_surface(p, &hull) < epsilon)
        .map(|(i, _)| i)
        .collect();
    if members.is_empty() {
        return Err(Error::EmptyMask { epsilon });
    }
    Ok(HullSupport { hull, members })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TangentPatch {
    pub members: Vec<usize>,
    pub center: Point,
    pub u_axis: Vector,
    pub v_axis: Vector,
    /// (u, v) per member, aligned with `members`.
    pub coords: Vec<[f64; 2]>,
}

impl TangentPatch {
    /// Axis-aligned bounds of the tangent coordinates as ([u_min, v_min], [u_max, v_max]).
    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for c in &self.coords {
            for a in 0..2 {
                lo[a] = lo[a].min(c[a]);
                hi[a] = hi[a].max(c[a]);
            }
        }
        (lo, hi)
    }
}

pub fn build_patch(cloud: &PointCloud, members: &[usize]) -> Result<TangentPatch> {
    if members.len() < 3 {
        return Err(Error::contract(format!(
            "a tangent patch needs at least 3 points, got {}",
            members.len()
        )));
    }
    let pts: Vec<Point> = members.iter().map(|&i| cloud.points()[i]).collect();
    let frame = pca_frame(&pts)?;
    let (u_axis, v_axis) = (frame.axes[0], frame.axes[1]);
    let coords = pts
        .iter()
        .map(|p| {
            let d = p - frame.mean;
            [d.dot(&u_axis), d.dot(&v_axis)]
        })
        .collect();
    Ok(TangentPatch {
        members: members.to_vec(),
        center: frame.mean,
        u_axis,
        v_axis,
        coords,
    })
}

pub fn height_field(coords: &[[f64; 2]], kernels: &[GaussianKernel]) -> Result<Vec<f64>> {
    if kernels.is_empty() {
        return Err(Error::contract("height field needs at least one kernel"));
    }
    if let Some(k) = kernels.iter().find(|k| !(k.sigma > 0.0) || !k.amplitude.is_finite()) {
        return Err(Error::contract(format!(
            "kernel spread must be positive and amplitude finite (sigma {}, amplitude {})",
            k.sigma, k.amplitude
        )));
    }
    Ok(coords
        .iter()
        .map(|&[u, v]| kernels.iter().fold(0.0, |acc, k| acc + k.evaluate(u, v)))
        .collect())
}

/// Displaces patch members along their normals by the height field.
/// Returns the full cloud with updated positions plus per-member heights.
pub fn deform_freeform(
    cloud: &PointCloud,
    patch: &TangentPatch,
    kernels: &[GaussianKernel],
) -> Result<(PointCloud, Vec<f64>)> {
    let normals = cloud.require_normals()?.to_vec();
    let heights = height_field(&patch.coords, kernels)?;
    let mut out = cloud.clone();
    let points = out.points_mut();
    for (&i, &h) in patch.members.iter().zip(&heights) {
        points[i] += normals[i] * h;
    }
    Ok((out, heights))
}

/// Inverse-distance weights of each point's `k` nearest neighbors within `subset`.
pub fn smoothing_weights(subset: &[Point], k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    if k == 0 || k >= subset.len() {
        return Err(Error::contract(format!(
            "smoothing needs 1 <= k < {} (subset size), got {k}",
            subset.len()
        )));
    }
    let tree = KdTree::new(subset);
    Ok(subset
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nbrs = tree.nearest(p, k, Some(i));
            let inv: Vec<f64> = nbrs.iter().map(|n| 1.0 / n.distance().max(DISTANCE_FLOOR)).collect();
            let total: f64 = inv.iter().sum();
            nbrs.iter().zip(inv).map(|(n, w)| (n.index, w / total)).collect()
        })
        .collect())
}

/// `p' = (1 - λ) p + λ Σ w_j p_j` over the subset's own kNN graph.
pub fn smooth_local(subset: &[Point], k: usize, lambda: f64) -> Result<Vec<Point>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::contract(format!("smoothing strength must lie in [0, 1], got {lambda}")));
    }
    if subset.len() < 2 {
        log::warn!("smoothing skipped: subset of {} point(s)", subset.len());
        return Ok(subset.to_vec());
    }
    let weights = smoothing_weights(subset, k)?;
    if lambda == 0.0 {
        return Ok(subset.to_vec());
    }
    Ok(subset
        .iter()
        .zip(&weights)
        .map(|(p, ws)| {
            let avg = ws.iter().fold(Vector::zeros(), |acc, &(j, w)| acc + subset[j].coords * w);
            Point::from(p.coords * (1.0 - lambda) + avg * lambda)
        })
        .collect())
}

/// Random kernel draw over a patch; lengths in model units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSampling {
    pub count: usize,
    pub amplitude: (f64, f64),
    /// Spread as a fraction of the patch extent.
    pub sigma_fraction: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Explicit(Vec<GaussianKernel>),
    Sampled(KernelSampling),
}

/// Kernel centers uniform in the patch's (u, v) box, spreads a fraction of the
/// larger box side, amplitudes uniform in magnitude with a random sign.
pub fn sample_kernels(patch: &TangentPatch, spec: &KernelSampling, seed: u64) -> Vec<GaussianKernel> {
    let mut r = rng::stream(seed, Stream::Kernels);
    let (lo, hi) = patch.bounds();
    let extent = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    (0..spec.count)
        .map(|_| {
            let center = [rng::uniform(&mut r, lo[0], hi[0]), rng::uniform(&mut r, lo[1], hi[1])];
            let sigma = extent * rng::uniform(&mut r, spec.sigma_fraction.0, spec.sigma_fraction.1);
            let magnitude = rng::uniform(&mut r, spec.amplitude.0, spec.amplitude.1);
            let sign = if rng::uniform(&mut r, 0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
            GaussianKernel {
                amplitude: sign * magnitude,
                center,
                sigma: sigma.max(1e-12),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeformParams {
    pub epsilon: f64,
    pub kernels: KernelSpec,
    pub smooth_k: usize,
    pub lambda: f64,
    /// Minimum |h| for a support point to be labeled anomalous.
    pub h_min: f64,
}

pub fn synthesize_freeform(cloud: &PointCloud, anchors: &[usize], params: &FreeformParams, seed: u64) -> Result<Synthesis> {
    let support = hull_mask(cloud, anchors, params.epsilon)?;
    let patch = build_patch(cloud, &support.members)?;
    let kernels = match &params.kernels {
        KernelSpec::Explicit(k) => k.clone(),
        KernelSpec::Sampled(s) => sample_kernels(&patch, s, seed),
    };
    let (mut deformed, heights) = deform_freeform(cloud, &patch, &kernels)?;

    let subset: Vec<Point> = patch.members.iter().map(|&i| deformed.points()[i]).collect();
    let k = params.smooth_k.min(subset.len().saturating_sub(1)).max(1);
    let smoothed = smooth_local(&subset, k, params.lambda)?;
    {
        let points = deformed.points_mut();
        for (&i, p) in patch.members.iter().zip(smoothed) {
            points[i] = p;
        }
    }

    let masked: Vec<usize> = patch
        .members
        .iter()
        .zip(&heights)
        .filter_map(|(&i, h)| (h.abs() > params.h_min).then_some(i))
        .collect();
    reestimate_normals(&mut deformed, &masked, DEFAULT_NORMAL_K)?;
    Ok(Synthesis {
        mask: AnomalyMask::from_indices(cloud.len(), &masked, Some(DefectType::Freeform)),
        cloud: deformed,
        removed: Vec::new(),
        details: SynthesisDetails::Freeform {
            anchors: anchors.to_vec(),
            support: support.members,
            kernels,
            h_min: params.h_min,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel(a: f64, u: f64, v: f64, s: f64) -> GaussianKernel {
        GaussianKernel { amplitude: a, center: [u, v], sigma: s }
    }

    #[test]
    fn kernel_center_and_decay() {
        let k = kernel(0.37, 0.2, -0.1, 0.05);
        assert_eq!(height_field(&[[0.2, -0.1]], &[k]).unwrap()[0], 0.37);
        let far = height_field(&[[0.2 + 10.0 * 0.05, -0.1]], &[k]).unwrap()[0];
        assert!(far.abs() < 0.37 * (-50f64).exp() * 1.0001);
        assert!(height_field(&[[0.0, 0.0]], &[kernel(1.0, 0.0, 0.0, 0.0)]).is_err());
        assert!(height_field(&[[0.0, 0.0]], &[]).is_err());
    }

    #[test]
    fn patch_coordinates_are_centered() {
        let pts: Vec<Point> = (0..25).map(|i| Point::new((i % 5) as f64 * 0.3, (i / 5) as f64 * 0.2, 0.0)).collect();
        let cloud = PointCloud::new("p", pts).unwrap();
        let members: Vec<usize> = (0..25).collect();
        let patch = build_patch(&cloud, &members).unwrap();
        let (su, sv) = patch.coords.iter().fold((0.0, 0.0), |a, c| (a.0 + c[0], a.1 + c[1]));
        assert!(su.abs() < 1e-9 && sv.abs() < 1e-9);
        // Center point (index 12) sits at the centroid.
        assert!(patch.coords[12][0].abs() < 1e-12 && patch.coords[12][1].abs() < 1e-12);
        for a in 0..25 {
            for b in 0..25 {
                let d3 = (cloud.points()[a] - cloud.points()[b]).norm();
                let du = patch.coords[a][0] - patch.coords[b][0];
                let dv = patch.coords[a][1] - patch.coords[b][1];
                assert!((d3 - (du * du + dv * dv).sqrt()).abs() < 1e-9);
            }
        }
        assert!(build_patch(&cloud, &[0, 1]).is_err());
    }

    #[test]
    fn smoothing_identity_and_weights() {
        let pts: Vec<Point> = (0..30).map(|i| Point::new(i as f64 * 0.1, ((i * 7) % 5) as f64 * 0.05, 0.0)).collect();
        assert_eq!(smooth_local(&pts, 4, 0.0).unwrap(), pts);
        for ws in smoothing_weights(&pts, 4).unwrap() {
            let s: f64 = ws.iter().map(|w| w.1).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(smooth_local(&pts, 30, 0.5).is_err());
        assert!(smooth_local(&pts, 4, 1.5).is_err());
        assert_eq!(smooth_local(&pts[..1], 1, 0.5).unwrap(), pts[..1].to_vec());
    }

    #[test]
    fn equidistant_neighbors_average() {
        let pts = vec![
            Point::origin(),
            Point::new(1.0, 0.0, 0.0),
            Point::new(-1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(0.0, -1.0, 0.0),
        ];
        let out = smooth_local(&pts, 4, 1.0).unwrap();
        assert!((out[0] - Point::origin()).norm() < 1e-15);
    }

    #[test]
    fn duplicate_points_do_not_blow_up() {
        let pts = vec![Point::origin(), Point::origin(), Point::new(1.0, 0.0, 0.0)];
        let out = smooth_local(&pts, 2, 0.5).unwrap();
        assert!(out.iter().all(|p| p.coords.iter().all(|c| c.is_finite())));
    }
}

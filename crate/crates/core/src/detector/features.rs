//! Rotation-invariant local eigen-geometry descriptor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::kdtree::KdTree;
use crate::geometry::pca::{covariance, sorted_eigen};
use crate::geometry::cloud::centroid;
use crate::geometry::{Point, PointCloud, Vector};

pub const FEATURE_DIM: usize = 11;
pub const DEFAULT_K_FEAT: usize = 48;
pub const EIGEN_FLOOR: f64 = 1e-12;
const EXTRACTOR: &str = "eigen-geometry";
const EXTRACTOR_VERSION: u32 = 1;

pub type FeatureRow = [f64; FEATURE_DIM];

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "linearity",
    "planarity",
    "sphericity",
    "omnivariance",
    "anisotropy",
    "eigenentropy",
    "surface_variation",
    "mean_neighbor_distance",
    "std_neighbor_distance",
    "normal_deviation",
    "height_range",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFingerprint {
    pub extractor: String,
    pub version: u32,
    pub dim: usize,
    pub k_feat: usize,
}

impl FeatureFingerprint {
    pub fn eigen(k_feat: usize) -> Self {
        Self {
            extractor: EXTRACTOR.into(),
            version: EXTRACTOR_VERSION,
            dim: FEATURE_DIM,
            k_feat,
        }
    }
}

impl fmt::Display for FeatureFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-v{}/d{}/k{}", self.extractor, self.version, self.dim, self.k_feat)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureRow>,
    pub fingerprint: FeatureFingerprint,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

struct Local {
    neighbors: Vec<usize>,
    distances: Vec<f64>,
    eigenvalues: [f64; 3],
    normal: Vector,
}

fn local_frame(points: &[Point], tree: &KdTree<'_>, i: usize, k: usize) -> Local {
    let found = tree.nearest(&points[i], k, Some(i));
    let neighbors: Vec<usize> = found.iter().map(|n| n.index).collect();
    let distances: Vec<f64> = found.iter().map(|n| n.distance()).collect();
    let mut hood: Vec<Point> = Vec::with_capacity(k + 1);
    hood.push(points[i]);
    hood.extend(neighbors.iter().map(|&j| points[j]));
    let mean = centroid(&hood);
    let (values, vectors) = sorted_eigen(covariance(&hood, &mean));
    Local {
        neighbors,
        distances,
        eigenvalues: [values[0], values[1], values[2]],
        normal: vectors[2],
    }
}

/// Per-point descriptor over the `k_feat` nearest neighbors.
///
/// Columns follow [`FEATURE_NAMES`]. Normals are the smallest-eigenvalue
/// directions of the same neighborhoods, so only geometry is used.
pub fn extract_features(cloud: &PointCloud, k_feat: usize) -> Result<FeatureMatrix> {
    let n = cloud.len();
    if k_feat < 5 {
        return Err(Error::contract(format!("feature neighborhood must be at least 5, got {k_feat}")));
    }
    if k_feat >= n {
        return Err(Error::contract(format!(
            "feature neighborhood {k_feat} needs more than {n} points"
        )));
    }
    let points = cloud.points();
    let tree = KdTree::new(points);
    let locals: Vec<Local> = (0..n).into_par_iter().map(|i| local_frame(points, &tree, i, k_feat)).collect();
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let l = &locals[i];
            let lam = l.eigenvalues.map(|v| v.max(EIGEN_FLOOR));
            let sum: f64 = lam.iter().sum();
            let h = lam.map(|v| v / sum);
            let linearity = (h[0] - h[1]) / h[0];
            let planarity = (h[1] - h[2]) / h[0];
            let sphericity = h[2] / h[0];
            let omnivariance = (h[0] * h[1] * h[2]).cbrt();
            let anisotropy = (h[0] - h[2]) / h[0];
            let entropy = -h.iter().map(|v| v * v.ln()).sum::<f64>();
            let variation = h[2];
            let kf = l.distances.len() as f64;
            let mean_d = l.distances.iter().sum::<f64>() / kf;
            let std_d = (l.distances.iter().map(|d| (d - mean_d).powi(2)).sum::<f64>() / kf).sqrt();
            let deviation =
                l.neighbors.iter().map(|&j| 1.0 - l.normal.dot(&locals[j].normal).abs()).sum::<f64>() / kf;
            let heights = std::iter::once(0.0).chain(l.neighbors.iter().map(|&j| (points[j] - points[i]).dot(&l.normal)));
            let (lo, hi) = heights.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| (lo.min(h), hi.max(h)));
            [
                linearity,
                planarity,
                sphericity,
                omnivariance,
                anisotropy,
                entropy,
                variation,
                mean_d,
                std_d,
                deviation,
                hi - lo,
            ]
        })
        .collect();
    Ok(FeatureMatrix {
        rows,
        fingerprint: FeatureFingerprint::eigen(k_feat),
    })
}

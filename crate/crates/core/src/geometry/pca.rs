use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::cloud::{centroid, Point, Vector};

/// Principal frame of a point subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaFrame {
    pub mean: Point,
    /// Orthonormal, right-handed, ordered by descending eigenvalue.
    pub axes: [Vector; 3],
    pub eigenvalues: [f64; 3],
}

/// Population covariance (divides by n) about the given mean.
pub fn covariance(points: &[Point], mean: &Point) -> Matrix3<f64> {
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov / points.len() as f64
}

/// Eigenpairs of a symmetric 3×3 matrix sorted by descending eigenvalue.
pub fn sorted_eigen(cov: Matrix3<f64>) -> ([f64; 3], [Vector; 3]) {
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.map(|i| eig.eigenvalues[i]);
    let vectors = order.map(|i| eig.eigenvectors.column(i).normalize());
    (values, vectors)
}

/// Flips `v` so that its largest-magnitude component is positive
/// (the first such component on exact magnitude ties).
pub fn canonical_sign(v: Vector) -> Vector {
    let mut best = 0;
    for a in 1..3 {
        if v[a].abs() > v[best].abs() {
            best = a;
        }
    }
    if v[best] < 0.0 {
        -v
    } else {
        v
    }
}

pub fn pca_frame(points: &[Point]) -> Result<PcaFrame> {
    if points.len() < 3 {
        return Err(Error::contract(format!("PCA needs at least 3 points, got {}", points.len())));
    }
    let mean = centroid(points);
    let (eigenvalues, vectors) = sorted_eigen(covariance(points, &mean));
    let first = canonical_sign(vectors[0]);
    // Re-orthogonalize the second axis against the first before fixing its sign.
    let second = canonical_sign((vectors[1] - first * first.dot(&vectors[1])).normalize());
    let third = first.cross(&second).normalize();
    Ok(PcaFrame {
        mean,
        axes: [first, second, third],
        eigenvalues,
    })
}

#![allow(dead_code)]

use defectforge_core::geometry::Point;
use defectforge_core::pipeline::SdnProfile;
use defectforge_core::rng;
use defectforge_core::{PointCloud, Vector};

/// Uniform random points on the unit sphere with exact radial normals.
pub fn sphere(n: usize, seed: u64) -> PointCloud {
    let mut r = rng::seeded(seed);
    let pts: Vec<Point> = (0..n).map(|_| Point::from(rng::unit_vector(&mut r))).collect();
    let normals: Vec<Vector> = pts.iter().map(|p| p.coords).collect();
    PointCloud::with_normals(format!("sphere-{seed}"), pts, normals).unwrap()
}

pub fn unit_profile() -> SdnProfile {
    SdnProfile::new("sphere", Point::origin(), 1.0, 0.03).unwrap()
}

//! Category-level spatial-distribution normalization.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::voxel::{pool_labels, voxel_downsample, VoxelDownsample};
use crate::geometry::{min_bounding_sphere, Point, PointCloud};
use crate::mask::AnomalyMask;

pub const SDN_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_VOXEL_SIZE: f64 = 0.03;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdnProfile {
    pub schema_version: u32,
    pub category: String,
    pub center: Point,
    /// Bounding radius in model units.
    pub radius: f64,
    /// Voxel edge in normalized (unit-ball) units.
    pub voxel_size: f64,
}

impl SdnProfile {
    pub fn new(category: impl Into<String>, center: Point, radius: f64, voxel_size: f64) -> Result<Self> {
        let p = Self {
            schema_version: SDN_SCHEMA_VERSION,
            category: category.into(),
            center,
            radius,
            voxel_size,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.radius > 0.0) || !self.radius.is_finite() {
            return Err(Error::contract(format!("profile radius must be positive, got {}", self.radius)));
        }
        if !(self.voxel_size > 0.0 && self.voxel_size < 2.0) {
            return Err(Error::contract(format!(
                "profile voxel size must lie in (0, 2), got {}",
                self.voxel_size
            )));
        }
        if self.schema_version != SDN_SCHEMA_VERSION {
            return Err(Error::contract(format!(
                "unsupported profile schema version {}",
                self.schema_version
            )));
        }
        Ok(())
    }

    pub fn normalize_point(&self, p: &Point) -> Point {
        Point::from((p - self.center) / self.radius)
    }

    pub fn denormalize_point(&self, p: &Point) -> Point {
        self.center + p.coords * self.radius
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text)?;
        p.check()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Bounding sphere over the concatenation of all training points.
pub fn fit_sdn_profile(clouds: &[PointCloud], category: &str, voxel_size: f64) -> Result<SdnProfile> {
    if clouds.is_empty() {
        return Err(Error::contract("profile fitting needs at least one training cloud"));
    }
    let all: Vec<Point> = clouds.iter().flat_map(|c| c.points().iter().copied()).collect();
    let sphere = min_bounding_sphere(&all)?;
    if !(sphere.radius > 0.0) {
        return Err(Error::Degenerate("training points coincide; bounding radius is zero".into()));
    }
    SdnProfile::new(category, sphere.center, sphere.radius, voxel_size)
}

/// `(x - center) / radius` for every point; normals pass through unchanged.
pub fn normalize_cloud(cloud: &PointCloud, profile: &SdnProfile) -> Result<PointCloud> {
    let points = cloud.points().iter().map(|p| profile.normalize_point(p)).collect();
    let mut out = PointCloud::new(cloud.id.clone(), points)?;
    if let Some(ns) = cloud.normals() {
        out.set_normals(ns.to_vec())?;
    }
    Ok(out)
}

/// Normalizes then voxel-downsamples with the profile's voxel size.
pub fn apply_sdn(cloud: &PointCloud, profile: &SdnProfile) -> Result<VoxelDownsample> {
    let normalized = normalize_cloud(cloud, profile)?;
    voxel_downsample(&normalized, profile.voxel_size)
}

/// Carries a mask through [`apply_sdn`] with any-anomalous pooling.
pub fn pool_mask(mask: &AnomalyMask, reduced: &VoxelDownsample) -> AnomalyMask {
    AnomalyMask {
        labels: pool_labels(&mask.labels, &reduced.index_map, reduced.cloud.len()),
        defect: mask.defect,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> PointCloud {
        PointCloud::new("p", vec![Point::origin(), Point::new(2.0, 0.0, 0.0)]).unwrap()
    }

    #[test]
    fn two_point_profile() {
        let p = fit_sdn_profile(&[pair()], "c", 0.03).unwrap();
        assert_eq!(p.center, Point::new(1.0, 0.0, 0.0));
        assert_eq!(p.radius, 1.0);
    }

    #[test]
    fn joint_fit_equals_concatenation() {
        let a = PointCloud::new("a", vec![Point::new(0.0, 1.0, 0.0), Point::new(0.5, 0.2, 3.0)]).unwrap();
        let b = PointCloud::new("b", vec![Point::new(-2.0, 0.0, 1.0), Point::new(1.0, 1.0, 1.0)]).unwrap();
        let joint = fit_sdn_profile(&[a.clone(), b.clone()], "c", 0.03).unwrap();
        let concat = PointCloud::new("ab", [a.points(), b.points()].concat()).unwrap();
        assert_eq!(joint, fit_sdn_profile(&[concat], "c", 0.03).unwrap());
    }

    #[test]
    fn single_voxel_profile() {
        let p = SdnProfile::new("c", Point::origin(), 1.0, 1.9).unwrap();
        let cloud = PointCloud::new("t", vec![Point::new(0.1, 0.1, 0.1), Point::new(0.5, 0.3, 0.2)]).unwrap();
        let out = apply_sdn(&cloud, &p).unwrap();
        assert_eq!(out.cloud.len(), 1);
        assert!((out.cloud.points()[0] - Point::new(0.3, 0.2, 0.15)).norm() < 1e-12);
    }

    #[test]
    fn outside_points_are_not_an_error() {
        let p = SdnProfile::new("c", Point::origin(), 1.0, 0.03).unwrap();
        let cloud = PointCloud::new("t", vec![Point::new(5.0, 0.0, 0.0)]).unwrap();
        let out = apply_sdn(&cloud, &p).unwrap();
        assert!(out.cloud.points()[0].coords.norm() > 1.0);
    }

    #[test]
    fn empty_and_invalid() {
        assert!(fit_sdn_profile(&[], "c", 0.03).is_err());
        assert!(SdnProfile::new("c", Point::origin(), 0.0, 0.03).is_err());
        assert!(SdnProfile::new("c", Point::origin(), 1.0, 2.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = SdnProfile::new("cat", Point::new(0.1, -2.0, 3.5), 1.25, 0.03).unwrap();
        assert_eq!(SdnProfile::from_json(&p.to_json()).unwrap(), p);
    }
}

//! Plane-supported structural defects: hinge bending and cracking.

use nalgebra::{Rotation3, Unit};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::cloud::centroid;
use crate::geometry::pca::canonical_sign;
use crate::geometry::{pca_frame, Point, PointCloud, Vector};
use crate::mask::{AnomalyMask, DefectType};
use crate::rng::{self, SeededRng, Stream};
use crate::synth::{Synthesis, SynthesisDetails};

pub const DEFAULT_MAX_BEND: f64 = std::f64::consts::FRAC_PI_2;
/// Minimum share of points required on each side of a sampled plane.
pub const MIN_SIDE_FRACTION: f64 = 0.10;
const PLANE_ATTEMPTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Vector,
    pub point: Point,
}

impl Plane {
    /// Normalizes `normal`; rejects zero or non-finite normals.
    pub fn new(normal: Vector, point: Point) -> Result<Self> {
        let n = normal.norm();
        if !(n > 1e-12) || !n.is_finite() || !point.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::contract("plane normal must be a finite nonzero vector"));
        }
        Ok(Self {
            normal: normal / n,
            point,
        })
    }

    pub fn signed_distance(&self, p: &Point) -> f64 {
        self.normal.dot(&(p - self.point))
    }
}

pub fn signed_distances(cloud: &PointCloud, plane: &Plane) -> Vec<f64> {
    cloud.points().iter().map(|p| plane.signed_distance(p)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneBand {
    pub plane: Plane,
    pub thickness: f64,
    /// Indices with |s| < thickness / 2, ascending.
    pub members: Vec<usize>,
    /// Signed distance of every cloud point.
    pub signed: Vec<f64>,
}

pub fn extract_band(cloud: &PointCloud, plane: &Plane, thickness: f64) -> Result<PlaneBand> {
    if !(thickness > 0.0) {
        return Err(Error::contract(format!("band thickness must be positive, got {thickness}")));
    }
    let signed = signed_distances(cloud, plane);
    let half = thickness / 2.0;
    let members: Vec<usize> = signed
        .iter()
        .enumerate()
        .filter_map(|(i, s)| (s.abs() < half).then_some(i))
        .collect();
    if members.is_empty() {
        return Err(Error::EmptyBand);
    }
    Ok(PlaneBand {
        plane: *plane,
        thickness,
        members,
        signed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HingeAxis {
    pub origin: Point,
    pub direction: Vector,
    /// Set when the two leading band eigenvalues are nearly equal.
    pub ambiguous: bool,
}

pub fn fit_hinge(band: &PlaneBand, cloud: &PointCloud) -> Result<HingeAxis> {
    let pts: Vec<Point> = band.members.iter().map(|&i| cloud.points()[i]).collect();
    match pts.len() {
        0 | 1 => Err(Error::contract(format!(
            "hinge fitting needs at least 2 band points, got {}",
            pts.len()
        ))),
        2 => {
            let d = pts[1] - pts[0];
            if d.norm() == 0.0 {
                return Err(Error::Degenerate("band points coincide".into()));
            }
            Ok(HingeAxis {
                origin: centroid(&pts),
                direction: canonical_sign(d.normalize()),
                ambiguous: false,
            })
        }
        _ => {
            let frame = pca_frame(&pts)?;
            let [l1, l2, _] = frame.eigenvalues;
            let ambiguous = l1 <= 0.0 || (l1 - l2) <= 1e-6 * l1;
            if ambiguous {
                log::warn!("hinge band is nearly isotropic (eigenvalues {l1:.3e}, {l2:.3e}); axis is ambiguous");
            }
            Ok(HingeAxis {
                origin: frame.mean,
                direction: frame.axes[0],
                ambiguous,
            })
        }
    }
}

/// Angular weight: 0 below the band, 1 above it, linear across it.
pub fn bend_weight(s: f64, thickness: f64) -> f64 {
    let half = thickness / 2.0;
    if s <= -half {
        0.0
    } else if s >= half {
        1.0
    } else {
        (s + half) / thickness
    }
}

pub fn hinge_rotation(axis: &Vector, angle: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle)
}

/// Rotates the positive side of the plane about the fitted hinge by up to `angle` radians.
pub fn bend(cloud: &PointCloud, plane: &Plane, thickness: f64, angle: f64, max_angle: f64) -> Result<Synthesis> {
    if !(angle.abs() <= max_angle) {
        return Err(Error::contract(format!(
            "bend angle {angle} exceeds the cap of {max_angle} radians"
        )));
    }
    let band = extract_band(cloud, plane, thickness)?;
    let hinge = fit_hinge(&band, cloud)?;
    let mut out = cloud.clone();
    let mut masked = Vec::new();
    let weights: Vec<f64> = band.signed.iter().map(|&s| bend_weight(s, thickness)).collect();
    {
        let points = out.points_mut();
        for (i, &alpha) in weights.iter().enumerate() {
            if alpha > 0.0 {
                masked.push(i);
            }
            if alpha == 0.0 || angle == 0.0 {
                continue;
            }
            let r = hinge_rotation(&hinge.direction, alpha * angle);
            points[i] = hinge.origin + r * (points[i] - hinge.origin);
        }
    }
    if let Some(normals) = out.normals_mut() {
        for (i, &alpha) in weights.iter().enumerate() {
            if alpha == 0.0 || angle == 0.0 {
                continue;
            }
            let r = hinge_rotation(&hinge.direction, alpha * angle);
            normals[i] = (r * normals[i]).normalize();
        }
    }
    Ok(Synthesis {
        mask: AnomalyMask::from_indices(cloud.len(), &masked, Some(DefectType::Bend)),
        cloud: out,
        removed: Vec::new(),
        details: SynthesisDetails::Bend {
            plane: *plane,
            hinge_origin: hinge.origin.coords.into(),
            hinge_direction: hinge.direction.into(),
            band_size: band.members.len(),
            ambiguous_axis: hinge.ambiguous,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrackParams {
    pub width: f64,
    pub jitter: f64,
    pub rim: f64,
}

/// Perturbed signed distances `s + η`, η ~ N(0, jitter²) drawn in point order.
/// With zero jitter no random numbers are consumed.
pub fn jittered_distances(signed: &[f64], jitter: f64, seed: u64) -> Vec<f64> {
    if jitter == 0.0 {
        return signed.to_vec();
    }
    let mut rng = rng::stream(seed, Stream::Noise);
    signed.iter().map(|&s| s + rng::gaussian(&mut rng, jitter)).collect()
}

/// Removes a jittered slab around the plane and labels the rim beside it.
pub fn crack(cloud: &PointCloud, plane: &Plane, params: CrackParams, seed: u64) -> Result<Synthesis> {
    let CrackParams { width, jitter, rim } = params;
    if !(width > 0.0) || !(jitter >= 0.0) || !(rim > 0.0) {
        return Err(Error::contract(format!(
            "crack needs width > 0, jitter >= 0, rim > 0 (got {width}, {jitter}, {rim})"
        )));
    }
    let signed = signed_distances(cloud, plane);
    let perturbed = jittered_distances(&signed, jitter, seed);
    let half = width / 2.0;
    let mut keep = vec![true; cloud.len()];
    let mut removed = Vec::new();
    let mut rim_rows = Vec::new();
    for (i, s) in perturbed.iter().map(|s| s.abs()).enumerate() {
        if s < half {
            keep[i] = false;
            removed.push(i);
        } else if s < half + rim {
            rim_rows.push(i);
        }
    }
    if removed.len() == cloud.len() {
        return Err(Error::OverRemoval(cloud.len()));
    }
    let full_mask = AnomalyMask::from_indices(cloud.len(), &rim_rows, Some(DefectType::Crack));
    Ok(Synthesis {
        cloud: cloud.retain(&keep)?,
        mask: full_mask.retain_rows(&keep),
        details: SynthesisDetails::Crack {
            plane: *plane,
            removed_count: removed.len(),
        },
        removed,
    })
}

/// Counts of points strictly below and above a band of the given thickness.
pub fn side_counts(signed: &[f64], thickness: f64) -> (usize, usize, usize) {
    let half = thickness / 2.0;
    let below = signed.iter().filter(|&&s| s <= -half).count();
    let above = signed.iter().filter(|&&s| s >= half).count();
    (below, signed.len() - below - above, above)
}

/// Draws a plane through a random cloud point with a uniform random normal,
/// resampling until the band is nonempty and each side holds at least
/// [`MIN_SIDE_FRACTION`] of the points.
pub fn sample_plane(cloud: &PointCloud, thickness: f64, rng: &mut SeededRng) -> Result<Plane> {
    sample_plane_through(cloud, thickness, None, rng)
}

/// [`sample_plane`] with the plane point drawn from `centers` instead of the
/// whole cloud.
pub fn sample_plane_through(
    cloud: &PointCloud,
    thickness: f64,
    centers: Option<&[usize]>,
    rng: &mut SeededRng,
) -> Result<Plane> {
    let n = cloud.len();
    let min_side = (MIN_SIDE_FRACTION * n as f64).ceil() as usize;
    if centers.is_some_and(|c| c.is_empty() || c.iter().any(|&i| i >= n)) {
        return Err(Error::contract("plane centers must be nonempty valid indices"));
    }
    for _ in 0..PLANE_ATTEMPTS {
        let c = match centers {
            Some(cs) => cloud.points()[cs[rng::sample_indices(rng, cs.len(), 1)[0]]],
            None => cloud.points()[rng::sample_indices(rng, n, 1)[0]],
        };
        let plane = Plane::new(rng::unit_vector(rng), c)?;
        let signed = signed_distances(cloud, &plane);
        let (below, band, above) = side_counts(&signed, thickness);
        if band > 0 && below >= min_side && above >= min_side {
            return Ok(plane);
        }
    }
    Err(Error::Degenerate(format!(
        "no plane with a nonempty band and {:.0}% of points per side after {PLANE_ATTEMPTS} draws",
        MIN_SIDE_FRACTION * 100.0
    )))
}

pub fn plane_rng(seed: u64) -> SeededRng {
    rng::stream(seed, Stream::Plane)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(n: usize, seed: u64) -> PointCloud {
        let mut r = rng::seeded(seed);
        let pts: Vec<Point> = (0..n).map(|_| Point::from(rng::unit_vector(&mut r))).collect();
        let normals = pts.iter().map(|p| p.coords).collect();
        PointCloud::with_normals("s", pts, normals).unwrap()
    }

    #[test]
    fn signed_distance_basics() {
        let plane = Plane::new(Vector::z(), Point::origin()).unwrap();
        assert_eq!(plane.signed_distance(&Point::new(0.0, 0.0, 2.0)), 2.0);
        assert_eq!(plane.signed_distance(&Point::new(3.0, -1.0, 0.0)), 0.0);
        let flipped = Plane::new(-Vector::z(), Point::origin()).unwrap();
        let cloud = sphere(50, 1);
        let a = signed_distances(&cloud, &plane);
        let b = signed_distances(&cloud, &flipped);
        assert!(a.iter().zip(&b).all(|(x, y)| *x == -*y));
    }

    #[test]
    fn band_membership() {
        let cloud = sphere(2000, 2);
        let plane = Plane::new(Vector::z(), Point::origin()).unwrap();
        let band = extract_band(&cloud, &plane, 0.2).unwrap();
        let expect: Vec<usize> = (0..cloud.len()).filter(|&i| cloud.points()[i].z.abs() < 0.1).collect();
        assert_eq!(band.members, expect);
        let full = extract_band(&cloud, &plane, 10.0).unwrap();
        assert_eq!(full.members.len(), cloud.len());
        let far = Plane::new(Vector::z(), Point::new(0.0, 0.0, 5.0)).unwrap();
        assert!(matches!(extract_band(&cloud, &far, 0.2), Err(Error::EmptyBand)));
    }

    #[test]
    fn hinge_on_x_axis() {
        let pts: Vec<Point> = (0..5).map(|i| Point::new(i as f64, 0.0, 0.0)).collect();
        let cloud = PointCloud::new("l", pts).unwrap();
        let plane = Plane::new(Vector::z(), Point::origin()).unwrap();
        let band = extract_band(&cloud, &plane, 0.1).unwrap();
        let h = fit_hinge(&band, &cloud).unwrap();
        assert!((h.direction.x.abs() - 1.0).abs() < 1e-12);
        assert_eq!(h.origin, Point::new(2.0, 0.0, 0.0));
        let lone = PlaneBand { members: vec![0], ..band };
        assert!(fit_hinge(&lone, &cloud).is_err());
    }

    #[test]
    fn zero_angle_is_identity() {
        let cloud = sphere(300, 3);
        let plane = Plane::new(Vector::new(1.0, 1.0, 0.0), Point::origin()).unwrap();
        let out = bend(&cloud, &plane, 0.2, 0.0, DEFAULT_MAX_BEND).unwrap();
        assert_eq!(out.cloud, cloud);
    }

    #[test]
    fn weight_continuity() {
        let delta = 0.3;
        assert!(bend_weight(-delta / 2.0 + 1e-12, delta) < 1e-9);
        assert!((1.0 - bend_weight(delta / 2.0 - 1e-12, delta)) < 1e-9);
        assert_eq!(bend_weight(-delta / 2.0, delta), 0.0);
        assert_eq!(bend_weight(delta / 2.0, delta), 1.0);
    }

    #[test]
    fn angle_cap() {
        let cloud = sphere(100, 4);
        let plane = Plane::new(Vector::z(), Point::origin()).unwrap();
        assert!(bend(&cloud, &plane, 0.2, 2.0, DEFAULT_MAX_BEND).is_err());
    }

    #[test]
    fn crack_without_jitter_matches_filters() {
        let cloud = sphere(2000, 5);
        let plane = Plane::new(Vector::z(), Point::origin()).unwrap();
        let params = CrackParams { width: 0.1, jitter: 0.0, rim: 0.05 };
        let a = crack(&cloud, &plane, params, 1).unwrap();
        let b = crack(&cloud, &plane, params, 999).unwrap();
        assert_eq!(a.removed, b.removed);
        let expect_removed: Vec<usize> = (0..cloud.len()).filter(|&i| cloud.points()[i].z.abs() < 0.05).collect();
        assert_eq!(a.removed, expect_removed);
        let kept: Vec<Point> = cloud.points().iter().filter(|p| p.z.abs() >= 0.05).copied().collect();
        let expect_mask: Vec<bool> = kept.iter().map(|p| p.z.abs() < 0.10).collect();
        assert_eq!(a.mask.labels, expect_mask);
        assert_eq!(a.cloud.len() + a.removed.len(), cloud.len());
    }

    #[test]
    fn crack_over_removal() {
        let cloud = sphere(100, 6);
        let plane = Plane::new(Vector::z(), Point::origin()).unwrap();
        let params = CrackParams { width: 10.0, jitter: 0.0, rim: 0.05 };
        assert!(matches!(crack(&cloud, &plane, params, 1), Err(Error::OverRemoval(100))));
    }

    #[test]
    fn sampled_planes_split_the_cloud() {
        let cloud = sphere(1000, 7);
        let mut r = plane_rng(3);
        let plane = sample_plane(&cloud, 0.1, &mut r).unwrap();
        let (below, band, above) = side_counts(&signed_distances(&cloud, &plane), 0.1);
        assert!(band > 0 && below >= 100 && above >= 100);
    }
}

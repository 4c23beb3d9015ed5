//! Resolves an instruction's region into concrete anchors or a plane.
//!
//! Validation and execution share this code so a sampled region is
//! re-simulated identically from the instruction seed.

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, Vector};
use crate::pipeline::SdnProfile;
use crate::rng::{self, Stream};
use crate::synth::geodesic::select_anchors;
use crate::synth::planar::{plane_rng, sample_plane_through, signed_distances, Plane};
use crate::synth::sample_local_anchors;

use super::schema::{Params, PlaneSpec, Region, SynthesisInstruction, DEFAULT_FREEFORM_EXTENT, DEFAULT_LINE_EXTENT};

#[derive(Debug, Clone, PartialEq)]
pub enum Grounding {
    Anchors(Vec<usize>),
    Plane(Plane),
}

/// Indices a sampling directive may draw from; `None` means the whole cloud.
pub fn region_candidates(region: &Region, cloud: &PointCloud) -> Option<Vec<usize>> {
    match region {
        Region::Anchors(a) => Some(a.clone()),
        Region::Sample { bbox: Some(b), .. } => Some(
            cloud
                .points()
                .iter()
                .enumerate()
                .filter(|(_, p)| b.contains(p))
                .map(|(i, _)| i)
                .collect(),
        ),
        Region::Sample { bbox: None, .. } => None,
    }
}

pub fn plane_from_spec(spec: &PlaneSpec) -> Result<Plane> {
    Plane::new(Vector::from(spec.normal), spec.point.into())
}

pub fn ground(instr: &SynthesisInstruction, cloud: &PointCloud, profile: &SdnProfile) -> Result<Grounding> {
    let rc = profile.radius;
    let candidates = region_candidates(&instr.region, cloud);
    if candidates.as_ref().is_some_and(|c| c.is_empty()) {
        return Err(Error::Instruction("region contains no points".into()));
    }
    let extent = match &instr.region {
        Region::Sample { extent, .. } => *extent,
        Region::Anchors(_) => None,
    };
    match &instr.params {
        Params::Line(l) => match &instr.region {
            Region::Anchors(a) => Ok(Grounding::Anchors(a.clone())),
            Region::Sample { .. } if l.m == 1 => {
                select_anchors(cloud, 1, instr.seed, candidates.as_deref()).map(Grounding::Anchors)
            }
            Region::Sample { .. } => {
                let mut r = rng::stream(instr.seed, Stream::Anchors);
                let e = extent.unwrap_or(DEFAULT_LINE_EXTENT) * rc;
                sample_local_anchors(cloud, l.m, Some(e), candidates.as_deref(), false, &mut r).map(Grounding::Anchors)
            }
        },
        Params::Bend(b) => {
            let g = plane_for(b.plane.as_ref(), b.delta * rc, candidates.as_deref(), cloud, instr.seed)?;
            match (g, b.plane) {
                (Grounding::Plane(p), None) => Ok(Grounding::Plane(smaller_side_positive(cloud, p))),
                (g, _) => Ok(g),
            }
        }
        Params::Crack(c) => plane_for(c.plane.as_ref(), c.tau * rc, candidates.as_deref(), cloud, instr.seed),
        Params::Freeform(f) => match &instr.region {
            Region::Anchors(a) => Ok(Grounding::Anchors(a.clone())),
            Region::Sample { .. } => {
                let mut r = rng::stream(instr.seed, Stream::Anchors);
                let e = extent.unwrap_or(DEFAULT_FREEFORM_EXTENT) * rc;
                sample_local_anchors(cloud, f.m, Some(e), candidates.as_deref(), true, &mut r).map(Grounding::Anchors)
            }
        },
    }
}

/// Orients a sampled bend plane so the rotating (positive) side is the
/// smaller part of the object, like a bent flange rather than a bent body.
fn smaller_side_positive(cloud: &PointCloud, plane: Plane) -> Plane {
    let signed = signed_distances(cloud, &plane);
    let above = signed.iter().filter(|&&s| s > 0.0).count();
    if 2 * above > signed.len() {
        Plane {
            normal: -plane.normal,
            point: plane.point,
        }
    } else {
        plane
    }
}

fn plane_for(
    spec: Option<&PlaneSpec>,
    thickness: f64,
    centers: Option<&[usize]>,
    cloud: &PointCloud,
    seed: u64,
) -> Result<Grounding> {
    match spec {
        Some(p) => plane_from_spec(p).map(Grounding::Plane),
        None => {
            let mut r = plane_rng(seed);
            sample_plane_through(cloud, thickness, centers, &mut r).map(Grounding::Plane)
        }
    }
}

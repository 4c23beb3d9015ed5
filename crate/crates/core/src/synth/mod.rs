//! Primitive-guided defect synthesis.
//!
//! Every operator returns a [`Synthesis`]: the deformed cloud, its
//! point-wise mask, the original indices of any removed points, and a
//! serializable [`SynthesisDetails`] record for provenance.

pub mod freeform;
pub mod geodesic;
pub mod planar;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::hull::check_non_coplanar;
use crate::geometry::kdtree::{dist_sq, KdTree};
use crate::geometry::{Point, PointCloud};
use crate::mask::AnomalyMask;
use crate::rng::{self, SeededRng};

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub cloud: PointCloud,
    pub mask: AnomalyMask,
    /// Original indices of points deleted by the operator, ascending.
    pub removed: Vec<usize>,
    pub details: SynthesisDetails,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "operator", rename_all = "kebab-case")]
pub enum SynthesisDetails {
    Geodesic {
        anchors: Vec<usize>,
        support: Vec<usize>,
        region_size: usize,
        d_max: f64,
        direction: [f64; 3],
    },
    Bend {
        plane: planar::Plane,
        hinge_origin: [f64; 3],
        hinge_direction: [f64; 3],
        band_size: usize,
        ambiguous_axis: bool,
    },
    Crack {
        plane: planar::Plane,
        removed_count: usize,
    },
    Freeform {
        anchors: Vec<usize>,
        /// Hull-surface support before amplitude thresholding.
        support: Vec<usize>,
        kernels: Vec<freeform::GaussianKernel>,
        h_min: f64,
    },
}

/// Maximum number of center draws when sampling a local anchor set.
pub const ANCHOR_RETRIES: usize = 10;

/// Samples `count` distinct anchors within `extent` of a random center point.
///
/// The center is drawn from `candidates` (or the whole cloud). When
/// `require_volume` is set the anchor set must span a non-degenerate hull;
/// degenerate draws are retried up to [`ANCHOR_RETRIES`] times.
pub fn sample_local_anchors(
    cloud: &PointCloud,
    count: usize,
    extent: Option<f64>,
    candidates: Option<&[usize]>,
    require_volume: bool,
    rng: &mut SeededRng,
) -> Result<Vec<usize>> {
    let all: Vec<usize>;
    let pool: &[usize] = match candidates {
        Some(c) => c,
        None => {
            all = (0..cloud.len()).collect();
            &all
        }
    };
    if count == 0 || count > pool.len() {
        return Err(Error::contract(format!(
            "cannot draw {count} anchors from {} candidates",
            pool.len()
        )));
    }
    let points = cloud.points();
    let tree = KdTree::new(points);
    let mut last_err = None;
    for _ in 0..ANCHOR_RETRIES {
        let local: Vec<usize> = match extent {
            Some(e) => {
                let center = pool[rng::sample_indices(rng, pool.len(), 1)[0]];
                let near: Vec<usize> = tree.within(&points[center], e * e).iter().map(|n| n.index).collect();
                let near: Vec<usize> = match candidates {
                    Some(c) => near.into_iter().filter(|i| c.contains(i)).collect(),
                    None => near,
                };
                if near.len() >= count {
                    near
                } else {
                    // Sparse neighborhood: fall back to the center's nearest candidates.
                    let mut by_dist: Vec<(f64, usize)> =
                        pool.iter().map(|&i| (dist_sq(&points[center], &points[i]), i)).collect();
                    by_dist.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    by_dist.into_iter().take((2 * count).max(4)).map(|(_, i)| i).collect()
                }
            }
            None => pool.to_vec(),
        };
        let mut picked: Vec<usize> = rng::sample_indices(rng, local.len(), count)
            .into_iter()
            .map(|k| local[k])
            .collect();
        if require_volume {
            let pts: Vec<Point> = picked.iter().map(|&i| points[i]).collect();
            if let Err(e) = check_non_coplanar(&pts) {
                last_err = Some(e);
                continue;
            }
        }
        if extent.is_some() && !require_volume {
            // Order the skeleton along its dominant direction so paths do not double back.
            let pts: Vec<Point> = picked.iter().map(|&i| points[i]).collect();
            if pts.len() >= 3 {
                if let Ok(frame) = crate::geometry::pca_frame(&pts) {
                    picked.sort_by(|&a, &b| {
                        let ta = (points[a] - frame.mean).dot(&frame.axes[0]);
                        let tb = (points[b] - frame.mean).dot(&frame.axes[0]);
                        ta.total_cmp(&tb).then(a.cmp(&b))
                    });
                }
            }
        }
        return Ok(picked);
    }
    Err(last_err.unwrap_or_else(|| Error::Degenerate("anchor sampling failed".into())))
}

//! Skeleton defects: bumps, dents, scratches, grooves and holes grown from
//! geodesic paths between anchors.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::kdtree::KdTree;
use crate::geometry::{build_knn_graph, KnnGraph, Point, PointCloud, Vector};
use crate::mask::{AnomalyMask, DefectType};
use crate::rng::{self, Stream};
use crate::synth::{Synthesis, SynthesisDetails};

pub const DEFAULT_GRAPH_K: usize = 8;
pub const DEFAULT_HOLE_THRESHOLD: f64 = 0.8;

/// Displacement polarity along the averaged normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub enum Polarity {
    Outward,
    Inward,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Outward => 1.0,
            Polarity::Inward => -1.0,
        }
    }
}

impl TryFrom<i64> for Polarity {
    type Error = String;

    fn try_from(v: i64) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Polarity::Outward),
            -1 => Ok(Polarity::Inward),
            other => Err(format!("direction must be +1 or -1, got {other}")),
        }
    }
}

impl From<Polarity> for i64 {
    fn from(p: Polarity) -> i64 {
        match p {
            Polarity::Outward => 1,
            Polarity::Inward => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSupport {
    /// Ordered union of path vertices.
    pub indices: Vec<usize>,
    pub anchors: Vec<usize>,
    /// Summed edge weight of each consecutive-anchor path.
    pub segment_costs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionField {
    /// Masked point indices, ascending.
    pub indices: Vec<usize>,
    /// Distance to the support for each masked point, aligned with `indices`.
    pub distances: Vec<f64>,
    pub d_max: f64,
}

/// `m` distinct anchors drawn uniformly from `hint` (or the whole cloud).
pub fn select_anchors(cloud: &PointCloud, m: usize, seed: u64, hint: Option<&[usize]>) -> Result<Vec<usize>> {
    let candidates: Vec<usize> = match hint {
        Some(h) => {
            if let Some(&bad) = h.iter().find(|&&i| i >= cloud.len()) {
                return Err(Error::contract(format!("hint index {bad} out of range for {} points", cloud.len())));
            }
            let mut seen = HashSet::new();
            h.iter().copied().filter(|i| seen.insert(*i)).collect()
        }
        None => (0..cloud.len()).collect(),
    };
    if m == 0 || m > candidates.len() {
        return Err(Error::contract(format!(
            "cannot select {m} anchors from {} candidates",
            candidates.len()
        )));
    }
    let mut rng = rng::stream(seed, Stream::Anchors);
    Ok(rng::sample_indices(&mut rng, candidates.len(), m)
        .into_iter()
        .map(|k| candidates[k])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct State {
    cost: f64,
    node: usize,
}

impl Eq for State {}

impl Ord for State {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cost.total_cmp(&other.cost).then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for State {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra shortest path; returns the summed weight and the vertex sequence.
pub fn shortest_path(graph: &KnnGraph, from: usize, to: usize) -> Option<(f64, Vec<usize>)> {
    let n = graph.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[from] = 0.0;
    heap.push(Reverse(State { cost: 0.0, node: from }));
    while let Some(Reverse(State { cost, node })) = heap.pop() {
        if node == to {
            break;
        }
        if cost > dist[node] {
            continue;
        }
        for &(next, w) in graph.neighbors(node) {
            let c = cost + w;
            if c < dist[next] {
                dist[next] = c;
                prev[next] = node;
                heap.push(Reverse(State { cost: c, node: next }));
            }
        }
    }
    if !dist[to].is_finite() {
        return None;
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = prev[cur];
        path.push(cur);
    }
    path.reverse();
    Some((dist[to], path))
}

pub fn geodesic_support(cloud: &PointCloud, graph: &KnnGraph, anchors: &[usize]) -> Result<GeodesicSupport> {
    if anchors.is_empty() {
        return Err(Error::contract("at least one anchor is required"));
    }
    if graph.len() != cloud.len() {
        return Err(Error::contract("graph does not match cloud size"));
    }
    if let Some(&bad) = anchors.iter().find(|&&a| a >= cloud.len()) {
        return Err(Error::contract(format!("anchor {bad} out of range for {} points", cloud.len())));
    }
    let mut indices = Vec::new();
    let mut seen = HashSet::new();
    let mut push = |i: usize, indices: &mut Vec<usize>| {
        if seen.insert(i) {
            indices.push(i);
        }
    };
    let mut segment_costs = Vec::with_capacity(anchors.len().saturating_sub(1));
    push(anchors[0], &mut indices);
    for pair in anchors.windows(2) {
        let (cost, path) =
            shortest_path(graph, pair[0], pair[1]).ok_or(Error::Unreachable { from: pair[0], to: pair[1] })?;
        segment_costs.push(cost);
        for v in path {
            push(v, &mut indices);
        }
    }
    Ok(GeodesicSupport {
        indices,
        anchors: anchors.to_vec(),
        segment_costs,
    })
}

/// Grows the support by Euclidean radius `radius` (strict inequality).
pub fn expand_region(cloud: &PointCloud, support: &GeodesicSupport, radius: f64) -> Result<RegionField> {
    if !(radius > 0.0) {
        return Err(Error::contract(format!("expansion radius must be positive, got {radius}")));
    }
    let skeleton: Vec<Point> = support.indices.iter().map(|&i| cloud.points()[i]).collect();
    let tree = KdTree::new(&skeleton);
    let mut indices = Vec::new();
    let mut distances = Vec::new();
    for (j, p) in cloud.points().iter().enumerate() {
        let nearest = tree.nearest_one(p).expect("nonempty skeleton");
        let d = nearest.distance();
        if d < radius {
            indices.push(j);
            distances.push(d);
        }
    }
    let d_max = distances.iter().copied().fold(0.0, f64::max);
    Ok(RegionField {
        indices,
        distances,
        d_max,
    })
}

/// Linear decay weight `1 - d/d_max`, defined as 1 when `d_max` is zero.
pub fn decay_weight(d: f64, d_max: f64) -> f64 {
    if d_max == 0.0 {
        1.0
    } else {
        1.0 - d / d_max
    }
}

/// Normalized mean normal over the region.
pub fn region_direction(cloud: &PointCloud, field: &RegionField) -> Result<Vector> {
    let normals = cloud.require_normals()?;
    if field.indices.is_empty() {
        return Err(Error::contract("deformation region is empty"));
    }
    let sum = field.indices.iter().fold(Vector::zeros(), |acc, &i| acc + normals[i]);
    let mean = sum / field.indices.len() as f64;
    let norm = mean.norm();
    if norm < 1e-9 {
        return Err(Error::DegenerateNormal(norm));
    }
    Ok(mean / norm)
}

pub fn deform_1d(
    cloud: &PointCloud,
    field: &RegionField,
    polarity: Polarity,
    magnitude: f64,
    defect: DefectType,
) -> Result<Synthesis> {
    if !(magnitude > 0.0) {
        return Err(Error::contract(format!("peak displacement must be positive, got {magnitude}")));
    }
    if let Some(&bad) = field.indices.iter().find(|&&i| i >= cloud.len()) {
        return Err(Error::contract(format!("region index {bad} out of range")));
    }
    let direction = region_direction(cloud, field)?;
    let mut out = cloud.clone();
    let points = out.points_mut();
    for (&j, &d) in field.indices.iter().zip(&field.distances) {
        let w = decay_weight(d, field.d_max);
        points[j] += direction * (polarity.sign() * w * magnitude);
    }
    let mask = AnomalyMask::from_indices(cloud.len(), &field.indices, Some(defect));
    Ok(Synthesis {
        cloud: out,
        mask,
        removed: Vec::new(),
        details: SynthesisDetails::Geodesic {
            anchors: Vec::new(),
            support: Vec::new(),
            region_size: field.indices.len(),
            d_max: field.d_max,
            direction: direction.into(),
        },
    })
}

/// Parameters of a skeleton defect in model units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineParams {
    pub graph_k: usize,
    pub radius: f64,
    pub magnitude: f64,
    pub polarity: Polarity,
    /// Holes only: masked points displaced by more than this fraction of the
    /// peak magnitude are deleted.
    pub hole_threshold: Option<f64>,
}

/// Full skeleton pipeline from explicit anchors.
pub fn synthesize_line(cloud: &PointCloud, anchors: &[usize], params: LineParams, defect: DefectType) -> Result<Synthesis> {
    let support = if anchors.len() == 1 {
        if anchors[0] >= cloud.len() {
            return Err(Error::contract(format!("anchor {} out of range", anchors[0])));
        }
        GeodesicSupport {
            indices: anchors.to_vec(),
            anchors: anchors.to_vec(),
            segment_costs: Vec::new(),
        }
    } else {
        let graph = build_knn_graph(cloud, params.graph_k.min(cloud.len() - 1))?;
        geodesic_support(cloud, &graph, anchors)?
    };
    let field = expand_region(cloud, &support, params.radius)?;
    let mut out = deform_1d(cloud, &field, params.polarity, params.magnitude, defect)?;
    if let SynthesisDetails::Geodesic { anchors: a, support: s, .. } = &mut out.details {
        *a = support.anchors.clone();
        *s = support.indices.clone();
    }
    match params.hole_threshold {
        Some(t) => punch_hole(out, &field, params.magnitude, t),
        None => Ok(out),
    }
}

/// Deletes region points whose displacement exceeds `threshold · magnitude`;
/// the remaining region points form the mask.
fn punch_hole(deformed: Synthesis, field: &RegionField, magnitude: f64, threshold: f64) -> Result<Synthesis> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::contract(format!("hole threshold must lie in [0, 1], got {threshold}")));
    }
    let n = deformed.cloud.len();
    let mut keep = vec![true; n];
    let mut removed = Vec::new();
    for (&j, &d) in field.indices.iter().zip(&field.distances) {
        if decay_weight(d, field.d_max) * magnitude > threshold * magnitude {
            keep[j] = false;
            removed.push(j);
        }
    }
    if removed.len() == n {
        return Err(Error::OverRemoval(n));
    }
    removed.sort_unstable();
    Ok(Synthesis {
        cloud: deformed.cloud.retain(&keep)?,
        mask: deformed.mask.retain_rows(&keep),
        removed,
        details: deformed.details,
    })
}

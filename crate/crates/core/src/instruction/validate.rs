//! Range and geometry checks for instructions against a concrete cloud.

use serde::{Deserialize, Serialize};

use crate::geometry::hull::check_non_coplanar;
use crate::geometry::{build_knn_graph, Point, PointCloud};
use crate::mask::DefectType;
use crate::pipeline::SdnProfile;
use crate::synth::freeform::hull_mask;
use crate::synth::geodesic::{shortest_path, Polarity};
use crate::synth::planar::{signed_distances, side_counts, MIN_SIDE_FRACTION};

use super::ground::{ground, region_candidates, Grounding};
use super::schema::{KernelChoice, Operator, Params, Region, SynthesisInstruction, SCHEMA_VERSION};

/// Admissible lengths as fractions of the category radius.
pub const LENGTH_RANGE: (f64, f64) = (1e-4, 0.5);
pub const MAX_ANGLE: f64 = std::f64::consts::FRAC_PI_2;
pub const MAX_KERNELS: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("{} [{}]: {}", v.field, v.rule, v.message))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

struct Report(Vec<Violation>);

impl Report {
    fn push(&mut self, field: &str, rule: &str, message: impl Into<String>) {
        self.0.push(Violation {
            field: field.into(),
            rule: rule.into(),
            message: message.into(),
        });
    }

    /// Returns whether the value was in range.
    fn length(&mut self, field: &str, value: f64) -> bool {
        let (lo, hi) = LENGTH_RANGE;
        if value < lo {
            self.push(field, "range", format!("{value} r_c is below the minimum {lo} r_c"));
            false
        } else if value > hi {
            self.push(field, "range", format!("{value} r_c exceeds {hi} r_c (excessive deformation)"));
            false
        } else {
            true
        }
    }
}

/// Checks every rule and lists all violations; never mutates the instruction.
pub fn validate(instr: &SynthesisInstruction, cloud: &PointCloud, profile: &SdnProfile) -> ValidationReport {
    let mut rep = Report(Vec::new());
    let n = cloud.len();
    if instr.schema_version != SCHEMA_VERSION {
        rep.push("schema_version", "version", format!("unsupported version {}", instr.schema_version));
    }
    if Operator::for_defect(instr.defect) != instr.operator || instr.params.operator() != instr.operator {
        rep.push("operator", "consistency", format!("{} does not produce {}", instr.operator, instr.defect));
    }
    let mut groundable = true;
    if let Err(e) = profile.check() {
        rep.push("profile", "profile", e.to_string());
        groundable = false;
    }
    groundable &= check_region(&mut rep, &instr.region, cloud);
    groundable &= check_params(&mut rep, instr, n);

    // Geometry checks need in-range lengths and a usable region.
    if groundable {
        check_geometry(&mut rep, instr, cloud, profile);
    }
    ValidationReport {
        valid: rep.0.is_empty(),
        violations: rep.0,
    }
}

fn check_region(rep: &mut Report, region: &Region, cloud: &PointCloud) -> bool {
    let n = cloud.len();
    let mut ok = true;
    match region {
        Region::Anchors(a) => {
            for (k, &i) in a.iter().enumerate() {
                if i >= n {
                    rep.push(&format!("region.anchors[{k}]"), "index_range", format!("index {i} outside 0..{n}"));
                    ok = false;
                }
            }
            let mut sorted = a.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != a.len() {
                rep.push("region.anchors", "distinct", "anchor indices repeat");
                ok = false;
            }
        }
        Region::Sample { bbox, extent } => {
            if let Some(b) = bbox {
                if (0..3).any(|k| b.min[k] > b.max[k]) {
                    rep.push("region.sample.bbox", "ordered", "min exceeds max on some axis");
                    ok = false;
                } else if region_candidates(region, cloud).is_some_and(|c| c.is_empty()) {
                    rep.push("region.sample.bbox", "nonempty", "bounding box contains no points");
                    ok = false;
                }
            }
            if let Some(e) = extent {
                if !(*e > 0.0 && *e <= 2.0) {
                    rep.push("region.sample.extent", "range", format!("extent {e} r_c must lie in (0, 2]"));
                    ok = false;
                }
            }
        }
    }
    ok
}

fn check_params(rep: &mut Report, instr: &SynthesisInstruction, n: usize) -> bool {
    let anchors = match &instr.region {
        Region::Anchors(a) => Some(a.len()),
        _ => None,
    };
    let candidates = n;
    let mut ok = true;
    match &instr.params {
        Params::Line(l) => {
            ok &= rep.length("params.r", l.r);
            ok &= rep.length("params.d", l.d);
            match instr.defect {
                DefectType::Bump | DefectType::Dent | DefectType::Hole if l.m != 1 => {
                    rep.push("params.m", "type", format!("{} uses a single anchor, got m = {}", instr.defect, l.m));
                    ok = false;
                }
                DefectType::Scratch | DefectType::Groove if l.m < 2 => {
                    rep.push("params.m", "type", format!("{} needs m >= 2, got {}", instr.defect, l.m));
                    ok = false;
                }
                _ => {}
            }
            if l.m == 0 || l.m > candidates {
                rep.push("params.m", "range", format!("m = {} outside 1..={candidates}", l.m));
                ok = false;
            }
            if anchors.is_some_and(|a| a != l.m) {
                rep.push("params.m", "anchors", "m differs from the number of region anchors");
                ok = false;
            }
            let expected = match instr.defect {
                DefectType::Bump | DefectType::Groove => Polarity::Outward,
                _ => Polarity::Inward,
            };
            if l.dir != expected {
                rep.push(
                    "params.dir",
                    "type",
                    format!("{} displaces with dir {}", instr.defect, expected.sign() as i32),
                );
            }
            if l.k_graph == 0 || l.k_graph >= n {
                rep.push("params.k_graph", "range", format!("k_graph = {} outside 1..{n}", l.k_graph));
                ok = false;
            }
            if let Some(t) = l.hole_threshold {
                if !(0.0..=1.0).contains(&t) {
                    rep.push("params.hole_threshold", "range", format!("{t} outside [0, 1]"));
                }
            }
        }
        Params::Bend(b) => {
            ok &= rep.length("params.delta", b.delta);
            if b.theta.abs() > MAX_ANGLE {
                rep.push("params.theta", "range", format!("|θ| = {} exceeds π/2", b.theta.abs()));
            }
            ok &= check_plane(rep, b.plane.as_ref());
        }
        Params::Crack(c) => {
            ok &= rep.length("params.tau", c.tau);
            ok &= rep.length("params.rim", c.rim);
            if !(0.0..=LENGTH_RANGE.1).contains(&c.sigma) {
                rep.push("params.sigma", "range", format!("σ = {} r_c outside [0, 0.5]", c.sigma));
            }
            ok &= check_plane(rep, c.plane.as_ref());
        }
        Params::Freeform(f) => {
            ok &= rep.length("params.epsilon", f.epsilon);
            if f.m < 4 || f.m > n {
                rep.push("params.m", "range", format!("hull anchors m = {} outside 4..={n}", f.m));
                ok = false;
            }
            if anchors.is_some_and(|a| a != f.m) {
                rep.push("params.m", "anchors", "m differs from the number of region anchors");
                ok = false;
            }
            if f.k_smooth == 0 {
                rep.push("params.k_smooth", "range", "k_smooth must be positive");
            }
            if !(0.0..=1.0).contains(&f.lambda) {
                rep.push("params.lambda", "range", format!("λ = {} outside [0, 1]", f.lambda));
            }
            if !(0.0..=LENGTH_RANGE.1).contains(&f.h_min) {
                rep.push("params.h_min", "range", format!("h_min = {} r_c outside [0, 0.5]", f.h_min));
            }
            match &f.kernels {
                KernelChoice::Explicit(ks) => {
                    if ks.is_empty() || ks.len() > MAX_KERNELS {
                        rep.push("params.kernels", "count", format!("{} kernels, need 1..={MAX_KERNELS}", ks.len()));
                    }
                    for (k, kern) in ks.iter().enumerate() {
                        rep.length(&format!("params.kernels[{k}].amplitude"), kern.amplitude.abs());
                        if !(kern.sigma > 0.0) {
                            rep.push(&format!("params.kernels[{k}].sigma"), "range", "spread must be positive");
                        }
                    }
                }
                KernelChoice::Sampled {
                    count,
                    amplitude,
                    sigma_fraction,
                } => {
                    if *count == 0 || *count > MAX_KERNELS {
                        rep.push("params.kernel_count", "range", format!("{count} outside 1..={MAX_KERNELS}"));
                    }
                    rep.length("params.amplitude_range[0]", amplitude[0]);
                    rep.length("params.amplitude_range[1]", amplitude[1]);
                    if amplitude[0] > amplitude[1] {
                        rep.push("params.amplitude_range", "ordered", "lower bound exceeds upper bound");
                    }
                    if !(sigma_fraction[0] > 0.0 && sigma_fraction[0] <= sigma_fraction[1] && sigma_fraction[1] <= 1.0) {
                        rep.push("params.sigma_fraction", "range", "expected 0 < lo <= hi <= 1");
                    }
                }
            }
        }
    }
    ok
}

fn check_plane(rep: &mut Report, plane: Option<&super::schema::PlaneSpec>) -> bool {
    match plane {
        Some(p) if nalgebra::Vector3::from(p.normal).norm() < 1e-12 => {
            rep.push("params.plane.normal", "nonzero", "plane normal has zero length");
            false
        }
        _ => true,
    }
}

/// Grounds the region on the cloud and checks topological feasibility.
fn check_geometry(rep: &mut Report, instr: &SynthesisInstruction, cloud: &PointCloud, profile: &SdnProfile) {
    let rc = profile.radius;
    let grounding = match ground(instr, cloud, profile) {
        Ok(g) => g,
        Err(e) => {
            rep.push("region", "grounding", e.to_string());
            return;
        }
    };
    match (&instr.params, grounding) {
        (Params::Line(l), Grounding::Anchors(a)) if a.len() >= 2 => {
            let graph = match build_knn_graph(cloud, l.k_graph) {
                Ok(g) => g,
                Err(e) => {
                    rep.push("params.k_graph", "graph", e.to_string());
                    return;
                }
            };
            for w in a.windows(2) {
                if shortest_path(&graph, w[0], w[1]).is_none() {
                    rep.push(
                        "region.anchors",
                        "connected",
                        format!("anchors {} and {} lie in different graph components", w[0], w[1]),
                    );
                }
            }
        }
        (Params::Bend(b), Grounding::Plane(p)) => check_sides(rep, "params.delta", cloud, &p, b.delta * rc),
        (Params::Crack(c), Grounding::Plane(p)) => check_sides(rep, "params.tau", cloud, &p, c.tau * rc),
        (Params::Freeform(f), Grounding::Anchors(a)) => {
            let pts: Vec<Point> = a.iter().map(|&i| cloud.points()[i]).collect();
            if let Err(e) = check_non_coplanar(&pts) {
                rep.push("region.anchors", "non_coplanar", e.to_string());
                return;
            }
            match hull_mask(cloud, &a, f.epsilon * rc) {
                Ok(s) if s.members.len() >= 3 => {}
                Ok(s) => rep.push(
                    "params.epsilon",
                    "support",
                    format!("hull support has {} points, need at least 3", s.members.len()),
                ),
                Err(e) => rep.push("params.epsilon", "empty_mask", e.to_string()),
            }
        }
        _ => {}
    }
}

fn check_sides(rep: &mut Report, field: &str, cloud: &PointCloud, plane: &crate::synth::planar::Plane, thickness: f64) {
    let signed = signed_distances(cloud, plane);
    let (below, band, above) = side_counts(&signed, thickness);
    if band == 0 {
        rep.push("params.plane", "empty_band", "the plane band contains no points: the plane misses the object");
        return;
    }
    let min_side = (MIN_SIDE_FRACTION * cloud.len() as f64).ceil() as usize;
    if below < min_side || above < min_side {
        rep.push(
            field,
            "sides",
            format!("sides hold {below} and {above} points; each needs at least {min_side}"),
        );
    }
}

//! Incremental 3D convex hull and exact point-to-surface distance.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::geometry::cloud::{centroid, Point, Vector};
use crate::geometry::pca::{covariance, sorted_eigen};

/// Relative eigenvalue floor below which an anchor set counts as coplanar.
pub const COPLANAR_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct HullMesh {
    pub vertices: Vec<Point>,
    /// Outward-oriented (counter-clockwise seen from outside) triangles.
    pub faces: Vec<[usize; 3]>,
    /// Index of each vertex in the input anchor list.
    pub source_indices: Vec<usize>,
}

struct Face {
    v: [usize; 3],
    normal: Vector,
    offset: f64,
    alive: bool,
}

impl Face {
    fn new(points: &[Point], v: [usize; 3]) -> Self {
        let n = (points[v[1]] - points[v[0]]).cross(&(points[v[2]] - points[v[0]]));
        let normal = n / n.norm();
        Self {
            v,
            normal,
            offset: normal.dot(&points[v[0]].coords),
            alive: true,
        }
    }

    fn signed_distance(&self, p: &Point) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

/// Rejects sets of fewer than four points and (near-)coplanar or collinear sets.
pub fn check_non_coplanar(points: &[Point]) -> Result<()> {
    if points.len() < 4 {
        return Err(Error::Degenerate(format!(
            "a 3D hull needs at least 4 anchors, got {}",
            points.len()
        )));
    }
    let mean = centroid(points);
    let (values, _) = sorted_eigen(covariance(points, &mean));
    if !(values[0] > 0.0) || !(values[2] > COPLANAR_RATIO * values[0]) {
        return Err(Error::Degenerate(format!(
            "anchors are coplanar or collinear (eigenvalues {:.3e}, {:.3e}, {:.3e})",
            values[0], values[1], values[2]
        )));
    }
    Ok(())
}

pub fn convex_hull(anchors: &[Point]) -> Result<HullMesh> {
    check_non_coplanar(anchors)?;
    let scale = anchors
        .iter()
        .flat_map(|p| [p.x.abs(), p.y.abs(), p.z.abs()])
        .fold(0.0, f64::max)
        .max(1.0);
    let eps = 1e-12 * scale;

    let i0 = (0..anchors.len())
        .min_by(|&a, &b| {
            anchors[a]
                .x
                .total_cmp(&anchors[b].x)
                .then(anchors[a].y.total_cmp(&anchors[b].y))
                .then(anchors[a].z.total_cmp(&anchors[b].z))
        })
        .expect("nonempty");
    let i1 = argmax(anchors.len(), |i| (anchors[i] - anchors[i0]).norm_squared());
    let dir = (anchors[i1] - anchors[i0]).normalize();
    let i2 = argmax(anchors.len(), |i| {
        let d = anchors[i] - anchors[i0];
        (d - dir * d.dot(&dir)).norm_squared()
    });
    let plane_n = (anchors[i1] - anchors[i0]).cross(&(anchors[i2] - anchors[i0]));
    if plane_n.norm() <= eps * eps {
        return Err(Error::Degenerate("anchors are collinear".into()));
    }
    let plane_n = plane_n.normalize();
    let i3 = argmax(anchors.len(), |i| plane_n.dot(&(anchors[i] - anchors[i0])).abs());
    if plane_n.dot(&(anchors[i3] - anchors[i0])).abs() <= eps {
        return Err(Error::Degenerate("anchors are coplanar".into()));
    }

    let mut faces: Vec<Face> = Vec::new();
    let tet = [i0, i1, i2, i3];
    for (a, b, c, opposite) in [(0, 1, 2, 3), (0, 3, 1, 2), (0, 2, 3, 1), (1, 3, 2, 0)] {
        let mut f = Face::new(anchors, [tet[a], tet[b], tet[c]]);
        if f.signed_distance(&anchors[tet[opposite]]) > 0.0 {
            f = Face::new(anchors, [tet[a], tet[c], tet[b]]);
        }
        faces.push(f);
    }

    for (pi, p) in anchors.iter().enumerate() {
        if tet.contains(&pi) {
            continue;
        }
        let visible: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f.alive && f.signed_distance(p) > eps)
            .map(|(i, _)| i)
            .collect();
        if visible.is_empty() {
            continue;
        }
        let mut edges: HashSet<(usize, usize)> = HashSet::new();
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                edges.insert((v[k], v[(k + 1) % 3]));
            }
        }
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        for &fi in &visible {
            let v = faces[fi].v;
            for k in 0..3 {
                let e = (v[k], v[(k + 1) % 3]);
                if !edges.contains(&(e.1, e.0)) {
                    horizon.push(e);
                }
            }
        }
        for &fi in &visible {
            faces[fi].alive = false;
        }
        for (a, b) in horizon {
            faces.push(Face::new(anchors, [a, b, pi]));
        }
    }

    let live: Vec<[usize; 3]> = faces.iter().filter(|f| f.alive).map(|f| f.v).collect();
    let mut source_indices: Vec<usize> = live.iter().flatten().copied().collect();
    source_indices.sort_unstable();
    source_indices.dedup();
    let remap = |i: usize| source_indices.binary_search(&i).expect("vertex present");
    let faces = live.iter().map(|f| [remap(f[0]), remap(f[1]), remap(f[2])]).collect();
    let vertices = source_indices.iter().map(|&i| anchors[i]).collect();
    let hull = HullMesh {
        vertices,
        faces,
        source_indices,
    };
    if !hull.is_watertight() {
        return Err(Error::Degenerate("hull construction lost watertightness on near-degenerate anchors".into()));
    }
    Ok(hull)
}

fn argmax(n: usize, f: impl Fn(usize) -> f64) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for i in 0..n {
        let v = f(i);
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

impl HullMesh {
    pub fn triangle(&self, f: usize) -> [Point; 3] {
        let [a, b, c] = self.faces[f];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Every directed edge has exactly one reversed partner.
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashSet<(usize, usize)> = HashSet::new();
        for f in &self.faces {
            for k in 0..3 {
                if !directed.insert((f[k], f[(k + 1) % 3])) {
                    return false;
                }
            }
        }
        directed.iter().all(|&(a, b)| directed.contains(&(b, a)))
    }

    pub fn volume(&self) -> f64 {
        let o = centroid(&self.vertices);
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let (pa, pb, pc) = (self.vertices[a] - o, self.vertices[b] - o, self.vertices[c] - o);
                pa.dot(&pb.cross(&pc)) / 6.0
            })
            .sum()
    }

    /// Inside or on the hull, with tolerance `tol` along each face normal.
    pub fn contains(&self, p: &Point, tol: f64) -> bool {
        (0..self.faces.len()).all(|f| {
            let [a, b, c] = self.triangle(f);
            let n = (b - a).cross(&(c - a)).normalize();
            n.dot(&(p - a)) <= tol
        })
    }
}

/// Closest point to `p` on triangle `abc` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> Point {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn point_triangle_distance(p: &Point, tri: &[Point; 3]) -> f64 {
    (p - closest_point_on_triangle(p, &tri[0], &tri[1], &tri[2])).norm()
}

/// Minimum distance from `p` to the hull boundary over all faces.
pub fn distance_to_hull_surface(p: &Point, hull: &HullMesh) -> f64 {
    (0..hull.faces.len())
        .map(|f| point_triangle_distance(p, &hull.triangle(f)))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn regular_tetrahedron() -> Vec<Point> {
        // Edge length 1.
        let s = 1.0 / (2.0 * 2f64.sqrt());
        vec![
            Point::new(s, s, s),
            Point::new(s, -s, -s),
            Point::new(-s, s, -s),
            Point::new(-s, -s, s),
        ]
    }

    fn cube() -> Vec<Point> {
        (0..8)
            .map(|i| Point::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
            .collect()
    }

    #[test]
    fn tetrahedron_has_four_faces() {
        let h = convex_hull(&regular_tetrahedron()).unwrap();
        assert_eq!(h.faces.len(), 4);
        assert!(h.is_watertight());
        assert!(h.volume() > 0.0);
    }

    #[test]
    fn cube_volume_and_faces() {
        let h = convex_hull(&cube()).unwrap();
        assert_eq!(h.faces.len(), 12);
        assert!((h.volume() - 1.0).abs() < 1e-9);
        assert!(h.is_watertight());
    }

    #[test]
    fn coplanar_rejected() {
        let pts = vec![
            Point::new(0.0, 0.0, 0.0),
            Point::new(1.0, 0.0, 0.0),
            Point::new(0.0, 1.0, 0.0),
            Point::new(1.0, 1.0, 0.0),
        ];
        assert!(matches!(convex_hull(&pts), Err(Error::Degenerate(_))));
        assert!(matches!(convex_hull(&pts[..3]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn surface_distance_cases() {
        let tet = regular_tetrahedron();
        let h = convex_hull(&tet).unwrap();
        for v in &tet {
            assert!(distance_to_hull_surface(v, &h) < 1e-15);
        }
        for f in 0..h.faces.len() {
            let [a, b, c] = h.triangle(f);
            let fc = Point::from((a.coords + b.coords + c.coords) / 3.0);
            assert!(distance_to_hull_surface(&fc, &h) < 1e-12);
        }
        let inradius = 1.0 / (2.0 * 6f64.sqrt());
        let d = distance_to_hull_surface(&centroid(&tet), &h);
        assert!((d - inradius).abs() < 1e-12, "{d} vs {inradius}");
    }

    #[test]
    fn random_hulls_contain_anchors() {
        let mut r = rng::seeded(5);
        for _ in 0..50 {
            let n = r.random_range(4..30);
            let pts: Vec<Point> = (0..n)
                .map(|_| Point::new(r.random::<f64>(), r.random::<f64>(), r.random::<f64>()))
                .collect();
            let h = convex_hull(&pts).unwrap();
            assert!(h.is_watertight());
            assert!(pts.iter().all(|p| h.contains(p, 1e-9)));
        }
    }
}

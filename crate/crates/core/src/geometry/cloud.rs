use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};

pub type Point = Point3<f64>;
pub type Vector = Vector3<f64>;

const UNIT_TOLERANCE: f64 = 1e-6;

/// Ordered points with optional per-point unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub id: String,
    points: Vec<Point>,
    normals: Option<Vec<Vector>>,
}

impl PointCloud {
    pub fn new(id: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::contract("point cloud must contain at least one point"));
        }
        Ok(Self {
            id: id.into(),
            points,
            normals: None,
        })
    }

    pub fn with_normals(id: impl Into<String>, points: Vec<Point>, normals: Vec<Vector>) -> Result<Self> {
        let mut cloud = Self::new(id, points)?;
        cloud.set_normals(normals)?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector]> {
        self.normals.as_deref()
    }

    pub fn has_normals(&self) -> bool {
        self.normals.is_some()
    }

    pub fn require_normals(&self) -> Result<&[Vector]> {
        self.normals()
            .ok_or_else(|| Error::contract(format!("cloud \"{}\" has no normals", self.id)))
    }

    pub fn set_normals(&mut self, normals: Vec<Vector>) -> Result<()> {
        if normals.len() != self.points.len() {
            return Err(Error::contract(format!(
                "normal count {} does not match point count {}",
                normals.len(),
                self.points.len()
            )));
        }
        if let Some((i, n)) = normals
            .iter()
            .enumerate()
            .find(|(_, n)| (n.norm() - 1.0).abs() > UNIT_TOLERANCE)
        {
            return Err(Error::contract(format!(
                "normal {i} has norm {} (expected unit length)",
                n.norm()
            )));
        }
        self.normals = Some(normals);
        Ok(())
    }

    pub fn clear_normals(&mut self) {
        self.normals = None;
    }

    /// Replaces positions in place, keeping normals.
    pub(crate) fn points_mut(&mut self) -> &mut [Point] {
        &mut self.points
    }

    pub(crate) fn normals_mut(&mut self) -> Option<&mut [Vector]> {
        self.normals.as_deref_mut()
    }

    /// New cloud containing only the rows whose `keep` flag is set, in order.
    pub fn retain(&self, keep: &[bool]) -> Result<Self> {
        let points: Vec<Point> = self
            .points
            .iter()
            .zip(keep)
            .filter_map(|(p, &k)| k.then_some(*p))
            .collect();
        let normals = self.normals.as_ref().map(|ns| {
            ns.iter()
                .zip(keep)
                .filter_map(|(n, &k)| k.then_some(*n))
                .collect::<Vec<_>>()
        });
        let mut out = Self::new(self.id.clone(), points)?;
        out.normals = normals;
        Ok(out)
    }

    pub fn centroid(&self) -> Point {
        centroid(&self.points)
    }

    /// Axis-aligned bounds as (min, max).
    pub fn bounds(&self) -> (Point, Point) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points[1..] {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    pub fn diameter_bound(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }
}

pub fn centroid(points: &[Point]) -> Point {
    let sum = points.iter().fold(Vector::zeros(), |acc, p| acc + p.coords);
    Point::from(sum / points.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_mismatched_normals() {
        assert!(PointCloud::new("e", vec![]).is_err());
        let pts = vec![Point::origin(), Point::new(1.0, 0.0, 0.0)];
        assert!(PointCloud::with_normals("a", pts.clone(), vec![Vector::z()]).is_err());
        assert!(PointCloud::with_normals("a", pts, vec![Vector::z(), Vector::new(0.0, 0.0, 2.0)]).is_err());
    }

    #[test]
    fn retain_keeps_order() {
        let pts: Vec<Point> = (0..4).map(|i| Point::new(i as f64, 0.0, 0.0)).collect();
        let c = PointCloud::new("r", pts).unwrap();
        let kept = c.retain(&[true, false, true, true]).unwrap();
        let xs: Vec<f64> = kept.points().iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![0.0, 2.0, 3.0]);
    }
}

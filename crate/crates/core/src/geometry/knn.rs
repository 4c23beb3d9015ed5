use crate::error::{Error, Result};
use crate::geometry::cloud::PointCloud;
use crate::geometry::kdtree::KdTree;

/// Symmetric k-nearest-neighbor graph with Euclidean edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    /// Per point, (neighbor, weight) sorted by neighbor index.
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl KnnGraph {
    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search_by_key(&j, |&(n, _)| n).is_ok()
    }

    /// Builds a graph from an explicit undirected edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b, w) in edges {
            if a != b {
                adjacency[a].push((b, w));
                adjacency[b].push((a, w));
            }
        }
        Self::normalize(adjacency)
    }

    fn normalize(mut adjacency: Vec<Vec<(usize, f64)>>) -> Self {
        for list in &mut adjacency {
            list.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
            list.dedup_by_key(|e| e.0);
        }
        Self { adjacency }
    }
}

/// Connects every point to its `k` nearest neighbors (ties by lower index), then symmetrizes by union.
pub fn build_knn_graph(cloud: &PointCloud, k: usize) -> Result<KnnGraph> {
    let n = cloud.len();
    if k == 0 || k >= n {
        return Err(Error::contract(format!("kNN graph needs 1 <= k < {n}, got k = {k}")));
    }
    let points = cloud.points();
    let tree = KdTree::new(points);
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::with_capacity(k * 2); n];
    for (i, p) in points.iter().enumerate() {
        for nb in tree.nearest(p, k, Some(i)) {
            let w = (points[i] - points[nb.index]).norm();
            adjacency[i].push((nb.index, w));
            adjacency[nb.index].push((i, w));
        }
    }
    Ok(KnnGraph::normalize(adjacency))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::cloud::Point;
    use proptest::prelude::*;

    fn brute_graph(points: &[Point], k: usize) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (crate::geometry::kdtree::dist_sq(&points[i], &points[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, j) in others.iter().take(k) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        adj
    }

    #[test]
    fn collinear_k1() {
        let cloud = PointCloud::new(
            "c",
            vec![Point::new(0.0, 0.0, 0.0), Point::new(1.0, 0.0, 0.0), Point::new(3.0, 0.0, 0.0)],
        )
        .unwrap();
        let g = build_knn_graph(&cloud, 1).unwrap();
        // 0 -> 1, 1 -> 0, 2 -> 1; union gives edges 0-1 and 1-2.
        assert_eq!(g.adjacency[0], vec![(1, 1.0)]);
        assert_eq!(g.adjacency[1], vec![(0, 1.0), (2, 2.0)]);
        assert_eq!(g.adjacency[2], vec![(1, 2.0)]);
    }

    #[test]
    fn k_out_of_range() {
        let cloud = PointCloud::new("c", vec![Point::origin(), Point::new(1.0, 0.0, 0.0)]).unwrap();
        assert!(build_knn_graph(&cloud, 0).is_err());
        assert!(build_knn_graph(&cloud, 2).is_err());
    }

    proptest! {
        #[test]
        fn matches_brute_force_and_is_symmetric(
            coords in proptest::collection::vec((0i32..8, 0i32..8, -1.0f64..1.0), 3..200),
            k in 1usize..10,
        ) {
            let points: Vec<Point> = coords.iter().map(|&(x, y, z)| Point::new(x as f64, y as f64, z.round())).collect();
            let k = k.min(points.len() - 1);
            let cloud = PointCloud::new("p", points.clone()).unwrap();
            let g = build_knn_graph(&cloud, k).unwrap();
            let oracle = brute_graph(&points, k);
            for i in 0..points.len() {
                let got: Vec<usize> = g.adjacency[i].iter().map(|e| e.0).collect();
                prop_assert_eq!(&got, &oracle[i]);
                for &(j, w) in &g.adjacency[i] {
                    prop_assert!(j != i);
                    prop_assert!(g.has_edge(j, i));
                    prop_assert!((w - (points[i] - points[j]).norm()).abs() <= 1e-9);
                }
            }
        }
    }
}

//! Point-cloud primitives shared by synthesis and detection.

pub mod cloud;
pub mod hull;
pub mod io;
pub mod kdtree;
pub mod knn;
pub mod normals;
pub mod pca;
pub mod sphere;
pub mod voxel;

pub use cloud::{Point, PointCloud, Vector};
pub use hull::{convex_hull, distance_to_hull_surface, HullMesh};
pub use io::{load_cloud, save_cloud, CloudFormat};
pub use knn::{build_knn_graph, KnnGraph};
pub use normals::{ensure_normals, estimate_normals};
pub use pca::{pca_frame, PcaFrame};
pub use sphere::{min_bounding_sphere, BoundingSphere};
pub use voxel::{voxel_downsample, VoxelDownsample};

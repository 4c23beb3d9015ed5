//! Defect synthesis and prototype-based anomaly detection for point clouds.
//!
//! Synthesis is organized by the dimension of the primitive that supports a
//! defect: geodesic skeletons on the surface ([`synth::geodesic`]), cutting
//! planes ([`synth::planar`]) and anchor hulls ([`synth::freeform`]). The
//! [`instruction`] layer turns a declarative synthesis request into one of
//! these operators, [`pipeline`] handles normalization, augmentation and
//! corpus generation, and [`detector`] scores clouds against a bank of
//! normal local-geometry prototypes.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod detector;
pub mod error;
pub mod geometry;
pub mod instruction;
pub mod mask;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Point, PointCloud, Vector};
pub use mask::{AnomalyMask, DefectType};

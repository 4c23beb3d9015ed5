//! Prototype-bank anomaly scoring.
//!
//! Each point is described by local covariance geometry; a bank of normal
//! descriptors is chosen by farthest-point sampling, points score by their
//! distance to the nearest prototype, and a cloud scores by the mean of its
//! top-K point scores.

pub mod bank;
pub mod evaluate;
pub mod features;
pub mod metrics;
pub mod score;

pub use bank::{build_prototypes, fit_bank, PrototypeBank};
pub use evaluate::{evaluate, EvalConfig, Evaluation, MetricsReport, TestSample};
pub use features::{extract_features, FeatureMatrix};
pub use metrics::auroc;
pub use score::{aggregate, score_points, upsample_scores};

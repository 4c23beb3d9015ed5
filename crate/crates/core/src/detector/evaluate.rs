//! Test-split scoring and O-ROC / P-ROC computation.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::io::{save_annotated, PlyExtras};
use crate::geometry::PointCloud;
use crate::mask::AnomalyMask;
use crate::pipeline::{apply_sdn, SdnProfile};

use super::bank::PrototypeBank;
use super::features::extract_features;
use super::metrics::auroc;
use super::score::{aggregate, default_k_agg, score_points, upsample_scores};

#[derive(Debug, Clone)]
pub struct TestSample {
    pub cloud: PointCloud,
    pub mask: AnomalyMask,
    /// Object-level ground truth.
    pub anomalous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Fixed top-K for aggregation; `None` uses `max(10, 1%)` per cloud.
    pub k_agg: Option<usize>,
    /// Worker threads; `None` uses the ambient pool.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub id: String,
    pub anomalous: bool,
    pub object_score: f64,
    pub k_agg: usize,
    /// Scores on the normalized, downsampled cloud.
    pub reduced_scores: Vec<f64>,
    /// Scores on the original points.
    pub point_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudSummary {
    pub id: String,
    pub anomalous: bool,
    pub object_score: f64,
    pub k_agg: usize,
    pub points: usize,
    pub anomalous_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub category: String,
    pub fingerprint: String,
    pub o_roc: f64,
    /// Pooled over every point of the split.
    pub p_roc: f64,
    pub clouds: Vec<CloudSummary>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    pub scores: Vec<ScoreReport>,
}

/// Scores one cloud: normalize and downsample, extract, score, aggregate
/// and upsample.
pub fn score_cloud(cloud: &PointCloud, bank: &PrototypeBank, profile: &SdnProfile, k_agg: Option<usize>) -> Result<ScoreReport> {
    let reduced = apply_sdn(cloud, profile)?;
    let features = extract_features(&reduced.cloud, bank.fingerprint.k_feat)?;
    let scores = score_points(&features, bank)?;
    let k = k_agg.unwrap_or_else(|| default_k_agg(scores.len())).min(scores.len());
    Ok(ScoreReport {
        id: cloud.id.clone(),
        anomalous: false,
        object_score: aggregate(&scores, k)?,
        k_agg: k,
        point_scores: upsample_scores(&scores, &reduced.index_map)?,
        reduced_scores: scores,
    })
}

fn check_profile(bank: &PrototypeBank, profile: &SdnProfile) -> Result<()> {
    match &bank.profile {
        Some(r) if r.category != profile.category || r.radius != profile.radius => Err(Error::contract(format!(
            "bank was built for category {} (radius {}), profile is {} (radius {})",
            r.category, r.radius, profile.category, profile.radius
        ))),
        _ => Ok(()),
    }
}

pub fn evaluate(samples: &[TestSample], bank: &PrototypeBank, profile: &SdnProfile, cfg: &EvalConfig) -> Result<Evaluation> {
    check_profile(bank, profile)?;
    if let Some(s) = samples.iter().find(|s| s.mask.len() != s.cloud.len()) {
        return Err(Error::contract(format!("mask of {} does not match its point count", s.cloud.id)));
    }
    let run = || -> Result<Vec<ScoreReport>> {
        samples
            .par_iter()
            .map(|s| {
                let mut r = score_cloud(&s.cloud, bank, profile, cfg.k_agg)?;
                r.anomalous = s.anomalous;
                Ok(r)
            })
            .collect()
    };
    let scores = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let object_labels: Vec<bool> = scores.iter().map(|r| r.anomalous).collect();
    let object_scores: Vec<f64> = scores.iter().map(|r| r.object_score).collect();
    let o_roc = auroc(&object_labels, &object_scores)?;
    let point_labels: Vec<bool> = samples.iter().flat_map(|s| s.mask.labels.iter().copied()).collect();
    let point_scores: Vec<f64> = scores.iter().flat_map(|r| r.point_scores.iter().copied()).collect();
    let p_roc = auroc(&point_labels, &point_scores)?;
    let clouds = samples
        .iter()
        .zip(&scores)
        .map(|(s, r)| CloudSummary {
            id: r.id.clone(),
            anomalous: r.anomalous,
            object_score: r.object_score,
            k_agg: r.k_agg,
            points: s.cloud.len(),
            anomalous_points: s.mask.count(),
        })
        .collect();
    Ok(Evaluation {
        metrics: MetricsReport {
            category: profile.category.clone(),
            fingerprint: bank.fingerprint.to_string(),
            o_roc,
            p_roc,
            clouds,
        },
        scores,
    })
}

/// Writes the original cloud with `score` and `anomaly` vertex columns.
pub fn save_overlay(cloud: &PointCloud, scores: &[f64], mask: &AnomalyMask, path: &Path) -> Result<()> {
    save_annotated(
        cloud,
        PlyExtras {
            mask: Some(mask),
            scores: Some(scores),
        },
        path,
    )
}

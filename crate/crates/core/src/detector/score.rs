//! Point scores, object aggregation and score upsampling.

use rayon::prelude::*;

use crate::error::{Error, Result};

use super::bank::{sq_dist, PrototypeBank};
use super::features::FeatureMatrix;

/// Euclidean distance of each feature row to its nearest prototype.
pub fn score_points(features: &FeatureMatrix, bank: &PrototypeBank) -> Result<Vec<f64>> {
    if features.fingerprint != bank.fingerprint {
        return Err(Error::FingerprintMismatch {
            bank: bank.fingerprint.to_string(),
            features: features.fingerprint.to_string(),
        });
    }
    if bank.is_empty() {
        return Err(Error::contract("prototype bank is empty"));
    }
    Ok(features
        .rows
        .par_iter()
        .map(|f| {
            bank.prototypes
                .iter()
                .map(|q| sq_dist(f, q))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect())
}

/// `max(10, 1% of n)`, capped at `n`.
pub fn default_k_agg(n: usize) -> usize {
    10.max(n / 100).min(n)
}

/// Mean of the `k` largest scores.
pub fn aggregate(scores: &[f64], k: usize) -> Result<f64> {
    if k == 0 || k > scores.len() {
        return Err(Error::contract(format!(
            "aggregation size {k} must lie in 1..={}",
            scores.len()
        )));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[..k].iter().sum::<f64>() / k as f64)
}

/// Gives every original point the score of its voxel representative.
pub fn upsample_scores(scores: &[f64], index_map: &[usize]) -> Result<Vec<f64>> {
    index_map
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            scores.get(j).copied().ok_or_else(|| {
                Error::contract(format!("index map sends point {i} to {j}, beyond {} scores", scores.len()))
            })
        })
        .collect()
}

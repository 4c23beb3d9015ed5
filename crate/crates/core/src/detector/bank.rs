//! Prototype bank of normal feature vectors.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::pipeline::{apply_sdn, SdnProfile};

use super::features::{extract_features, FeatureFingerprint, FeatureMatrix, FeatureRow};

pub const BANK_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_BANK_SIZE: usize = 2048;

/// Identifies the normalization a bank was built under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileRef {
    pub category: String,
    pub center: [f64; 3],
    pub radius: f64,
    pub voxel_size: f64,
}

impl From<&SdnProfile> for ProfileRef {
    fn from(p: &SdnProfile) -> Self {
        Self {
            category: p.category.clone(),
            center: p.center.coords.into(),
            radius: p.radius,
            voxel_size: p.voxel_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeBank {
    pub schema_version: u32,
    pub fingerprint: FeatureFingerprint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileRef>,
    pub prototypes: Vec<FeatureRow>,
}

impl PrototypeBank {
    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bank serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bank: Self = serde_json::from_str(text)?;
        if bank.schema_version != BANK_SCHEMA_VERSION {
            return Err(Error::contract(format!("unsupported bank schema version {}", bank.schema_version)));
        }
        if bank.prototypes.is_empty() {
            return Err(Error::contract("prototype bank is empty"));
        }
        Ok(bank)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn sq_dist(a: &FeatureRow, b: &FeatureRow) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Picks the index with the largest key, lowest index on ties.
fn argmax(keys: &[f64]) -> usize {
    keys.par_iter()
        .enumerate()
        .map(|(i, &k)| (k, i))
        .reduce(
            || (f64::NEG_INFINITY, usize::MAX),
            |a, b| match a.0.total_cmp(&b.0) {
                std::cmp::Ordering::Greater => a,
                std::cmp::Ordering::Less => b,
                std::cmp::Ordering::Equal => {
                    if a.1 <= b.1 {
                        a
                    } else {
                        b
                    }
                }
            },
        )
        .1
}

/// Farthest-point sampling in feature space. The first pick is the row of
/// largest norm; every later pick maximizes its distance to the picked set.
pub fn farthest_point_indices(rows: &[FeatureRow], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > rows.len() {
        return Err(Error::contract(format!(
            "bank size {k} must lie in 1..={} feature rows",
            rows.len()
        )));
    }
    let norms: Vec<f64> = rows.iter().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let mut picked = vec![argmax(&norms)];
    let mut nearest: Vec<f64> = rows.par_iter().map(|r| sq_dist(r, &rows[picked[0]])).collect();
    while picked.len() < k {
        let next = argmax(&nearest);
        picked.push(next);
        let q = rows[next];
        nearest.par_iter_mut().zip(rows.par_iter()).for_each(|(d, r)| {
            *d = d.min(sq_dist(r, &q));
        });
    }
    Ok(picked)
}

pub fn build_prototypes(features: &[FeatureMatrix], k: usize) -> Result<PrototypeBank> {
    let Some(first) = features.first() else {
        return Err(Error::contract("no training features"));
    };
    if let Some(other) = features.iter().find(|f| f.fingerprint != first.fingerprint) {
        return Err(Error::FingerprintMismatch {
            bank: first.fingerprint.to_string(),
            features: other.fingerprint.to_string(),
        });
    }
    let rows: Vec<FeatureRow> = features.iter().flat_map(|f| f.rows.iter().copied()).collect();
    let picked = farthest_point_indices(&rows, k)?;
    Ok(PrototypeBank {
        schema_version: BANK_SCHEMA_VERSION,
        fingerprint: first.fingerprint.clone(),
        profile: None,
        prototypes: picked.into_iter().map(|i| rows[i]).collect(),
    })
}

/// Normalizes each training cloud, extracts features and builds a bank of
/// at most `bank_size` prototypes.
pub fn fit_bank(train: &[PointCloud], profile: &SdnProfile, k_feat: usize, bank_size: usize) -> Result<PrototypeBank> {
    let features = train
        .iter()
        .map(|c| extract_features(&apply_sdn(c, profile)?.cloud, k_feat))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = features.iter().map(FeatureMatrix::len).sum();
    let k = bank_size.min(total);
    if k < bank_size {
        log::warn!("bank size reduced to {k}: only {total} training feature rows");
    }
    let mut bank = build_prototypes(&features, k)?;
    bank.profile = Some(profile.into());
    Ok(bank)
}

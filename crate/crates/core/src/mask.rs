use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Defect family tag carried by masks and instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefectType {
    Bump,
    Dent,
    Scratch,
    Groove,
    Hole,
    Bend,
    Crack,
    Freeform,
}

impl DefectType {
    pub const ALL: [DefectType; 8] = [
        DefectType::Bump,
        DefectType::Dent,
        DefectType::Scratch,
        DefectType::Groove,
        DefectType::Hole,
        DefectType::Bend,
        DefectType::Crack,
        DefectType::Freeform,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DefectType::Bump => "bump",
            DefectType::Dent => "dent",
            DefectType::Scratch => "scratch",
            DefectType::Groove => "groove",
            DefectType::Hole => "hole",
            DefectType::Bend => "bend",
            DefectType::Crack => "crack",
            DefectType::Freeform => "freeform",
        }
    }
}

impl fmt::Display for DefectType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DefectType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DefectType::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::contract(format!("unknown defect type \"{s}\"")))
    }
}

/// Per-point binary ground truth for a synthesized defect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyMask {
    pub labels: Vec<bool>,
    pub defect: Option<DefectType>,
}

impl AnomalyMask {
    pub fn empty(len: usize) -> Self {
        Self {
            labels: vec![false; len],
            defect: None,
        }
    }

    pub fn from_indices(len: usize, indices: &[usize], defect: Option<DefectType>) -> Self {
        let mut labels = vec![false; len];
        for &i in indices {
            labels[i] = true;
        }
        Self { labels, defect }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self) -> usize {
        self.labels.iter().filter(|&&b| b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// Keeps the rows whose `keep` flag is set.
    pub fn retain_rows(&self, keep: &[bool]) -> Self {
        Self {
            labels: self
                .labels
                .iter()
                .zip(keep)
                .filter_map(|(&l, &k)| k.then_some(l))
                .collect(),
            defect: self.defect,
        }
    }
}

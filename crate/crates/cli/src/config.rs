//! Run configuration: TOML (or JSON) with every field defaulted except the seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use defectforge_core::detector::bank::DEFAULT_BANK_SIZE;
use defectforge_core::detector::features::DEFAULT_K_FEAT;
use defectforge_core::pipeline::sdn::DEFAULT_VOXEL_SIZE;
use defectforge_core::pipeline::AugmentConfig;
use defectforge_core::DefectType;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Normal training clouds.
    pub train: PathBuf,
    /// Test clouds; scanned recursively. A `<stem>.mask.ply` file next to a
    /// cloud supplies its ground truth.
    pub test: PathBuf,
    pub out: PathBuf,
    /// Normal clouds to inject defects into; defaults to `train`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sources: Option<PathBuf>,
    /// Category metadata JSON handed to the model endpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            train: "data/train".into(),
            test: "data/test".into(),
            out: "out".into(),
            sources: None,
            metadata: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdnConfig {
    pub voxel_size: f64,
}

impl Default for SdnConfig {
    fn default() -> Self {
        Self {
            voxel_size: DEFAULT_VOXEL_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisConfig {
    pub counts: BTreeMap<DefectType, usize>,
    pub augment: AugmentConfig,
    /// Ask the model endpoint (from the environment) for instruction candidates.
    pub use_model: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub k_feat: usize,
    pub bank_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_agg: Option<usize>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            k_feat: DEFAULT_K_FEAT,
            bank_size: DEFAULT_BANK_SIZE,
            k_agg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub category: String,
    pub seed: Option<u64>,
    pub paths: Paths,
    pub sdn: SdnConfig,
    pub synthesis: SynthesisConfig,
    pub detector: DetectorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            category: "default".into(),
            seed: None,
            paths: Paths::default(),
            sdn: SdnConfig::default(),
            synthesis: SynthesisConfig {
                counts: DefectType::ALL.iter().map(|&u| (u, 0)).collect(),
                ..Default::default()
            },
            detector: DetectorConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults as TOML, with a placeholder seed.
    pub fn default_toml() -> String {
        let cfg = RunConfig {
            seed: Some(0),
            ..Default::default()
        };
        toml::to_string_pretty(&cfg).expect("config serializes")
    }

    /// Reads TOML, or JSON when the file ends in `.json`. Relative paths are
    /// resolved against the config file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("cannot read config {}", path.display()), e))?;
        let mut cfg: RunConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::invalid("config", e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::invalid("config", e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.check()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.train);
        fix(&mut self.paths.test);
        fix(&mut self.paths.out);
        if let Some(p) = self.paths.sources.as_mut() {
            fix(p);
        }
        if let Some(p) = self.paths.metadata.as_mut() {
            fix(p);
        }
    }

    pub fn check(&self) -> Result<(), CliError> {
        if self.seed.is_none() {
            return Err(CliError::invalid("config", "seed is required"));
        }
        if self.category.trim().is_empty() || self.category.contains(['/', '\\']) {
            return Err(CliError::invalid("config", "category must be a nonempty plain name"));
        }
        if !(self.sdn.voxel_size > 0.0 && self.sdn.voxel_size < 2.0) {
            return Err(CliError::invalid("config", "sdn.voxel_size must lie in (0, 2)"));
        }
        if self.detector.k_feat < 5 || self.detector.bank_size == 0 || self.detector.k_agg == Some(0) {
            return Err(CliError::invalid(
                "config",
                "detector needs k_feat >= 5, bank_size >= 1 and k_agg >= 1",
            ));
        }
        self.synthesis
            .augment
            .check()
            .map_err(|e| CliError::invalid("config", e.to_string()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("checked at load")
    }

    pub fn sources(&self) -> &Path {
        self.paths.sources.as_deref().unwrap_or(&self.paths.train)
    }

    pub fn profile_path(&self) -> PathBuf {
        self.paths.out.join("profile.json")
    }

    pub fn bank_path(&self) -> PathBuf {
        self.paths.out.join("bank.json")
    }
}

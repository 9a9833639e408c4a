//! Experiment configuration: the map, one block per command and a mandatory seed.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assumption_audit::AuditConfig;
use crate::error::{AcimError, Result};
use crate::example_maps::ExampleSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InductionBlock {
    pub n_max: usize,
    pub n_samples: usize,
    #[serde(default = "default_window")]
    pub window: (usize, usize),
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_window() -> (usize, usize) {
    (100, 1000)
}

fn default_margin() -> f64 {
    0.15
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferBlock {
    pub resolution: usize,
    pub samples_per_cell: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Escape levels resolved by the density extension; 0 skips it.
    #[serde(default)]
    pub n_levels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuasiHolderBlock {
    pub alpha: f64,
    pub eps0: f64,
    pub k_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsymptoticsBlock {
    pub orbit_length: usize,
    #[serde(default)]
    pub fit_window: Option<(usize, usize)>,
    /// Distance of the orbit start from the neutral point.
    #[serde(default = "default_start")]
    pub start: f64,
}

fn default_start() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub map: ExampleSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub induction: Option<InductionBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quasi_holder: Option<QuasiHolderBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymptotics: Option<AsymptoticsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| AcimError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AcimError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// SHA-256 of the canonical JSON form, output directory excluded so
    /// the same experiment hashes the same wherever it is written.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig {
            output_dir: None,
            ..self.clone()
        };
        let text = serde_json::to_string(&canonical).expect("config serializes");
        sha256_hex(text.as_bytes())
    }

    pub fn induction(&self) -> Result<&InductionBlock> {
        self.induction.as_ref().ok_or_else(|| missing("induction"))
    }

    pub fn transfer(&self) -> Result<&TransferBlock> {
        self.transfer.as_ref().ok_or_else(|| missing("transfer"))
    }

    pub fn quasi_holder(&self) -> Result<&QuasiHolderBlock> {
        self.quasi_holder.as_ref().ok_or_else(|| missing("quasi_holder"))
    }

    pub fn asymptotics(&self) -> Result<&AsymptoticsBlock> {
        self.asymptotics.as_ref().ok_or_else(|| missing("asymptotics"))
    }

    pub fn audit(&self) -> Result<&AuditConfig> {
        self.audit.as_ref().ok_or_else(|| missing("audit"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn missing(block: &str) -> AcimError {
    AcimError::Config(format!("the `{block}` block is required for this command"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"map": {"example_id": 4, "component": 2}, "seed": 7,
        "induction": {"n_max": 10000, "n_samples": 1000}}"#;

    #[test]
    fn parses_and_hashes() {
        let c = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.induction().unwrap().window, (100, 1000));
        assert!(c.transfer().is_err());
        let mut moved = c.clone();
        moved.output_dir = Some("elsewhere".into());
        assert_eq!(c.hash(), moved.hash());
        let mut reseeded = c.clone();
        reseeded.seed = 8;
        assert_ne!(c.hash(), reseeded.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn seed_is_mandatory() {
        let r = ExperimentConfig::from_json(r#"{"map": {"example_id": 1}}"#);
        assert!(matches!(r, Err(AcimError::Config(m)) if m.contains("seed")));
        assert!(ExperimentConfig::from_json(r#"{"map": {"example_id": 1}, "seed": 1, "typo": 2}"#).is_err());
    }
}

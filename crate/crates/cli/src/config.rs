//! Pipeline configuration, read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weds_core::descriptors::DescriptorKind;
use weds_core::wavelet::FilterParams;
use weds_mgcn::{AdamParams, Architecture, PhaseConfig, TrainConfig, DEFAULT_ARCHITECTURE};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Artifacts and the basis cache go here.
    pub output_dir: PathBuf,
    /// Training meshes.
    pub meshes: Vec<PathBuf>,
    /// One index file per mesh giving each vertex's class. Empty means every
    /// mesh shares the template vertex order.
    pub labels: Vec<PathBuf>,
    pub descriptor: DescriptorConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescriptorConfig {
    pub kind: String,
    /// Eigenpairs.
    pub k: usize,
    /// Descriptor width.
    pub num: usize,
    pub bank: BankConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankConfig {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub scales: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub architecture: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub classification_epochs: usize,
    pub classification_lr: f64,
    pub classification_weight_decay: f64,
    pub similarity_epochs: usize,
    pub similarity_lr: f64,
    pub similarity_weight_decay: f64,
    pub margin: f64,
    pub pairs_per_step: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("weds-out"),
            meshes: Vec::new(),
            labels: Vec::new(),
            descriptor: DescriptorConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
        }
    }
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            kind: "weds".into(),
            k: 100,
            num: 128,
            bank: BankConfig::default(),
        }
    }
}

impl Default for BankConfig {
    fn default() -> Self {
        let p = FilterParams::STOCK;
        Self {
            a: p.a,
            b: p.b,
            c: p.c,
            d: p.d,
            e: p.e,
            scales: 31,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: DEFAULT_ARCHITECTURE.into(),
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            classification_epochs: t.classification.epochs,
            classification_lr: t.classification.adam.lr,
            classification_weight_decay: t.classification.adam.weight_decay,
            similarity_epochs: t.similarity.epochs,
            similarity_lr: t.similarity.adam.lr,
            similarity_weight_decay: t.similarity.adam.weight_decay,
            margin: t.margin,
            pairs_per_step: t.pairs_per_step,
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::data(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::data(format!("config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn descriptor_kind(&self) -> Result<DescriptorKind> {
        match self.descriptor.kind.parse() {
            Ok(DescriptorKind::Learned) | Err(_) => Err(CliError::data(format!(
                "descriptor kind must be weds, hks or wks, got '{}'",
                self.descriptor.kind
            ))),
            Ok(kind) => Ok(kind),
        }
    }

    pub fn architecture(&self) -> Result<Architecture> {
        self.model.architecture.parse().map_err(|e| CliError::data(format!("{e}")))
    }

    pub fn filter_params(&self) -> FilterParams {
        let b = &self.descriptor.bank;
        FilterParams {
            a: b.a,
            b: b.b,
            c: b.c,
            d: b.d,
            e: b.e,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            classification: PhaseConfig {
                epochs: t.classification_epochs,
                adam: AdamParams::new(t.classification_lr, t.classification_weight_decay),
            },
            similarity: PhaseConfig {
                epochs: t.similarity_epochs,
                adam: AdamParams::new(t.similarity_lr, t.similarity_weight_decay),
            },
            margin: t.margin,
            pairs_per_step: t.pairs_per_step,
            seed: self.seed,
        }
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.output_dir.join("cache")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut c = PipelineConfig::default();
        c.seed = 7;
        c.meshes = vec!["a.off".into(), "b.ply".into()];
        c.descriptor.kind = "hks".into();
        c.descriptor.bank.c = 38.1234567890123;
        c.train.similarity_lr = 1.0 / 3.0;
        let back = PipelineConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = PipelineConfig::parse("seed = 3\n[descriptor]\nnum = 64\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.descriptor.num, 64);
        assert_eq!(c.descriptor.k, 100);
        assert_eq!(c.train_config().classification.epochs, 200);
        assert_eq!(c.train_config().seed, 3);
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["sed = 3\n", "[descriptor]\nkk = 4\n", "[train]\nepochs = 1\n", "[extra]\n"] {
            let e = PipelineConfig::parse(text).unwrap_err();
            assert_eq!(e.code(), 2, "{text}");
        }
    }

    #[test]
    fn kind_and_architecture_validated() {
        let mut c = PipelineConfig::default();
        assert_eq!(c.descriptor_kind().unwrap(), DescriptorKind::Weds);
        c.descriptor.kind = "learned".into();
        assert!(c.descriptor_kind().is_err());
        c.model.architecture = "MGCONV".into();
        assert!(c.architecture().is_err());
    }
}

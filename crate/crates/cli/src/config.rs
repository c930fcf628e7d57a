//! Experiment configuration: one JSON document drives every command.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use prefir_core::compensation::SweepConfig;
use prefir_core::fir_layer::FirLayerConfig;
use prefir_core::net::{Architecture, TrainConfig};
use prefir_core::testbed::TestbedConfig;
use prefir_core::wop::NcgConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Environment variable that overrides the output directory.
pub const OUT_ENV: &str = "PREFIR_OUT";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub train_per_class: usize,
    pub validation_per_class: usize,
    /// Test-day examples per class, each through its own channel draw.
    pub test_per_class: usize,
    /// Test-day recordings (batches of B slices) per device.
    pub recordings_per_device: usize,
    /// Examples per class for filter-layer training, all through one test-day link.
    pub fir_train_per_class: usize,
    pub fir_validation_per_class: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            train_per_class: 1000,
            validation_per_class: 100,
            test_per_class: 100,
            recordings_per_device: 4,
            fir_train_per_class: 200,
            fir_validation_per_class: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub architecture: Architecture,
    pub train: TrainConfig,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture {
                input_len: 64,
                classes: 5,
                conv1_filters: 8,
                conv2_filters: 8,
                kernel: 7,
                dense_units: 32,
            },
            train: TrainConfig {
                learning_rate: 1e-3,
                epochs: 15,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub testbed: TestbedConfig,
    pub dataset: DatasetConfig,
    pub net: NetConfig,
    pub ncg: NcgConfig,
    pub fir_layer: FirLayerConfig,
    pub sweep: SweepConfig,
    /// Used when neither `--out` nor the environment override is given.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            testbed: TestbedConfig::default(),
            dataset: DatasetConfig::default(),
            net: NetConfig::default(),
            ncg: NcgConfig::default(),
            fir_layer: FirLayerConfig::default(),
            sweep: SweepConfig::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.net.architecture;
        let t = &self.testbed;
        if a.input_len != t.input_len || a.classes != t.devices {
            bail!(
                "net architecture ({} samples, {} classes) does not match the testbed ({} samples, {} devices)",
                a.input_len,
                a.classes,
                t.input_len,
                t.devices
            );
        }
        a.validate()?;
        self.net.train.validate()?;
        self.ncg.validate()?;
        self.fir_layer.validate()?;
        if self.dataset.train_per_class == 0 || self.dataset.recordings_per_device == 0 {
            bail!("dataset needs train_per_class and recordings_per_device >= 1");
        }
        if self.fir_layer.taps > t.input_len || self.ncg.taps > t.input_len {
            bail!("tap count exceeds the input length");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.output_dir = None;
        let bytes = serde_json::to_vec(&canon).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// `--out`, then the environment override, then the config's own field.
pub fn resolve_out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p);
    }
    if let Some(p) = std::env::var_os(OUT_ENV) {
        return Ok(PathBuf::from(p));
    }
    match &cfg.output_dir {
        Some(p) => Ok(p.clone()),
        None => bail!("no output directory: pass --out, set {OUT_ENV}, or set output_dir in the config"),
    }
}

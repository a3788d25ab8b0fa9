use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Schema, SplitSpec};
use crate::error::{ForceError, Result};
use crate::gbm::GbmConfig;
use crate::kmeans::{KMeansOptions, KernelSpec};
use crate::net::{AttentionMode, NetConfig};
use crate::shap::DEFAULT_BACKGROUND_CAP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Force,
    SimpleNn,
    RandomAttention,
    NoClusterLabels,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Force,
        Variant::SimpleNn,
        Variant::RandomAttention,
        Variant::NoClusterLabels,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Force => "force",
            Variant::SimpleNn => "simple_nn",
            Variant::RandomAttention => "random_attention",
            Variant::NoClusterLabels => "no_cluster_labels",
        }
    }

    /// Network settings for this variant derived from the base config.
    pub fn net_config(self, base: &NetConfig) -> NetConfig {
        let (attention, cluster_feature) = match self {
            Variant::Force => (AttentionMode::Shap, true),
            Variant::SimpleNn => (AttentionMode::Off, false),
            Variant::RandomAttention => (AttentionMode::Random, true),
            Variant::NoClusterLabels => (AttentionMode::Shap, false),
        };
        NetConfig {
            attention,
            cluster_feature,
            ..*base
        }
    }

    pub fn uses_clusters(self) -> bool {
        matches!(self, Variant::Force | Variant::RandomAttention)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ForceError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| {
                ForceError::Config(format!(
                    "unknown variant '{s}' (expected force, simple_nn, random_attention or no_cluster_labels)"
                ))
            })
    }
}

/// Everything a run depends on besides the dataset bytes. Loaded from TOML;
/// every field is optional and falls back to its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: Schema,
    /// Explicit dataset file; otherwise `$FORCE_DATA_DIR/<file>` or `data/<file>`.
    pub data_path: Option<PathBuf>,
    pub split: SplitSpec,
    pub gbm: GbmConfig,
    pub background_cap: usize,
    pub kernels: Vec<KernelSpec>,
    pub k_values: Vec<usize>,
    pub kmeans: KMeansOptions,
    pub net: NetConfig,
    /// Share of the network's training rows held out for early stopping.
    pub early_stop_fraction: f64,
    pub variants: Vec<Variant>,
    pub master_seed: u64,
    pub n_seeds: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: Schema::Heart,
            data_path: None,
            split: SplitSpec::default(),
            gbm: GbmConfig::default(),
            background_cap: DEFAULT_BACKGROUND_CAP,
            kernels: KernelSpec::standard_grid(),
            k_values: (2..=6).collect(),
            kmeans: KMeansOptions::default(),
            net: NetConfig::default(),
            early_stop_fraction: 0.1,
            variants: Variant::ALL.to_vec(),
            master_seed: 0,
            n_seeds: 10,
        }
    }
}

impl ExperimentConfig {
    pub fn for_dataset(dataset: Schema) -> Self {
        ExperimentConfig {
            dataset,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| ForceError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ForceError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernels.is_empty() || self.k_values.is_empty() {
            return Err(ForceError::Config("clustering grid is empty".into()));
        }
        for kernel in &self.kernels {
            kernel.validate()?;
        }
        if self.k_values.iter().any(|&k| k < 1) {
            return Err(ForceError::Config("k values must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(ForceError::Config("no variants selected".into()));
        }
        if self.n_seeds == 0 {
            return Err(ForceError::Config("n_seeds must be at least 1".into()));
        }
        if self.background_cap == 0 {
            return Err(ForceError::Config("background_cap must be at least 1".into()));
        }
        if !(self.early_stop_fraction >= 0.0 && self.early_stop_fraction < 1.0) {
            return Err(ForceError::Config("early_stop_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Grid cells in selection order: kernels outer, k ascending inner.
    pub fn grid(&self) -> Vec<(KernelSpec, usize)> {
        let mut ks = self.k_values.clone();
        ks.sort_unstable();
        ks.dedup();
        self.kernels
            .iter()
            .flat_map(|&kernel| ks.iter().map(move |&k| (kernel, k)))
            .collect()
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.n_seeds as u64)
            .map(|i| self.master_seed.wrapping_add(i))
            .collect()
    }

    pub fn resolve_data_path(&self) -> PathBuf {
        if let Some(p) = &self.data_path {
            return p.clone();
        }
        let dir = std::env::var_os("FORCE_DATA_DIR")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("data"));
        dir.join(self.dataset.file_name())
    }
}

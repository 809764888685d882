//! Run configuration: one JSON document, every knob explicit.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssdau_core::augment::AugmentPolicy;
use ssdau_core::corpus::UnknownRelationPolicy;
use ssdau_core::discretize::SplitMode;
use ssdau_core::embedding::{ProviderConfig, ProviderKind};
use ssdau_core::filtering::scorer::{InitKind, DEFAULT_DROPOUT};
use ssdau_core::matching::{QueueConfig, SimilarityWeights};

use crate::error::{AppError, AppResult};
use crate::io::{DatasetFormat, DEFAULT_MAX_TOKENS};
use crate::service::ServiceConfig;

pub const DEFAULT_CONTEXT_WIDTH: usize = 3;
pub const DEFAULT_DIMENSION: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: String,
    pub format: DatasetFormat,
    /// Label used in sweep tables; the file stem when empty.
    pub name: String,
    pub max_tokens: usize,
    pub unknown_relation: UnknownRelationPolicy,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: String::new(),
            format: DatasetFormat::Jsonl,
            name: String::new(),
            max_tokens: DEFAULT_MAX_TOKENS,
            unknown_relation: UnknownRelationPolicy::Fail,
        }
    }
}

impl DataConfig {
    pub fn display_name(&self) -> String {
        if !self.name.is_empty() {
            return self.name.clone();
        }
        Path::new(&self.path)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// Foreign-data injection used by robustness runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub foreign: String,
    pub format: DatasetFormat,
    pub rate: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            foreign: String::new(),
            format: DatasetFormat::Jsonl,
            rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    pub kind: ProviderKind,
    pub dimension: usize,
    /// Service base URL; `$SSDAU_EMBED_ENDPOINT` overrides it.
    pub endpoint: Option<String>,
    /// Cache directory for `file_cache`.
    pub path: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        let s = ServiceConfig::default();
        Self {
            kind: ProviderKind::DeterministicTest,
            dimension: DEFAULT_DIMENSION,
            endpoint: None,
            path: None,
            timeout_ms: s.timeout_ms,
            retries: s.retries,
            backoff_ms: s.backoff_ms,
            max_in_flight: s.max_in_flight,
        }
    }
}

impl ProviderSettings {
    pub fn provider_config(&self) -> ProviderConfig {
        ProviderConfig {
            kind: self.kind,
            dimension: self.dimension,
            endpoint: self.endpoint.clone(),
            path: self.path.clone(),
        }
    }

    pub fn service_config(&self) -> Option<ServiceConfig> {
        let endpoint = self.endpoint.clone()?;
        Some(
            ServiceConfig {
                endpoint,
                dimension: self.dimension,
                timeout_ms: self.timeout_ms,
                retries: self.retries,
                backoff_ms: self.backoff_ms,
                max_in_flight: self.max_in_flight,
                ..ServiceConfig::default()
            }
            .with_env_override(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterOrder {
    #[default]
    TopicsThenConsistency,
    ConsistencyThenTopics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub keep_fraction: f64,
    /// 0 disables topic filtering.
    pub k_topics: usize,
    pub min_affinity: f64,
    /// Candidates with coherence ν below this are dropped first.
    pub nu_floor: f64,
    pub order: FilterOrder,
    pub hidden_dim: usize,
    pub init: InitKind,
    pub ridge: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    /// Emit original ∪ kept augmented instances as well.
    pub append: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            keep_fraction: 0.8,
            k_topics: 8,
            min_affinity: 0.7,
            nu_floor: 0.5,
            order: FilterOrder::TopicsThenConsistency,
            hidden_dim: 32,
            init: InitKind::Pretrained,
            ridge: 1.0,
            epochs: 50,
            learning_rate: 0.1,
            dropout_rate: DEFAULT_DROPOUT,
            append: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub perturb: Option<PerturbConfig>,
    #[serde(default)]
    pub provider: ProviderSettings,
    #[serde(default = "default_context_width")]
    pub context_width: usize,
    #[serde(default)]
    pub split_mode: SplitMode,
    #[serde(default)]
    pub weights: SimilarityWeights,
    #[serde(default)]
    pub floor: f64,
    #[serde(default = "default_cap")]
    pub cap: usize,
    #[serde(default)]
    pub policy: AugmentPolicy,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    /// Worker threads; 0 uses every core. Never changes outputs.
    #[serde(default)]
    pub threads: usize,
}

fn default_context_width() -> usize {
    DEFAULT_CONTEXT_WIDTH
}

fn default_cap() -> usize {
    QueueConfig::default().cap
}

fn default_output_dir() -> String {
    "out".into()
}

impl RunConfig {
    pub fn new(seed: u64, dataset: impl Into<String>) -> Self {
        Self {
            seed,
            data: DataConfig {
                path: dataset.into(),
                ..DataConfig::default()
            },
            perturb: None,
            provider: ProviderSettings::default(),
            context_width: DEFAULT_CONTEXT_WIDTH,
            split_mode: SplitMode::default(),
            weights: SimilarityWeights::default(),
            floor: 0.0,
            cap: default_cap(),
            policy: AugmentPolicy::default(),
            filter: FilterConfig::default(),
            output_dir: default_output_dir(),
            threads: 0,
        }
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        crate::io::read_json(path)
    }

    pub fn queue_config(&self) -> QueueConfig {
        QueueConfig {
            weights: self.weights,
            floor: self.floor,
            cap: self.cap,
        }
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        Path::new(&self.output_dir).join(name)
    }

    /// Checks values and that every referenced input exists.
    pub fn validate(&self) -> AppResult<()> {
        let bad = |m: String| Err(AppError::Validation(m));
        if self.data.path.is_empty() {
            return bad("data.path is required".into());
        }
        crate::io::must_exist(Path::new(&self.data.path))?;
        if let Some(p) = &self.perturb {
            crate::io::must_exist(Path::new(&p.foreign))?;
            if !(0.0..=1.0).contains(&p.rate) {
                return bad(format!("perturb.rate {} outside [0, 1]", p.rate));
            }
        }
        self.provider.provider_config().validate()?;
        if self.provider.kind == ssdau_core::embedding::ProviderKind::FileCache {
            // a cache without a backing service is read-only and must already exist
            let dir = self.provider.path.as_deref().unwrap_or_default();
            if self.provider.endpoint.is_none() {
                crate::io::must_exist(Path::new(dir))?;
            }
        }
        self.queue_config().validate()?;
        self.policy.validate()?;
        let f = &self.filter;
        if !(f.keep_fraction > 0.0 && f.keep_fraction <= 1.0) {
            return bad(format!("filter.keep_fraction {} outside (0, 1]", f.keep_fraction));
        }
        if !(0.0..=1.0).contains(&f.min_affinity) {
            return bad(format!("filter.min_affinity {} outside [0, 1]", f.min_affinity));
        }
        if !(0.0..=1.0).contains(&f.nu_floor) {
            return bad(format!("filter.nu_floor {} outside [0, 1]", f.nu_floor));
        }
        if f.hidden_dim == 0 {
            return bad("filter.hidden_dim must be positive".into());
        }
        if !(f.ridge > 0.0) || !f.ridge.is_finite() {
            return bad(format!("filter.ridge must be positive, got {}", f.ridge));
        }
        if !(f.learning_rate >= 0.0) || !f.learning_rate.is_finite() {
            return bad(format!("filter.learning_rate must be nonnegative, got {}", f.learning_rate));
        }
        if !(0.0..1.0).contains(&f.dropout_rate) {
            return bad(format!("filter.dropout_rate {} outside [0, 1)", f.dropout_rate));
        }
        if self.output_dir.is_empty() {
            return bad("output_dir is required".into());
        }
        Ok(())
    }

    /// Seed of one stage, derived from the run seed by name.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        ssdau_core::seed::derive_seed(self.seed, stage)
    }
}

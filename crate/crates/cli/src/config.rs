// SPDX-License-Identifier: MIT OR Apache-2.0

//! Audit configuration file.
//!
//! Relative paths are resolved against the directory holding the config.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use interp_core::baselines::ConditionName;
use interp_core::embeddings::SynthSpec;
use interp_core::mappers::{FfnnHyper, MapperKind};
use interp_core::metrics::{MetricName, MetricSpec};
use interp_core::norms::{CategoricalFormat, NormKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_K_GRID: [usize; 8] = [5, 10, 20, 30, 50, 75, 100, 150];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    pub datasets: Vec<DatasetConfig>,
    pub embeddings: EmbeddingSource,
    #[serde(default)]
    pub mapper: MapperConfig,
    pub conditions: Vec<ConditionName>,
    /// Metric names such as `f1@10`, `spearman`, `na@10`.
    pub metrics: Vec<String>,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub kind: NormKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<CategoricalFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_classes: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthNormParams>,
    /// Overrides the global list; every entry must apply to this norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditions: Option<Vec<ConditionName>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthNormParams {
    pub n_concepts: usize,
    pub n_features: usize,
    #[serde(default = "default_nonzeros")]
    pub nonzeros: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub taxonomic: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_nonzeros() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Subword segmentation file; when given, concept vectors are pooled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapperConfig {
    pub kinds: Vec<MapperKind>,
    pub k_grid: Vec<usize>,
    pub folds: usize,
    pub train_fraction: f64,
    pub ffnn: FfnnHyper,
}

impl Default for MapperConfig {
    fn default() -> Self {
        MapperConfig {
            kinds: vec![MapperKind::Plsr],
            k_grid: DEFAULT_K_GRID.to_vec(),
            folds: 10,
            train_fraction: 0.8,
            ffnn: FfnnHyper::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Fold assignment.
    pub cv: u64,
    /// Train/validation split of the latent-size search.
    pub split: u64,
    /// Rand, Shuffle and Corrupt generators.
    pub baseline: u64,
    /// Network initialization; fold `f` uses `ffnn + f`.
    pub ffnn: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "runs".into() }
    }
}

impl DatasetConfig {
    pub fn metric_specs<'a>(&'a self, global: &'a [String]) -> CliResult<Vec<MetricSpec>> {
        self.metrics
            .as_deref()
            .unwrap_or(global)
            .iter()
            .map(|m| m.parse::<MetricSpec>().map_err(CliError::validation))
            .collect()
    }

    pub fn condition_list<'a>(&'a self, global: &'a [ConditionName]) -> &'a [ConditionName] {
        self.conditions.as_deref().unwrap_or(global)
    }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn require_file(base: &Path, p: &Path, what: &str) -> CliResult<()> {
    let full = resolve(base, p);
    if !full.is_file() {
        return Err(CliError::Validation(format!(
            "{what} file not found: {}",
            full.display()
        )));
    }
    Ok(())
}

/// Why `metric` cannot be scored on a norm of `kind`, if it cannot.
pub fn metric_incompatibility(metric: &MetricSpec, kind: NormKind) -> Option<String> {
    (metric.metric == MetricName::F1AtK && kind != NormKind::Categorical)
        .then(|| format!("{metric} needs a categorical norm"))
}

impl AuditConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self, base: &Path) -> CliResult<()> {
        if self.datasets.is_empty() {
            return Err(CliError::validation("no datasets"));
        }
        let mut names = BTreeSet::new();
        for d in &self.datasets {
            if !names.insert(d.name.as_str()) {
                return Err(CliError::Validation(format!("duplicate dataset '{}'", d.name)));
            }
            if d.name.is_empty() || d.name.contains(['/', '\\']) {
                return Err(CliError::Validation(format!("bad dataset name '{}'", d.name)));
            }
            match (&d.path, &d.synthetic) {
                (Some(p), None) => require_file(base, p, "norm")?,
                (None, Some(_)) => {}
                _ => {
                    return Err(CliError::Validation(format!(
                        "dataset '{}' needs exactly one of path or synthetic",
                        d.name
                    )))
                }
            }
            if let Some(fc) = &d.feature_classes {
                require_file(base, fc, "feature class")?;
            }
            if let Some(list) = &d.conditions {
                for c in list {
                    c.check_kind(d.kind)
                        .map_err(|e| CliError::Validation(format!("dataset '{}': {e}", d.name)))?;
                }
            }
            let specs = d.metric_specs(&self.metrics)?;
            if d.metrics.is_some() {
                if let Some(why) = specs.iter().find_map(|m| metric_incompatibility(m, d.kind)) {
                    return Err(CliError::Validation(format!("dataset '{}': {why}", d.name)));
                }
            }
        }
        match (&self.embeddings.path, &self.embeddings.synthetic) {
            (Some(p), None) => require_file(base, p, "embedding")?,
            (None, Some(_)) if self.embeddings.segmentations.is_none() => {}
            _ => {
                return Err(CliError::validation(
                    "embeddings need exactly one of path or synthetic (segmentations only with path)",
                ))
            }
        }
        if let Some(s) = &self.embeddings.segmentations {
            require_file(base, s, "segmentation")?;
        }
        if self.conditions.is_empty() || self.metrics.is_empty() {
            return Err(CliError::validation("conditions and metrics must be non-empty"));
        }
        let unique: BTreeSet<_> = self.conditions.iter().collect();
        if unique.len() != self.conditions.len() {
            return Err(CliError::validation("duplicate condition"));
        }
        let m = &self.mapper;
        if m.kinds.is_empty() {
            return Err(CliError::validation("mapper.kinds is empty"));
        }
        if m.k_grid.is_empty() || m.k_grid.contains(&0) || m.k_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::validation("mapper.k_grid must be strictly ascending positive integers"));
        }
        if m.folds < 2 {
            return Err(CliError::validation("mapper.folds must be ≥ 2"));
        }
        if !(m.train_fraction > 0.0 && m.train_fraction < 1.0) {
            return Err(CliError::validation("mapper.train_fraction must be in (0, 1)"));
        }
        Ok(())
    }
}

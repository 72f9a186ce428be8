// SPDX-License-Identifier: MIT OR Apache-2.0

//! Runs every requested condition for every norm and mapper and collects
//! the scores.

use std::path::Path;

use interp_core::baselines::{Condition, ConditionName};
use interp_core::embeddings::{load_segmentations, load_text_embeddings, pool_concepts, synth_embeddings, EmbeddingTable};
use interp_core::mappers::blob::encode_model;
use interp_core::mappers::select::clip_grid;
use interp_core::mappers::{cross_validate, fit_mapper, select_k_elbow, FfnnHyper, FitCurve, MapperKind, Split};
use interp_core::metrics::{evaluate, MetricSpec, SpearmanAxis};
use interp_core::norms::{align_vocabulary, load_feature_classes, load_norm, AlignedDataset, FeatureNorm, NormKind};
use interp_core::synth::{synth_norm, SynthNormSpec};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{metric_incompatibility, resolve, AuditConfig, DatasetConfig, Seeds};
use crate::error::{CliError, CliResult};

pub const REPORT_SCHEMA: &str = "interp-audit/report/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub schema: String,
    pub provenance: Provenance,
    pub norms: Vec<NormSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    /// The normalized config; feeding it back to `audit` reruns the report.
    pub config: AuditConfig,
    pub seeds: Seeds,
    pub tool: String,
    pub version: String,
    /// Baseline constructions that are reconstructions rather than fixed
    /// conventions.
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSection {
    pub norm: String,
    pub kind: NormKind,
    pub n_concepts: usize,
    pub n_features: usize,
    /// Norm concepts with no embedding.
    pub dropped_concepts: usize,
    /// Mapper whose Sys validation curve picked the latent size shared by
    /// every mapper and condition of this norm.
    pub selection_mapper: MapperKind,
    pub curve: FitCurve,
    pub mappers: Vec<MapperSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperSection {
    pub mapper: MapperKind,
    pub chosen_k: usize,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub condition: ConditionName,
    pub metric: String,
    pub mean: Option<f64>,
    pub scored: usize,
    pub skipped: usize,
    pub seed: Option<u64>,
    pub skip_reason: Option<String>,
    /// Per-concept scores, relative to the run directory.
    pub scores_file: Option<String>,
}

/// Files produced next to the report, keyed by path relative to the run
/// directory.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    pub text: Vec<(String, String)>,
    pub binary: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    fn extend(&mut self, other: Artifacts) {
        self.text.extend(other.text);
        self.binary.extend(other.binary);
    }
}

/// Stable hash of the normalized config.
pub fn config_hash(config: &AuditConfig) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    let digest = Sha256::digest(value.to_string().as_bytes());
    hex::encode(digest)
}

pub fn load_embeddings(config: &AuditConfig, base: &Path) -> CliResult<EmbeddingTable> {
    let src = &config.embeddings;
    let table = match (&src.path, &src.synthetic) {
        (Some(p), _) => {
            let table = load_text_embeddings(&resolve(base, p)).map_err(CliError::validation)?;
            match &src.segmentations {
                Some(s) => {
                    let seg = load_segmentations(&resolve(base, s)).map_err(CliError::validation)?;
                    pool_concepts(&table, &seg).map_err(CliError::validation)?
                }
                None => table,
            }
        }
        (None, Some(spec)) => synth_embeddings(spec).map_err(CliError::validation)?,
        (None, None) => return Err(CliError::validation("no embedding source")),
    };
    Ok(table)
}

/// A norm restricted to the concepts that have embeddings, row-aligned with `x`.
pub struct LoadedNorm {
    pub config: DatasetConfig,
    pub norm: FeatureNorm,
    pub x: Array2<f64>,
    pub dropped: usize,
}

pub fn load_dataset(d: &DatasetConfig, table: &EmbeddingTable, base: &Path, folds: usize) -> CliResult<LoadedNorm> {
    let norm = match (&d.path, &d.synthetic) {
        (Some(p), _) => {
            let format = d.format.clone().unwrap_or_default();
            let mut norm = load_norm(&resolve(base, p), d.kind, &format).map_err(CliError::validation)?;
            if let Some(fc) = &d.feature_classes {
                let classes = load_feature_classes(&resolve(base, fc)).map_err(CliError::validation)?;
                norm = norm.with_feature_classes(classes);
            }
            norm
        }
        (None, Some(s)) => {
            let spec = SynthNormSpec {
                name: d.name.clone(),
                kind: d.kind,
                n_concepts: s.n_concepts,
                n_features: s.n_features,
                nonzeros: s.nonzeros,
                noise: s.noise,
                taxonomic: s.taxonomic,
                seed: s.seed,
            };
            synth_norm(table, &spec).map_err(CliError::validation)?
        }
        (None, None) => return Err(CliError::Validation(format!("dataset '{}' has no source", d.name))),
    };
    let (aligned, kept) = align_vocabulary(&norm, table)
        .map_err(|e| CliError::Validation(format!("dataset '{}': {e}", d.name)))?;
    if aligned.len() < folds {
        return Err(CliError::Validation(format!(
            "dataset '{}': {} aligned concepts, fewer than {folds} folds",
            d.name,
            aligned.len()
        )));
    }
    let subset = norm.subset(&kept).map_err(CliError::validation)?;
    Ok(LoadedNorm {
        config: d.clone(),
        dropped: norm.n_concepts() - kept.len(),
        norm: subset,
        x: aligned.x,
    })
}

fn file_stem(metric: &MetricSpec) -> String {
    metric.to_string().replace('@', "_at_").replace('/', "_")
}

fn notes_for(conditions: &[ConditionName]) -> Vec<String> {
    let mut notes = Vec::new();
    if conditions.iter().any(|c| matches!(c, ConditionName::Shuffle | ConditionName::ShufUpper)) {
        notes.push("Shuffle: per-row nonzero counts kept, positions uniform, values uniform over the source nonzero range (reconstruction)".into());
    }
    if conditions.contains(&ConditionName::CDiff) {
        notes.push("CDiff: cell (c, j) = |len(c) - j|, min-max rescaled to the source range (reconstruction)".into());
    }
    if conditions.contains(&ConditionName::Rand) {
        notes.push("Rand: mapper trained on dense uniform noise, scored against the original norm".into());
    }
    notes
}

fn skip_cells(name: ConditionName, seed: Option<u64>, specs: &[MetricSpec], reason: &str) -> Vec<Cell> {
    specs
        .iter()
        .map(|m| Cell {
            condition: name,
            metric: m.to_string(),
            mean: None,
            scored: 0,
            skipped: 0,
            seed,
            skip_reason: Some(reason.to_string()),
            scores_file: None,
        })
        .collect()
}

struct Job<'a> {
    loaded: &'a LoadedNorm,
    config: &'a AuditConfig,
    specs: Vec<MetricSpec>,
    hyper: FfnnHyper,
}

impl Job<'_> {
    fn run_condition(
        &self,
        kind: MapperKind,
        k: usize,
        name: ConditionName,
        built: &Result<Condition, String>,
    ) -> CliResult<(Vec<Cell>, Artifacts)> {
        let condition = match built {
            Ok(c) => c,
            Err(reason) => return Ok((skip_cells(name, None, &self.specs, reason), Artifacts::default())),
        };
        let norm_name = self.loaded.norm.name();
        let x = if name.self_mapped() {
            condition.derived.values().clone()
        } else {
            self.loaded.x.clone()
        };
        let y = condition.derived.values().clone();
        let data = AlignedDataset::new(self.loaded.norm.concepts().to_vec(), x, y).map_err(CliError::runtime)?;
        let cv = cross_validate(&data, kind, k, self.config.mapper.folds, self.config.seeds.cv, &self.hyper)
            .map_err(|e| CliError::Runtime(format!("{norm_name}/{kind}/{name}: {e}")))?;
        let model = fit_mapper(kind, &data.x, &data.y, k, &self.hyper)
            .map_err(|e| CliError::Runtime(format!("{norm_name}/{kind}/{name}: {e}")))?;

        let mut artifacts = Artifacts::default();
        artifacts
            .binary
            .push((format!("models/{norm_name}/{kind}-{name}.bin"), encode_model(&model)));
        let gold = condition.gold();
        let mut cells = Vec::new();
        for spec in &self.specs {
            if let Some(why) = metric_incompatibility(spec, gold.kind()) {
                cells.extend(skip_cells(name, condition.seed, std::slice::from_ref(spec), &why));
                continue;
            }
            match evaluate(spec, &cv.yhat, gold.values()) {
                Ok(result) => {
                    let labels = match spec.axis {
                        Some(SpearmanAxis::PerFeature) => gold.features().to_vec(),
                        _ => gold.concepts().to_vec(),
                    };
                    let path = format!("scores/{norm_name}/{kind}/{name}/{}.csv", file_stem(spec));
                    let mut buf = Vec::new();
                    result.write_csv(&labels, &mut buf).map_err(CliError::runtime)?;
                    artifacts
                        .text
                        .push((path.clone(), String::from_utf8(buf).expect("csv is utf-8")));
                    cells.push(Cell {
                        condition: name,
                        metric: spec.to_string(),
                        mean: result.mean.is_finite().then_some(result.mean),
                        scored: result.per_concept.len() - result.skipped,
                        skipped: result.skipped,
                        seed: condition.seed,
                        skip_reason: (!result.mean.is_finite()).then(|| "no concept could be scored".to_string()),
                        scores_file: Some(path),
                    });
                }
                Err(e) => cells.extend(skip_cells(name, condition.seed, std::slice::from_ref(spec), &e.to_string())),
            }
        }
        Ok((cells, artifacts))
    }

    /// Elbow selection on the Sys target with the first configured mapper.
    fn select_k(&self) -> CliResult<(MapperKind, FitCurve)> {
        let norm = &self.loaded.norm;
        let kind = self.config.mapper.kinds[0];
        let grid = match kind {
            MapperKind::Plsr => clip_grid(&self.config.mapper.k_grid, norm.n_concepts().min(self.loaded.x.ncols())),
            MapperKind::Ffnn => self.config.mapper.k_grid.clone(),
        };
        let split = Split {
            train_fraction: self.config.mapper.train_fraction,
            seed: self.config.seeds.split,
        };
        let curve = select_k_elbow(&self.loaded.x, norm.values(), &grid, split, kind, &self.hyper)
            .map_err(|e| CliError::Runtime(format!("{}/{kind}: latent size selection: {e}", norm.name())))?;
        Ok((kind, curve))
    }

    fn run_mapper(
        &self,
        kind: MapperKind,
        k: usize,
        built: &[(ConditionName, Result<Condition, String>)],
    ) -> CliResult<(MapperSection, Artifacts)> {
        let results = built
            .par_iter()
            .map(|(name, c)| self.run_condition(kind, k, *name, c))
            .collect::<CliResult<Vec<_>>>()?;
        let mut cells = Vec::new();
        let mut artifacts = Artifacts::default();
        for (c, a) in results {
            cells.extend(c);
            artifacts.extend(a);
        }
        Ok((
            MapperSection {
                mapper: kind,
                chosen_k: k,
                cells,
            },
            artifacts,
        ))
    }

    fn run(&self) -> CliResult<(NormSection, Artifacts)> {
        let norm = &self.loaded.norm;
        let seed = self.config.seeds.baseline;
        let built: Vec<(ConditionName, Result<Condition, String>)> = self
            .loaded
            .config
            .condition_list(&self.config.conditions)
            .par_iter()
            .map(|&name| (name, Condition::build(name, norm, seed).map_err(|e| e.to_string())))
            .collect();
        let mut artifacts = Artifacts::default();
        for (name, c) in &built {
            if let Ok(c) = c {
                if *name != ConditionName::Sys && *name != ConditionName::Upper {
                    artifacts
                        .text
                        .push((format!("norms/{}-{name}.tsv", norm.name()), c.serialize()));
                }
            }
        }
        let (selection_mapper, curve) = self.select_k()?;
        let sections = self
            .config
            .mapper
            .kinds
            .par_iter()
            .map(|&kind| self.run_mapper(kind, curve.chosen_k, &built))
            .collect::<CliResult<Vec<_>>>()?;
        let mut mappers = Vec::new();
        for (s, a) in sections {
            mappers.push(s);
            artifacts.extend(a);
        }
        Ok((
            NormSection {
                norm: norm.name().to_string(),
                kind: norm.kind(),
                n_concepts: norm.n_concepts(),
                n_features: norm.n_features(),
                dropped_concepts: self.loaded.dropped,
                selection_mapper,
                curve,
                mappers,
            },
            artifacts,
        ))
    }
}

/// Full audit. Parallel work is merged in declaration order, so the report
/// does not depend on the thread count.
pub fn run_audit(config: &AuditConfig, base: &Path) -> CliResult<(AuditReport, Artifacts)> {
    config.validate(base)?;
    let table = load_embeddings(config, base)?;
    let loaded = config
        .datasets
        .iter()
        .map(|d| load_dataset(d, &table, base, config.mapper.folds))
        .collect::<CliResult<Vec<_>>>()?;
    let jobs = loaded
        .iter()
        .map(|l| {
            Ok(Job {
                loaded: l,
                config,
                specs: l.config.metric_specs(&config.metrics)?,
                hyper: FfnnHyper {
                    seed: config.seeds.ffnn,
                    ..config.mapper.ffnn.clone()
                },
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let results = jobs.par_iter().map(Job::run).collect::<CliResult<Vec<_>>>()?;

    let mut norms = Vec::new();
    let mut artifacts = Artifacts::default();
    for (s, a) in results {
        norms.push(s);
        artifacts.extend(a);
    }
    let mut all_conditions: Vec<ConditionName> = config
        .datasets
        .iter()
        .flat_map(|d| d.condition_list(&config.conditions).to_vec())
        .collect();
    all_conditions.sort();
    all_conditions.dedup();
    let report = AuditReport {
        schema: REPORT_SCHEMA.into(),
        provenance: Provenance {
            config_hash: config_hash(config),
            config: config.clone(),
            seeds: config.seeds,
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            notes: notes_for(&all_conditions),
        },
        norms,
    };
    Ok((report, artifacts))
}

impl AuditReport {
    pub fn cell(&self, norm: &str, mapper: MapperKind, condition: ConditionName, metric: &str) -> Option<&Cell> {
        self.norms
            .iter()
            .find(|n| n.norm == norm)?
            .mappers
            .iter()
            .find(|m| m.mapper == mapper)?
            .cells
            .iter()
            .find(|c| c.condition == condition && c.metric == metric)
    }
}

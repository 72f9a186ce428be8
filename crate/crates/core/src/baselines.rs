// SPDX-License-Identifier: MIT OR Apache-2.0

//! Control conditions: random and shuffled targets, taxonomic corruption,
//! character-length targets, and self-mapping ceilings.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{serialize_norm, AlignedDataset, FeatureNorm, NormKind, TAXONOMIC};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConditionName {
    Sys,
    Upper,
    Rand,
    Shuffle,
    #[serde(alias = "Shuf-Upper")]
    ShufUpper,
    Corrupt,
    CDiff,
}

impl ConditionName {
    /// Report column order.
    pub const ALL: [ConditionName; 7] = [
        ConditionName::Sys,
        ConditionName::Upper,
        ConditionName::Shuffle,
        ConditionName::ShufUpper,
        ConditionName::Rand,
        ConditionName::Corrupt,
        ConditionName::CDiff,
    ];

    /// Mapper input is the (derived) norm itself rather than embeddings.
    pub fn self_mapped(self) -> bool {
        matches!(self, ConditionName::Upper | ConditionName::ShufUpper)
    }

    pub fn is_seeded(self) -> bool {
        matches!(
            self,
            ConditionName::Rand | ConditionName::Shuffle | ConditionName::ShufUpper | ConditionName::Corrupt
        )
    }

    /// Checks the condition can be built from a norm of `kind`.
    pub fn check_kind(self, kind: NormKind) -> Result<()> {
        let needs = match self {
            ConditionName::Shuffle | ConditionName::ShufUpper | ConditionName::Corrupt => NormKind::Categorical,
            ConditionName::CDiff => NormKind::Continuous,
            _ => return Ok(()),
        };
        if kind != needs {
            return Err(Error::IncompatibleKind(format!(
                "{self} needs a {needs} norm, got {kind}"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ConditionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionName::Sys => "Sys",
            ConditionName::Upper => "Upper",
            ConditionName::Rand => "Rand",
            ConditionName::Shuffle => "Shuffle",
            ConditionName::ShufUpper => "Shuf-Upper",
            ConditionName::Corrupt => "Corrupt",
            ConditionName::CDiff => "CDiff",
        })
    }
}

impl FromStr for ConditionName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect();
        Ok(match key.to_ascii_lowercase().as_str() {
            "sys" => ConditionName::Sys,
            "upper" => ConditionName::Upper,
            "rand" => ConditionName::Rand,
            "shuffle" => ConditionName::Shuffle,
            "shufupper" => ConditionName::ShufUpper,
            "corrupt" => ConditionName::Corrupt,
            "cdiff" => ConditionName::CDiff,
            _ => return Err(Error::Invalid(format!("unknown condition '{s}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: ConditionName,
    pub source: FeatureNorm,
    /// Mapper target.
    pub derived: FeatureNorm,
    pub seed: Option<u64>,
}

impl Condition {
    pub fn build(name: ConditionName, source: &FeatureNorm, seed: u64) -> Result<Self> {
        name.check_kind(source.kind())?;
        let derived = match name {
            ConditionName::Sys | ConditionName::Upper => source.clone(),
            ConditionName::Rand => make_rand(source, seed)?,
            ConditionName::Shuffle | ConditionName::ShufUpper => make_shuffle(source, seed)?,
            ConditionName::Corrupt => corrupt_taxonomy(source, seed)?,
            ConditionName::CDiff => make_cdiff(source)?,
        };
        Ok(Condition {
            name,
            source: source.clone(),
            derived,
            seed: name.is_seeded().then_some(seed),
        })
    }

    /// Matrix the predictions are scored against. Rand predictions are
    /// compared with the real norm, which makes the score a chance level;
    /// every other condition is scored against its own target.
    pub fn gold(&self) -> &FeatureNorm {
        match self.name {
            ConditionName::Rand => &self.source,
            _ => &self.derived,
        }
    }

    /// The derived norm in its file format, with a provenance header.
    pub fn serialize(&self) -> String {
        let mut prov = vec![
            ("condition", self.name.to_string()),
            ("source", self.source.name().to_string()),
        ];
        if let Some(seed) = self.seed {
            prov.push(("seed", seed.to_string()));
        }
        serialize_norm(&self.derived, &prov)
    }
}

/// Dense matrix of values drawn uniformly from the source's [min, max].
pub fn make_rand(norm: &FeatureNorm, seed: u64) -> Result<FeatureNorm> {
    let (lo, hi) = norm.value_range();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_fn(norm.values().dim(), |_| {
        if hi > lo {
            rng.random_range(lo..=hi)
        } else {
            lo
        }
    });
    norm.with_values(format!("{}+rand", norm.name()), values)
}

/// Keeps each row's nonzero count, moves the nonzeros to uniformly chosen
/// positions and draws their values uniformly from the source's nonzero range.
pub fn make_shuffle(norm: &FeatureNorm, seed: u64) -> Result<FeatureNorm> {
    ConditionName::Shuffle.check_kind(norm.kind())?;
    let source = norm.values();
    let (lo, hi) = source
        .iter()
        .filter(|&&v| v != 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let n_features = norm.n_features();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::zeros(source.dim());
    for (i, row) in source.rows().into_iter().enumerate() {
        let count = row.iter().filter(|&&v| v != 0.0).count();
        let mut picks = sample(&mut rng, n_features, count).into_vec();
        picks.sort_unstable();
        for j in picks {
            values[[i, j]] = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        }
    }
    norm.with_values(format!("{}+shuffle", norm.name()), values)
}

/// Moves every nonzero taxonomic feature of a concept to a different,
/// uniformly chosen taxonomic feature, keeping its value. Other cells are
/// copied unchanged.
///
/// Targets already used in the corrupted row are avoided; when none is left
/// the value is merged (max) into a random different taxonomic feature.
pub fn corrupt_taxonomy(norm: &FeatureNorm, seed: u64) -> Result<FeatureNorm> {
    ConditionName::Corrupt.check_kind(norm.kind())?;
    let tax = norm.features_in_class(TAXONOMIC);
    if tax.is_empty() {
        return Err(Error::Invalid("no taxonomic features declared".into()));
    }
    if tax.len() == 1 {
        return Err(Error::Invalid(
            "only one taxonomic feature: no replacement available".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = norm.values().clone();
    for mut row in values.rows_mut() {
        let originals: Vec<(usize, f64)> = tax.iter().map(|&j| (j, row[j])).filter(|&(_, v)| v != 0.0).collect();
        for &j in &tax {
            row[j] = 0.0;
        }
        for (j, v) in originals {
            let free: Vec<usize> = tax.iter().copied().filter(|&t| t != j && row[t] == 0.0).collect();
            let target = if free.is_empty() {
                let others: Vec<usize> = tax.iter().copied().filter(|&t| t != j).collect();
                others[rng.random_range(0..others.len())]
            } else {
                free[rng.random_range(0..free.len())]
            };
            row[target] = row[target].max(v);
        }
    }
    norm.with_values(format!("{}+corrupt", norm.name()), values)
}

/// Unscaled character-length target: `|len(concept) − j|` for features
/// `j = 1..=n`.
pub fn char_length_profile(concept: &str, n_features: usize) -> Vec<f64> {
    let len = concept.chars().count() as f64;
    (1..=n_features).map(|j| (len - j as f64).abs()).collect()
}

/// Character-length target, min-max rescaled to the source value range.
pub fn make_cdiff(norm: &FeatureNorm) -> Result<FeatureNorm> {
    ConditionName::CDiff.check_kind(norm.kind())?;
    let n = norm.n_features();
    let mut raw = Array2::zeros(norm.values().dim());
    for (i, concept) in norm.concepts().iter().enumerate() {
        for (j, v) in char_length_profile(concept, n).into_iter().enumerate() {
            raw[[i, j]] = v;
        }
    }
    let (lo, hi) = norm.value_range();
    let (rlo, rhi) = raw
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b): (f64, f64), &v| (a.min(v), b.max(v)));
    let values = if rhi > rlo {
        raw.mapv(|v| {
            let t = (v - rlo) / (rhi - rlo);
            (lo * (1.0 - t) + hi * t).clamp(lo, hi)
        })
    } else {
        Array2::from_elem(raw.dim(), lo)
    };
    norm.with_values(format!("{}+cdiff", norm.name()), values)
}

/// Input and target are both the norm matrix.
pub fn upper_bound_target(norm: &FeatureNorm) -> AlignedDataset {
    AlignedDataset {
        concepts: norm.concepts().to_vec(),
        x: norm.values().clone(),
        y: norm.values().clone(),
    }
}

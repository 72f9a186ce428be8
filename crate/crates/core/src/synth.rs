// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic feature norms generated from an embedding table, so a whole audit
//! can run offline.
//!
//! Scores are `S = X·B + noise·E` with Gaussian `B` and `E`. A categorical norm
//! keeps the top `nonzeros` scores of each row as binary features; a
//! continuous norm is `S` min-max scaled into `[0, 5]`.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::metrics::top_k;
use crate::norms::{FeatureNorm, NormKind, TAXONOMIC};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthNormSpec {
    pub name: String,
    pub kind: NormKind,
    /// Uses the first `n_concepts` words of the table.
    pub n_concepts: usize,
    pub n_features: usize,
    /// Nonzeros per concept (categorical only).
    #[serde(default = "default_nonzeros")]
    pub nonzeros: usize,
    #[serde(default)]
    pub noise: f64,
    /// The first this-many features are declared taxonomic.
    #[serde(default)]
    pub taxonomic: usize,
    pub seed: u64,
}

fn default_nonzeros() -> usize {
    5
}

pub fn synth_norm(table: &EmbeddingTable, spec: &SynthNormSpec) -> Result<FeatureNorm> {
    if spec.n_concepts == 0 || spec.n_concepts > table.len() {
        return Err(Error::Invalid(format!(
            "n_concepts = {} outside 1..={}",
            spec.n_concepts,
            table.len()
        )));
    }
    if spec.n_features == 0 {
        return Err(Error::Invalid("n_features must be ≥ 1".into()));
    }
    if spec.kind == NormKind::Categorical && (spec.nonzeros == 0 || spec.nonzeros > spec.n_features) {
        return Err(Error::Invalid(format!(
            "nonzeros = {} outside 1..={}",
            spec.nonzeros, spec.n_features
        )));
    }
    if spec.taxonomic > spec.n_features {
        return Err(Error::Invalid("more taxonomic features than features".into()));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Invalid("noise must be a non-negative number".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = table.dim();
    let scale = 1.0 / (dim as f64).sqrt();
    let b = Array2::from_shape_fn((dim, spec.n_features), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        scale * z
    });
    let x = table.matrix().slice(ndarray::s![..spec.n_concepts, ..]);
    let mut scores = x.dot(&b);
    if spec.noise > 0.0 {
        for v in scores.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += spec.noise * z;
        }
    }

    let values = match spec.kind {
        NormKind::Categorical => {
            let mut v = Array2::zeros(scores.dim());
            for (i, row) in scores.rows().into_iter().enumerate() {
                let row: Vec<f64> = row.to_vec();
                for j in top_k(&row, spec.nonzeros) {
                    v[[i, j]] = 1.0;
                }
            }
            v
        }
        NormKind::Continuous => {
            let (lo, hi) = scores
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b): (f64, f64), &s| (a.min(s), b.max(s)));
            if hi > lo {
                scores.mapv(|s| 5.0 * (s - lo) / (hi - lo))
            } else {
                scores.mapv(|_| 0.0)
            }
        }
    };

    let width = spec.n_features.saturating_sub(1).to_string().len();
    let features: Vec<String> = (0..spec.n_features).map(|j| format!("f{j:0width$}")).collect();
    let classes: BTreeMap<String, String> = features
        .iter()
        .enumerate()
        .map(|(j, f)| {
            let class = if j < spec.taxonomic { TAXONOMIC } else { "other" };
            (f.clone(), class.to_string())
        })
        .collect();
    FeatureNorm::new(
        spec.name.clone(),
        spec.kind,
        table.words()[..spec.n_concepts].to_vec(),
        features,
        values,
        (spec.taxonomic > 0).then_some(classes),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{synth_embeddings, SynthSpec};

    fn table() -> EmbeddingTable {
        synth_embeddings(&SynthSpec {
            n_words: 40,
            dim: 8,
            seed: 1,
            n_clusters: 4,
            cluster_spread: 0.5,
        })
        .unwrap()
    }

    fn spec(kind: NormKind) -> SynthNormSpec {
        SynthNormSpec {
            name: "syn".into(),
            kind,
            n_concepts: 30,
            n_features: 12,
            nonzeros: 3,
            noise: 0.1,
            taxonomic: 4,
            seed: 2,
        }
    }

    #[test]
    fn categorical_rows_have_fixed_nonzeros() {
        let n = synth_norm(&table(), &spec(NormKind::Categorical)).unwrap();
        assert_eq!(n.values().dim(), (30, 12));
        for row in n.values().rows() {
            assert_eq!(row.iter().filter(|&&v| v == 1.0).count(), 3);
        }
        assert_eq!(n.features_in_class(TAXONOMIC), vec![0, 1, 2, 3]);
        assert_eq!(n.concepts()[0], "w00");
    }

    #[test]
    fn continuous_is_scaled() {
        let n = synth_norm(&table(), &spec(NormKind::Continuous)).unwrap();
        assert_eq!(n.value_range(), (0.0, 5.0));
    }

    #[test]
    fn deterministic_and_bounded() {
        let s = spec(NormKind::Categorical);
        assert_eq!(synth_norm(&table(), &s).unwrap(), synth_norm(&table(), &s).unwrap());
        let mut too_many = s.clone();
        too_many.n_concepts = 41;
        assert!(synth_norm(&table(), &too_many).is_err());
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Type-level embedding tables.
//!
//! Tables are read from the plain-text interchange format (`count dim` header,
//! then `token v1 … vdim` per line) or synthesized from a seeded [`SynthSpec`].
//! Components are held as `f64` regardless of the file's precision.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecmath::{cosine, euclidean};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    File(String),
    Synthetic(SynthSpec),
    /// Subword-averaged concept vectors built from another table.
    Pooled,
}

/// Word → vector store with words in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    matrix: Array2<f64>,
    index: HashMap<String, usize>,
    provenance: Provenance,
}

impl EmbeddingTable {
    pub fn new(entries: Vec<(String, Vec<f64>)>, provenance: Provenance) -> Result<Self> {
        let Some(dim) = entries.first().map(|(_, v)| v.len()) else {
            return Err(Error::Invalid("embedding table is empty".into()));
        };
        if dim == 0 {
            return Err(Error::Invalid("embedding dimension must be positive".into()));
        }
        let mut sorted: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (word, vector) in entries {
            if vector.len() != dim {
                return Err(Error::Shape(format!(
                    "vector for '{word}' has {} components, expected {dim}",
                    vector.len()
                )));
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Invalid(format!("non-finite component in '{word}'")));
            }
            if sorted.insert(word.clone(), vector).is_some() {
                return Err(Error::Invalid(format!("duplicate token '{word}'")));
            }
        }
        let words: Vec<String> = sorted.keys().cloned().collect();
        let mut matrix = Array2::zeros((words.len(), dim));
        for (i, v) in sorted.values().enumerate() {
            for (j, &x) in v.iter().enumerate() {
                matrix[[i, j]] = x;
            }
        }
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(EmbeddingTable {
            dim,
            words,
            matrix,
            index,
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Rows follow [`EmbeddingTable::words`].
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word)
            .map(|i| self.matrix.row(i).to_slice().expect("standard layout"))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.len(), self.dim);
        for (i, word) in self.words.iter().enumerate() {
            out.push_str(word);
            for v in self.matrix.row(i) {
                let _ = write!(out, " {v}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_text_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_text_embeddings(&text, &path.display().to_string())
}

pub fn parse_text_embeddings(text: &str, origin: &str) -> Result<EmbeddingTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 0, "missing 'count dim' header"))?;
    let mut head = header.split_whitespace();
    let (count, dim) = match (head.next(), head.next(), head.next()) {
        (Some(c), Some(d), None) => (
            c.parse::<usize>()
                .map_err(|_| Error::parse(origin, 1, format!("bad count '{c}'")))?,
            d.parse::<usize>()
                .map_err(|_| Error::parse(origin, 1, format!("bad dim '{d}'")))?,
        ),
        _ => return Err(Error::parse(origin, 1, "header must be 'count dim'")),
    };
    if dim == 0 {
        return Err(Error::parse(origin, 1, "dim must be positive"));
    }

    let mut entries = Vec::with_capacity(count);
    let mut seen = HashMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default().to_string();
        let mut vector = Vec::with_capacity(dim);
        for f in fields {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("non-numeric component '{f}'")))?;
            if !v.is_finite() {
                return Err(Error::parse(origin, lineno, format!("non-finite component '{f}'")));
            }
            vector.push(v);
        }
        if vector.len() != dim {
            return Err(Error::parse(
                origin,
                lineno,
                format!("dim mismatch: {} components, header says {dim}", vector.len()),
            ));
        }
        if let Some(prev) = seen.insert(token.clone(), lineno) {
            return Err(Error::parse(
                origin,
                lineno,
                format!("duplicate token '{token}' (first on line {prev})"),
            ));
        }
        entries.push((token, vector));
    }
    if entries.len() != count {
        return Err(Error::parse(
            origin,
            0,
            format!("count mismatch: header says {count}, found {}", entries.len()),
        ));
    }
    EmbeddingTable::new(entries, Provenance::File(origin.to_string()))
}

/// Parameters of a seeded synthetic table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_words: usize,
    pub dim: usize,
    pub seed: u64,
    #[serde(default)]
    pub n_clusters: usize,
    #[serde(default = "default_spread")]
    pub cluster_spread: f64,
}

fn default_spread() -> f64 {
    1.0
}

impl SynthSpec {
    /// Cluster of the `i`-th word (words are assigned round-robin).
    pub fn cluster_of(&self, i: usize) -> Option<usize> {
        (self.n_clusters > 0).then(|| i % self.n_clusters)
    }

    /// Name of the `i`-th word; zero-padded so lexicographic and index order agree.
    pub fn word(&self, i: usize) -> String {
        let width = (self.n_words.max(2) - 1).to_string().len();
        format!("w{i:0width$}")
    }
}

/// Gaussian vectors, optionally as `centroid + spread * noise` around
/// `n_clusters` Gaussian centroids.
pub fn synth_embeddings(spec: &SynthSpec) -> Result<EmbeddingTable> {
    if spec.dim == 0 || spec.n_words == 0 {
        return Err(Error::Invalid("synthetic table needs n_words > 0 and dim > 0".into()));
    }
    if spec.n_clusters > spec.n_words {
        return Err(Error::Invalid("n_clusters exceeds n_words".into()));
    }
    if spec.n_clusters > 0 && !(spec.cluster_spread > 0.0 && spec.cluster_spread.is_finite()) {
        return Err(Error::Invalid("cluster_spread must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut rng) };
    let centroids: Vec<Vec<f64>> = (0..spec.n_clusters)
        .map(|_| (0..spec.dim).map(|_| gauss()).collect())
        .collect();
    let entries = (0..spec.n_words)
        .map(|i| {
            let v = match spec.cluster_of(i) {
                Some(c) => centroids[c]
                    .iter()
                    .map(|&m| m + spec.cluster_spread * gauss())
                    .collect(),
                None => (0..spec.dim).map(|_| gauss()).collect(),
            };
            (spec.word(i), v)
        })
        .collect();
    EmbeddingTable::new(entries, Provenance::Synthetic(spec.clone()))
}

/// Concept → subword pieces, read from `concept<TAB>piece piece …` lines.
pub type Segmentations = BTreeMap<String, Vec<String>>;

pub fn load_segmentations(path: &Path) -> Result<Segmentations> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_segmentations(&text, &path.display().to_string())
}

pub fn parse_segmentations(text: &str, origin: &str) -> Result<Segmentations> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (concept, pieces) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, idx + 1, "expected concept<TAB>pieces"))?;
        let pieces: Vec<String> = pieces.split_whitespace().map(str::to_string).collect();
        if out.insert(concept.trim().to_string(), pieces).is_some() {
            return Err(Error::parse(
                origin,
                idx + 1,
                format!("duplicate concept '{}'", concept.trim()),
            ));
        }
    }
    Ok(out)
}

/// Arithmetic mean of the subword vectors.
pub fn concept_vector(table: &EmbeddingTable, concept: &str, segmentation: &[String]) -> Result<Vec<f64>> {
    if segmentation.is_empty() {
        return Err(Error::Invalid(format!("empty segmentation for '{concept}'")));
    }
    let mut acc = vec![0.0; table.dim()];
    for piece in segmentation {
        let v = table.vector(piece).ok_or_else(|| {
            Error::Invalid(format!("unknown subword '{piece}' in '{concept}'"))
        })?;
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = segmentation.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Builds a concept-level table by pooling every segmented concept.
pub fn pool_concepts(table: &EmbeddingTable, segmentations: &Segmentations) -> Result<EmbeddingTable> {
    let entries = segmentations
        .iter()
        .map(|(concept, pieces)| Ok((concept.clone(), concept_vector(table, concept, pieces)?)))
        .collect::<Result<Vec<_>>>()?;
    EmbeddingTable::new(entries, Provenance::Pooled)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborMetric {
    /// Higher score is nearer.
    Cosine,
    /// Lower score is nearer.
    Euclidean,
}

/// The `k` nearest words to `word`, excluding `word` itself. Ties are broken
/// by lexicographic word order.
pub fn nearest_neighbors(
    table: &EmbeddingTable,
    word: &str,
    k: usize,
    metric: NeighborMetric,
) -> Result<Vec<(String, f64)>> {
    if k >= table.len() {
        return Err(Error::Invalid(format!(
            "k = {k} must be smaller than the table size {}",
            table.len()
        )));
    }
    let q = table
        .index_of(word)
        .ok_or_else(|| Error::Invalid(format!("unknown word '{word}'")))?;
    let query = table.matrix.row(q);
    let query = query.as_slice().expect("standard layout");
    let mut scored: Vec<(usize, f64)> = (0..table.len())
        .filter(|&i| i != q)
        .map(|i| {
            let v = table.matrix.row(i);
            let v = v.as_slice().expect("standard layout");
            let s = match metric {
                NeighborMetric::Cosine => cosine(query, v),
                NeighborMetric::Euclidean => euclidean(query, v),
            };
            (i, s)
        })
        .collect();
    // Words are stored sorted, so index order is the lexicographic tie-break.
    scored.sort_by(|a, b| {
        let ord = match metric {
            NeighborMetric::Cosine => b.1.total_cmp(&a.1),
            NeighborMetric::Euclidean => a.1.total_cmp(&b.1),
        };
        ord.then(a.0.cmp(&b.0))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(i, s)| (table.words[i].clone(), s))
        .collect())
}

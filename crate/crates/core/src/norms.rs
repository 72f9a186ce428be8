// SPDX-License-Identifier: MIT OR Apache-2.0

//! Feature-norm datasets as concept × feature matrices.
//!
//! Two on-disk layouts are supported:
//!
//! - **categorical**: one `concept<TAB>feature<TAB>frequency` triple per line,
//!   optional `#` comment lines. Triples are collected into a frequency-weighted
//!   matrix (or a binary one with [`CategoricalFormat::binarize`]).
//! - **continuous**: a header row `concept<TAB>f1<TAB>f2 …` followed by one dense
//!   row of reals per concept.
//!
//! Concepts and features are always stored in lexicographic (byte) order, so two
//! files that differ only by row order load to the same [`FeatureNorm`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};

/// Class label that marks a feature as taxonomic in feature-class side files.
pub const TAXONOMIC: &str = "taxonomic";

/// Line prefix used to declare a feature column that has no nonzero cell.
/// Written only for derived norms; ordinary comment lines start with `#` too,
/// so other readers simply ignore it.
const FEATURE_DECL: &str = "#@feature";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Categorical,
    Continuous,
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormKind::Categorical => f.write_str("categorical"),
            NormKind::Continuous => f.write_str("continuous"),
        }
    }
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "categorical" => Ok(NormKind::Categorical),
            "continuous" => Ok(NormKind::Continuous),
            other => Err(Error::Invalid(format!("unknown norm kind '{other}'"))),
        }
    }
}

/// A concept × feature target matrix with its labels.
///
/// Immutable once built; every constructor goes through [`FeatureNorm::new`],
/// which enforces the shape, uniqueness and kind-specific value invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNorm {
    name: String,
    kind: NormKind,
    concepts: Vec<String>,
    features: Vec<String>,
    values: Array2<f64>,
    feature_classes: Option<BTreeMap<String, String>>,
}

impl FeatureNorm {
    pub fn new(
        name: impl Into<String>,
        kind: NormKind,
        concepts: Vec<String>,
        features: Vec<String>,
        values: Array2<f64>,
        feature_classes: Option<BTreeMap<String, String>>,
    ) -> Result<Self> {
        if values.dim() != (concepts.len(), features.len()) {
            return Err(Error::Shape(format!(
                "values are {:?} but labels are ({}, {})",
                values.dim(),
                concepts.len(),
                features.len()
            )));
        }
        if concepts.is_empty() || features.is_empty() {
            return Err(Error::Invalid("norm has no concepts or no features".into()));
        }
        check_unique(&concepts, "concept")?;
        check_unique(&features, "feature")?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite norm value {v}")));
        }
        if kind == NormKind::Categorical {
            if values.iter().any(|&v| v < 0.0) {
                return Err(Error::Invalid(
                    "categorical norm contains a negative value".into(),
                ));
            }
            for (row, concept) in values.rows().into_iter().zip(&concepts) {
                if row.iter().all(|&v| v == 0.0) {
                    return Err(Error::Invalid(format!(
                        "concept '{concept}' has no nonzero feature"
                    )));
                }
            }
        }
        Ok(FeatureNorm {
            name: name.into(),
            kind,
            concepts,
            features,
            values,
            feature_classes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> NormKind {
        self.kind
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn feature_classes(&self) -> Option<&BTreeMap<String, String>> {
        self.feature_classes.as_ref()
    }

    pub fn n_concepts(&self) -> usize {
        self.concepts.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    /// Same labels and metadata, new values. Used by the baseline generators.
    pub fn with_values(&self, name: impl Into<String>, values: Array2<f64>) -> Result<Self> {
        FeatureNorm::new(
            name,
            self.kind,
            self.concepts.clone(),
            self.features.clone(),
            values,
            self.feature_classes.clone(),
        )
    }

    pub fn with_feature_classes(mut self, classes: BTreeMap<String, String>) -> Self {
        self.feature_classes = Some(classes);
        self
    }

    /// The given concept rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.concepts.len()) {
            return Err(Error::Invalid(format!("row {bad} out of range")));
        }
        FeatureNorm::new(
            self.name.clone(),
            self.kind,
            rows.iter().map(|&r| self.concepts[r].clone()).collect(),
            self.features.clone(),
            self.values.select(Axis(0), rows),
            self.feature_classes.clone(),
        )
    }

    /// Maps every nonzero cell to 1.
    pub fn binarize(&self) -> Self {
        let values = self.values.mapv(|v| if v != 0.0 { 1.0 } else { 0.0 });
        FeatureNorm {
            values,
            ..self.clone()
        }
    }

    /// Smallest and largest cell value.
    pub fn value_range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Indices of features whose class equals `class`.
    pub fn features_in_class(&self, class: &str) -> Vec<usize> {
        let Some(classes) = &self.feature_classes else {
            return Vec::new();
        };
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| classes.get(*f).map(String::as_str) == Some(class))
            .map(|(i, _)| i)
            .collect()
    }
}

fn check_unique(labels: &[String], what: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::Invalid(format!("duplicate {what} '{l}'")));
        }
    }
    Ok(())
}

/// Lowercase, underscores to spaces, whitespace runs collapsed.
pub fn canonicalize_concept(raw: &str) -> String {
    raw.replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Column layout of a categorical triples file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CategoricalFormat {
    pub delimiter: char,
    pub concept_col: usize,
    pub feature_col: usize,
    pub frequency_col: usize,
    /// Skip the first non-comment line.
    pub has_header: bool,
    pub binarize: bool,
}

impl Default for CategoricalFormat {
    fn default() -> Self {
        CategoricalFormat {
            delimiter: '\t',
            concept_col: 0,
            feature_col: 1,
            frequency_col: 2,
            has_header: false,
            binarize: false,
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "norm".to_string())
}

pub fn load_categorical_norm(path: &Path, format: &CategoricalFormat) -> Result<FeatureNorm> {
    let text = read_text(path)?;
    parse_categorical(&text, &stem(path), &path.display().to_string(), format)
}

/// Parses (concept, feature, frequency) triples.
///
/// Duplicate (concept, feature) pairs are rejected with the line number of the
/// second occurrence; pairs are compared after concept canonicalization.
pub fn parse_categorical(
    text: &str,
    name: &str,
    origin: &str,
    format: &CategoricalFormat,
) -> Result<FeatureNorm> {
    let mut cells: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut first_seen: HashMap<(String, String), usize> = HashMap::new();
    let mut declared_features = BTreeSet::new();
    let mut header_pending = format.has_header;
    let needed = format
        .concept_col
        .max(format.feature_col)
        .max(format.frequency_col)
        + 1;

    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if let Some(rest) = line.strip_prefix(FEATURE_DECL) {
            let feature = rest.trim_start_matches(format.delimiter).trim();
            if !feature.is_empty() {
                declared_features.insert(feature.to_string());
            }
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields: Vec<&str> = line.split(format.delimiter).collect();
        if fields.len() < needed {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected at least {needed} fields, found {}", fields.len()),
            ));
        }
        let concept = canonicalize_concept(fields[format.concept_col]);
        let feature = fields[format.feature_col].trim().to_string();
        if concept.is_empty() || feature.is_empty() {
            return Err(Error::parse(origin, lineno, "empty concept or feature"));
        }
        let raw = fields[format.frequency_col].trim();
        let freq: f64 = raw
            .parse()
            .map_err(|_| Error::parse(origin, lineno, format!("non-numeric frequency '{raw}'")))?;
        if !freq.is_finite() || freq < 0.0 {
            return Err(Error::parse(
                origin,
                lineno,
                format!("frequency must be finite and non-negative, got '{raw}'"),
            ));
        }
        let key = (concept, feature);
        if let Some(prev) = first_seen.get(&key) {
            return Err(Error::parse(
                origin,
                lineno,
                format!(
                    "duplicate pair ({}, {}) first seen on line {prev}",
                    key.0, key.1
                ),
            ));
        }
        first_seen.insert(key.clone(), lineno);
        cells.insert(key, freq);
    }

    if cells.is_empty() {
        return Err(Error::parse(origin, 0, "no records"));
    }

    let concepts: Vec<String> = cells
        .keys()
        .map(|(c, _)| c.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let features: Vec<String> = cells
        .keys()
        .map(|(_, f)| f.clone())
        .chain(declared_features)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let c_index = index_of(&concepts);
    let f_index = index_of(&features);

    let mut values = Array2::zeros((concepts.len(), features.len()));
    for ((c, f), v) in cells {
        values[[c_index[&c], f_index[&f]]] = if format.binarize && v != 0.0 { 1.0 } else { v };
    }
    FeatureNorm::new(name, NormKind::Categorical, concepts, features, values, None)
}

fn index_of(labels: &[String]) -> HashMap<String, usize> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.clone(), i))
        .collect()
}

pub fn load_continuous_norm(path: &Path) -> Result<FeatureNorm> {
    let text = read_text(path)?;
    parse_continuous(&text, &stem(path), &path.display().to_string())
}

/// Parses a dense tab-separated table with a `concept` header column.
pub fn parse_continuous(text: &str, name: &str, origin: &str) -> Result<FeatureNorm> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(origin, 0, "no records"))?;
    let header_fields: Vec<&str> = header.split('\t').collect();
    if header_fields.len() < 2 {
        return Err(Error::parse(origin, 1, "header has no feature columns"));
    }
    let header_features: Vec<String> = header_fields[1..]
        .iter()
        .map(|f| f.trim().to_string())
        .collect();
    check_unique(&header_features, "feature")?;

    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != header_fields.len() {
            return Err(Error::parse(
                origin,
                lineno,
                format!(
                    "ragged row: {} values against {} features",
                    fields.len() - 1,
                    header_features.len()
                ),
            ));
        }
        let concept = canonicalize_concept(fields[0]);
        if concept.is_empty() {
            return Err(Error::parse(origin, lineno, "empty concept"));
        }
        let mut row = Vec::with_capacity(header_features.len());
        for (j, cell) in fields[1..].iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan")
            {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("missing cell for feature '{}'", header_features[j]),
                ));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| Error::parse(origin, lineno, format!("non-numeric value '{cell}'")))?;
            if !v.is_finite() {
                return Err(Error::parse(origin, lineno, format!("non-finite value '{cell}'")));
            }
            row.push(v);
        }
        if rows.insert(concept.clone(), row).is_some() {
            return Err(Error::parse(
                origin,
                lineno,
                format!("duplicate concept '{concept}'"),
            ));
        }
    }
    if rows.is_empty() {
        return Err(Error::parse(origin, 0, "no records"));
    }

    // Reorder feature columns lexicographically.
    let mut order: Vec<usize> = (0..header_features.len()).collect();
    order.sort_by(|&a, &b| header_features[a].cmp(&header_features[b]));
    let features: Vec<String> = order.iter().map(|&j| header_features[j].clone()).collect();

    let concepts: Vec<String> = rows.keys().cloned().collect();
    let mut values = Array2::zeros((concepts.len(), features.len()));
    for (i, row) in rows.values().enumerate() {
        for (new_j, &old_j) in order.iter().enumerate() {
            values[[i, new_j]] = row[old_j];
        }
    }
    FeatureNorm::new(name, NormKind::Continuous, concepts, features, values, None)
}

pub fn load_norm(path: &Path, kind: NormKind, format: &CategoricalFormat) -> Result<FeatureNorm> {
    match kind {
        NormKind::Categorical => load_categorical_norm(path, format),
        NormKind::Continuous => load_continuous_norm(path),
    }
}

pub fn load_feature_classes(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = read_text(path)?;
    parse_feature_classes(&text, &path.display().to_string())
}

/// Two tab-separated columns: feature, class.
pub fn parse_feature_classes(text: &str, origin: &str) -> Result<BTreeMap<String, String>> {
    let mut classes = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(2, '\t');
        let feature = parts.next().unwrap_or_default().trim();
        let class = parts
            .next()
            .ok_or_else(|| Error::parse(origin, idx + 1, "expected feature<TAB>class"))?
            .trim();
        if feature.is_empty() || class.is_empty() {
            return Err(Error::parse(origin, idx + 1, "empty feature or class"));
        }
        if classes
            .insert(feature.to_string(), class.to_string())
            .is_some()
        {
            return Err(Error::parse(
                origin,
                idx + 1,
                format!("duplicate feature '{feature}'"),
            ));
        }
    }
    Ok(classes)
}

/// Renders a norm in its kind's file format. `provenance` pairs become a
/// leading `# key=value` comment line.
pub fn serialize_norm(norm: &FeatureNorm, provenance: &[(&str, String)]) -> String {
    let mut out = String::new();
    if !provenance.is_empty() {
        let fields: Vec<String> = provenance.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "# {}", fields.join(" "));
    }
    match norm.kind {
        NormKind::Categorical => {
            for (j, feature) in norm.features.iter().enumerate() {
                if norm.values.column(j).iter().all(|&v| v == 0.0) {
                    let _ = writeln!(out, "{FEATURE_DECL}\t{feature}");
                }
            }
            for (i, concept) in norm.concepts.iter().enumerate() {
                for (j, feature) in norm.features.iter().enumerate() {
                    let v = norm.values[[i, j]];
                    if v != 0.0 {
                        let _ = writeln!(out, "{concept}\t{feature}\t{v}");
                    }
                }
            }
        }
        NormKind::Continuous => {
            let _ = writeln!(out, "concept\t{}", norm.features.join("\t"));
            for (i, concept) in norm.concepts.iter().enumerate() {
                out.push_str(concept);
                for v in norm.values.row(i) {
                    let _ = write!(out, "\t{v}");
                }
                out.push('\n');
            }
        }
    }
    out
}

pub fn write_norm(norm: &FeatureNorm, path: &Path, provenance: &[(&str, String)]) -> Result<()> {
    fs::write(path, serialize_norm(norm, provenance)).map_err(|e| Error::io(path, e))
}

/// Parses text produced by [`serialize_norm`] back into a norm of `kind`.
pub fn parse_norm(text: &str, name: &str, kind: NormKind) -> Result<FeatureNorm> {
    match kind {
        NormKind::Categorical => parse_categorical(text, name, name, &CategoricalFormat::default()),
        NormKind::Continuous => parse_continuous(text, name, name),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityStats {
    pub per_row_nonzeros: Vec<usize>,
    pub nonzero_value_min: f64,
    pub nonzero_value_max: f64,
    pub density: f64,
}

pub fn sparsity_profile(norm: &FeatureNorm) -> Result<SparsityStats> {
    if norm.kind != NormKind::Categorical {
        return Err(Error::IncompatibleKind(
            "sparsity profile is undefined for dense continuous norms".into(),
        ));
    }
    let per_row_nonzeros: Vec<usize> = norm
        .values
        .axis_iter(Axis(0))
        .map(|row| row.iter().filter(|&&v| v != 0.0).count())
        .collect();
    let (lo, hi) = norm
        .values
        .iter()
        .filter(|&&v| v != 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let total: usize = per_row_nonzeros.iter().sum();
    Ok(SparsityStats {
        per_row_nonzeros,
        nonzero_value_min: lo,
        nonzero_value_max: hi,
        density: total as f64 / norm.values.len() as f64,
    })
}

/// Row-paired inputs and targets for a mapper.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub concepts: Vec<String>,
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl AlignedDataset {
    pub fn new(concepts: Vec<String>, x: Array2<f64>, y: Array2<f64>) -> Result<Self> {
        if x.nrows() != concepts.len() || y.nrows() != concepts.len() {
            return Err(Error::Shape(format!(
                "{} concepts but X has {} rows and Y has {} rows",
                concepts.len(),
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(AlignedDataset { concepts, x, y })
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }
}

/// Pairs norm rows with embedding rows over the shared (canonicalized) vocabulary.
///
/// Also returns the row indices into `norm` that were kept, so derived norms can
/// be restricted consistently.
pub fn align_vocabulary(norm: &FeatureNorm, table: &EmbeddingTable) -> Result<(AlignedDataset, Vec<usize>)> {
    let mut by_canonical: HashMap<String, usize> = HashMap::new();
    for (i, word) in table.words().iter().enumerate() {
        by_canonical.entry(canonicalize_concept(word)).or_insert(i);
    }
    let mut kept = Vec::new();
    let mut x_rows = Vec::new();
    for (i, concept) in norm.concepts.iter().enumerate() {
        if let Some(&row) = by_canonical.get(concept) {
            kept.push(i);
            x_rows.push(row);
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let concepts = kept.iter().map(|&i| norm.concepts[i].clone()).collect();
    let x = table.matrix().select(Axis(0), &x_rows);
    let y = norm.values.select(Axis(0), &kept);
    Ok((AlignedDataset::new(concepts, x, y)?, kept))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    const TOY: &str = "dog\tbarks\t5\ndog\tfurry\t3\ncat\tfurry\t2\n";

    fn toy() -> FeatureNorm {
        parse_categorical(TOY, "toy", "toy", &CategoricalFormat::default()).unwrap()
    }

    #[test]
    fn toy_triples_sorted_matrix() {
        let n = toy();
        assert_eq!(n.concepts(), ["cat", "dog"]);
        assert_eq!(n.features(), ["barks", "furry"]);
        assert_eq!(n.values(), &array![[0.0, 2.0], [5.0, 3.0]]);
        assert_eq!(n.kind(), NormKind::Categorical);
    }

    #[test]
    fn empty_file_has_no_records() {
        let err = parse_categorical("# only a comment\n\n", "e", "e", &CategoricalFormat::default())
            .unwrap_err();
        assert!(err.to_string().contains("no records"), "{err}");
    }

    #[test]
    fn non_numeric_frequency_reports_line() {
        let err = parse_categorical("a\tb\t1\na\tc\tmany\n", "e", "f.tsv", &CategoricalFormat::default())
            .unwrap_err();
        assert!(err.to_string().starts_with("f.tsv:2:"), "{err}");
    }

    #[test]
    fn duplicate_pair_rejected_with_row_number() {
        let err = parse_categorical(
            "# header comment\ndog\tbarks\t1\nDog\tbarks\t2\n",
            "e",
            "f",
            &CategoricalFormat::default(),
        )
        .unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("f:3:"), "{msg}");
        assert!(msg.contains("duplicate"), "{msg}");
    }

    #[test]
    fn binarize_maps_nonzeros_to_one() {
        let fmt = CategoricalFormat {
            binarize: true,
            ..Default::default()
        };
        let n = parse_categorical(TOY, "toy", "toy", &fmt).unwrap();
        assert_eq!(n.values(), &array![[0.0, 1.0], [1.0, 1.0]]);
        assert_eq!(toy().binarize().values(), n.values());
    }

    #[test]
    fn custom_columns_and_header() {
        let text = "Concept,Feature,BR,Prod_Freq\nDOG,barks,x,5\nCat,furry,y,2\n";
        let fmt = CategoricalFormat {
            delimiter: ',',
            frequency_col: 3,
            has_header: true,
            ..Default::default()
        };
        let n = parse_categorical(text, "m", "m", &fmt).unwrap();
        assert_eq!(n.concepts(), ["cat", "dog"]);
        assert_eq!(n.values(), &array![[0.0, 2.0], [5.0, 0.0]]);
    }

    #[test]
    fn canonicalization() {
        assert_eq!(canonicalize_concept("  Ice_Cream  "), "ice cream");
        assert_eq!(canonicalize_concept("ice   cream"), "ice cream");
    }

    #[test]
    fn continuous_toy_parses_exactly() {
        let text = "concept\tsize\tcolor\tmotion\nzebra\t1.5\t-2\t0.25\napple\t0\t3.75\t1e-3\n";
        let n = parse_continuous(text, "b", "b").unwrap();
        assert_eq!(n.concepts(), ["apple", "zebra"]);
        assert_eq!(n.features(), ["color", "motion", "size"]);
        assert_eq!(n.values(), &array![[3.75, 1e-3, 0.0], [-2.0, 0.25, 1.5]]);
        assert_eq!(n.kind(), NormKind::Continuous);
    }

    #[test]
    fn continuous_ragged_row() {
        let header: Vec<String> = (0..62).map(|j| format!("f{j}")).collect();
        let row: Vec<String> = (0..61).map(|j| format!("{j}")).collect();
        let text = format!("concept\t{}\nx\t{}\n", header.join("\t"), row.join("\t"));
        let err = parse_continuous(&text, "b", "b").unwrap_err();
        assert!(err.to_string().contains("ragged row"), "{err}");
    }

    #[test]
    fn continuous_missing_cell() {
        let err = parse_continuous("concept\ta\tb\nx\t1\t\n", "b", "b").unwrap_err();
        assert!(err.to_string().contains("missing cell"), "{err}");
    }

    #[test]
    fn sparsity_of_toy() {
        let s = sparsity_profile(&toy()).unwrap();
        assert_eq!(s.per_row_nonzeros, vec![1, 2]);
        assert_eq!(s.nonzero_value_min, 2.0);
        assert_eq!(s.nonzero_value_max, 5.0);
        assert_eq!(s.density, 0.75);
    }

    #[test]
    fn sparsity_of_spec_matrix_rows() {
        // rows [[5,3],[0,2]] in the given order
        let n = FeatureNorm::new(
            "m",
            NormKind::Categorical,
            vec!["a".into(), "b".into()],
            vec!["f".into(), "g".into()],
            array![[5.0, 3.0], [0.0, 2.0]],
            None,
        )
        .unwrap();
        let s = sparsity_profile(&n).unwrap();
        assert_eq!(s.per_row_nonzeros, vec![2, 1]);
        assert_eq!((s.nonzero_value_min, s.nonzero_value_max), (2.0, 5.0));
        assert_eq!(s.density, 0.75);
    }

    #[test]
    fn sparsity_binary_min_equals_max() {
        let s = sparsity_profile(&toy().binarize()).unwrap();
        assert_eq!(s.nonzero_value_min, 1.0);
        assert_eq!(s.nonzero_value_max, 1.0);
    }

    #[test]
    fn sparsity_rejects_continuous() {
        let n = parse_continuous("concept\ta\nx\t1\n", "b", "b").unwrap();
        assert!(matches!(sparsity_profile(&n), Err(Error::IncompatibleKind(_))));
    }

    #[test]
    fn all_zero_row_is_rejected_at_construction() {
        let err = FeatureNorm::new(
            "z",
            NormKind::Categorical,
            vec!["a".into()],
            vec!["f".into()],
            array![[0.0]],
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("no nonzero"));
    }

    #[test]
    fn feature_classes_side_file() {
        let classes = parse_feature_classes("is_animal\ttaxonomic\n# c\nbarks\tencyclopaedic\n", "c").unwrap();
        let n = toy().with_feature_classes(classes);
        assert_eq!(n.features_in_class(TAXONOMIC), Vec::<usize>::new());
        assert!(parse_feature_classes("lonely\n", "c").is_err());
    }

    #[test]
    fn serialize_keeps_empty_feature_columns() {
        let n = toy()
            .with_values("d", array![[0.0, 2.0], [5.0, 0.0]])
            .unwrap();
        let mut n2 = n.clone();
        n2.values[[1, 0]] = 0.0;
        n2.values[[1, 1]] = 1.0;
        let text = serialize_norm(&n2, &[("condition", "Shuffle".into()), ("seed", "7".into())]);
        assert!(text.starts_with("# condition=Shuffle seed=7\n"));
        let back = parse_norm(&text, "d", NormKind::Categorical).unwrap();
        assert_eq!(back.features(), n2.features());
        assert_eq!(back.values(), n2.values());
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Evaluation measures for predicted feature matrices: F1@k against the gold
//! feature set, Spearman rank correlation, and neighborhood accuracy@k, plus a
//! Monte Carlo chance-level estimate.

use std::fmt;
use std::io::Write;

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::FeatureNorm;
use crate::vecmath::cosine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    F1AtK,
    Spearman,
    NaAtK,
}

/// Which vectors Spearman correlates: each concept's row across features, or
/// each feature's column across concepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpearmanAxis {
    #[default]
    PerConcept,
    PerFeature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetricSpec {
    pub metric: MetricName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<SpearmanAxis>,
}

impl MetricSpec {
    pub fn f1(k: usize) -> Self {
        MetricSpec {
            metric: MetricName::F1AtK,
            k: Some(k),
            axis: None,
        }
    }

    pub fn spearman(axis: SpearmanAxis) -> Self {
        MetricSpec {
            metric: MetricName::Spearman,
            k: None,
            axis: Some(axis),
        }
    }

    pub fn na(k: usize) -> Self {
        MetricSpec {
            metric: MetricName::NaAtK,
            k: Some(k),
            axis: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.metric {
            MetricName::F1AtK | MetricName::NaAtK => match self.k {
                Some(k) if k >= 1 => Ok(()),
                _ => Err(Error::Invalid(format!("{self}: k must be given and ≥ 1"))),
            },
            MetricName::Spearman if self.k.is_some() => {
                Err(Error::Invalid("spearman takes no k".into()))
            }
            MetricName::Spearman => Ok(()),
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.metric, self.k) {
            (MetricName::F1AtK, Some(k)) => write!(f, "F1@{k}"),
            (MetricName::F1AtK, None) => f.write_str("F1@?"),
            (MetricName::NaAtK, Some(k)) => write!(f, "NA@{k}"),
            (MetricName::NaAtK, None) => f.write_str("NA@?"),
            (MetricName::Spearman, _) => match self.axis.unwrap_or_default() {
                SpearmanAxis::PerConcept => f.write_str("Spearman"),
                SpearmanAxis::PerFeature => f.write_str("Spearman/feature"),
            },
        }
    }
}

/// Parses `f1@10`, `na@10`, `spearman` and `spearman/feature`
/// (case-insensitive).
impl std::str::FromStr for MetricSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let bad = || Error::Invalid(format!("unknown metric '{s}'"));
        let spec = match lower.split_once('@') {
            Some((name, k)) => {
                let k: usize = k.parse().map_err(|_| bad())?;
                match name {
                    "f1" => MetricSpec::f1(k),
                    "na" => MetricSpec::na(k),
                    _ => return Err(bad()),
                }
            }
            None => match lower.as_str() {
                "spearman" => MetricSpec::spearman(SpearmanAxis::PerConcept),
                "spearman/feature" => MetricSpec::spearman(SpearmanAxis::PerFeature),
                _ => return Err(bad()),
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub spec: MetricSpec,
    /// One entry per scored unit (concept, or feature for per-feature
    /// Spearman); `None` marks a unit excluded from the mean.
    pub per_concept: Vec<Option<f64>>,
    pub mean: f64,
    pub skipped: usize,
}

impl MetricResult {
    fn from_scores(spec: MetricSpec, per_concept: Vec<Option<f64>>) -> Self {
        let kept: Vec<f64> = per_concept.iter().flatten().copied().collect();
        let mean = if kept.is_empty() {
            f64::NAN
        } else {
            kept.iter().sum::<f64>() / kept.len() as f64
        };
        MetricResult {
            spec,
            skipped: per_concept.len() - kept.len(),
            per_concept,
            mean,
        }
    }

    /// `(label, metric, value)` rows; skipped units get an empty value.
    pub fn write_csv<W: Write>(&self, labels: &[String], out: W) -> Result<()> {
        if labels.len() != self.per_concept.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} scores",
                labels.len(),
                self.per_concept.len()
            )));
        }
        let mut w = csv::Writer::from_writer(out);
        let metric = self.spec.to_string();
        let io = |e: csv::Error| Error::Invalid(format!("csv: {e}"));
        w.write_record(["concept", "metric", "value"]).map_err(io)?;
        for (label, v) in labels.iter().zip(&self.per_concept) {
            let value = v.map(|v| format!("{v:?}")).unwrap_or_default();
            w.write_record([label.as_str(), metric.as_str(), value.as_str()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Invalid(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "metric": self.spec.to_string(),
            "spec": self.spec,
            "mean": self.mean,
            "scored": self.per_concept.len() - self.skipped,
            "skipped": self.skipped,
        })
    }
}

/// Indices of the `k` largest values; ties go to the lower index.
pub fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// F1 of the top-`k` predicted features against the nonzero gold features.
/// `Ok(None)` when the gold row is all zero.
pub fn f1_at_k(yhat_row: &[f64], gold_row: &[f64], k: usize) -> Result<Option<f64>> {
    if yhat_row.len() != gold_row.len() {
        return Err(Error::Shape(format!(
            "prediction has {} values, gold has {}",
            yhat_row.len(),
            gold_row.len()
        )));
    }
    if k == 0 || k > yhat_row.len() {
        return Err(Error::Invalid(format!(
            "k = {k} outside 1..={}",
            yhat_row.len()
        )));
    }
    let gold = gold_row.iter().filter(|&&v| v != 0.0).count();
    if gold == 0 {
        return Ok(None);
    }
    let hits = top_k(yhat_row, k)
        .into_iter()
        .filter(|&i| gold_row[i] != 0.0)
        .count();
    if hits == 0 {
        return Ok(Some(0.0));
    }
    let precision = hits as f64 / k as f64;
    let recall = hits as f64 / gold as f64;
    Ok(Some(2.0 * precision * recall / (precision + recall)))
}

/// 1-based ranks, tied values sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        let r = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho as the Pearson correlation of average ranks. `Ok(None)`
/// when either input is constant.
pub fn spearman_rho(yhat: &[f64], y: &[f64]) -> Result<Option<f64>> {
    if yhat.len() != y.len() {
        return Err(Error::Shape(format!("lengths {} and {}", yhat.len(), y.len())));
    }
    if y.len() < 2 {
        return Err(Error::Invalid("spearman needs at least two values".into()));
    }
    Ok(pearson(&average_ranks(yhat), &average_ranks(y)))
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn same_shape(yhat: &Array2<f64>, gold: &Array2<f64>) -> Result<()> {
    if yhat.dim() != gold.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} vs gold {:?}",
            yhat.dim(),
            gold.dim()
        )));
    }
    Ok(())
}

fn row(a: ArrayView1<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

pub fn f1_matrix(yhat: &Array2<f64>, gold: &Array2<f64>, k: usize) -> Result<MetricResult> {
    same_shape(yhat, gold)?;
    let scores = (0..yhat.nrows())
        .into_par_iter()
        .map(|i| f1_at_k(&row(yhat.row(i)), &row(gold.row(i)), k))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricResult::from_scores(MetricSpec::f1(k), scores))
}

pub fn spearman_matrix(yhat: &Array2<f64>, gold: &Array2<f64>, axis: SpearmanAxis) -> Result<MetricResult> {
    same_shape(yhat, gold)?;
    let (units, pairs): (usize, Box<dyn Fn(usize) -> (Vec<f64>, Vec<f64>) + Sync>) = match axis {
        SpearmanAxis::PerConcept => (
            yhat.nrows(),
            Box::new(|i| (row(yhat.row(i)), row(gold.row(i)))),
        ),
        SpearmanAxis::PerFeature => (
            yhat.ncols(),
            Box::new(|j| (row(yhat.column(j)), row(gold.column(j)))),
        ),
    };
    let scores = (0..units)
        .into_par_iter()
        .map(|i| {
            let (a, b) = pairs(i);
            spearman_rho(&a, &b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricResult::from_scores(MetricSpec::spearman(axis), scores))
}

/// `k` nearest other rows of `m` to row `i` by cosine; ties to lower index.
fn cosine_neighbors(m: &Array2<f64>, i: usize, k: usize) -> Vec<usize> {
    let me = row(m.row(i));
    let mut sims: Vec<(usize, f64)> = (0..m.nrows())
        .filter(|&j| j != i)
        .map(|j| (j, cosine(&me, &row(m.row(j)))))
        .collect();
    sims.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sims.into_iter().take(k).map(|(j, _)| j).collect()
}

/// Fraction of each concept's `k` cosine neighbors (self excluded) in gold
/// space that are also among its `k` neighbors in predicted space.
pub fn neighborhood_accuracy(yhat: &Array2<f64>, gold: &Array2<f64>, k: usize) -> Result<MetricResult> {
    same_shape(yhat, gold)?;
    let n = gold.nrows();
    if k == 0 || k >= n {
        return Err(Error::Invalid(format!("k = {k} must be in 1..{n}")));
    }
    let scores = (0..n)
        .into_par_iter()
        .map(|i| {
            let g = cosine_neighbors(gold, i, k);
            let p = cosine_neighbors(yhat, i, k);
            let shared = p.iter().filter(|j| g.contains(j)).count();
            Some(shared as f64 / k as f64)
        })
        .collect();
    Ok(MetricResult::from_scores(MetricSpec::na(k), scores))
}

pub fn evaluate(spec: &MetricSpec, yhat: &Array2<f64>, gold: &Array2<f64>) -> Result<MetricResult> {
    spec.validate()?;
    match spec.metric {
        MetricName::F1AtK => f1_matrix(yhat, gold, spec.k.expect("validated")),
        MetricName::Spearman => spearman_matrix(yhat, gold, spec.axis.unwrap_or_default()),
        MetricName::NaAtK => neighborhood_accuracy(yhat, gold, spec.k.expect("validated")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChanceEstimate {
    /// Mean over trials of the metric mean.
    pub mean: f64,
    /// Spread of a single trial's score: the standard error to expect for one
    /// run at chance level.
    pub trial_sd: f64,
    /// Standard error of `mean`.
    pub std_error: f64,
    pub trials: usize,
}

/// Scores `trials` prediction matrices drawn uniformly from the norm's value
/// range against the norm itself.
///
/// Trial `t` draws from its own ChaCha stream, so the estimate does not
/// depend on how trials are scheduled across threads.
pub fn chance_oracle(norm: &FeatureNorm, spec: &MetricSpec, trials: usize, seed: u64) -> Result<ChanceEstimate> {
    if trials == 0 {
        return Err(Error::Invalid("trials must be ≥ 1".into()));
    }
    spec.validate()?;
    let gold = norm.values();
    let (lo, hi) = norm.value_range();
    let scores = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let yhat = Array2::from_shape_fn(gold.dim(), |_| {
                if hi > lo {
                    rng.random_range(lo..=hi)
                } else {
                    lo + rng.random::<f64>()
                }
            });
            evaluate(spec, &yhat, gold).map(|r| r.mean)
        })
        .collect::<Result<Vec<f64>>>()?;
    let n = trials as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = if trials > 1 {
        scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(ChanceEstimate {
        mean,
        trial_sd: var.sqrt(),
        std_error: (var / n).sqrt(),
        trials,
    })
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! Recorded forward passes and token-identity profiles.

use ndarray::{s, Array2, Array3, Array4, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on attention row sums for traces built in memory.
pub const ROW_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub tokens: Vec<usize>,
    /// seq × d_model
    pub embeddings0: Array2<f64>,
    /// (n_layers + 1) × seq × d_model; index 0 is the embedding layer.
    pub hidden: Array3<f64>,
    /// n_layers × n_heads × seq × seq
    pub attn: Array4<f64>,
}

impl Trace {
    pub fn n_layers(&self) -> usize {
        self.attn.dim().0
    }

    pub fn n_heads(&self) -> usize {
        self.attn.dim().1
    }

    pub fn seq_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn d_model(&self) -> usize {
        self.embeddings0.ncols()
    }

    /// Checks shapes, finiteness and row-stochasticity within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let (l, h, n, n2) = self.attn.dim();
        let d = self.d_model();
        if n != self.seq_len() || n2 != n || self.embeddings0.nrows() != n {
            return Err(Error::Shape(format!(
                "attention {:?} and embeddings {:?} disagree with {} tokens",
                self.attn.dim(),
                self.embeddings0.dim(),
                self.seq_len()
            )));
        }
        if self.hidden.dim() != (l + 1, n, d) {
            return Err(Error::Shape(format!(
                "hidden is {:?}, expected {:?}",
                self.hidden.dim(),
                (l + 1, n, d)
            )));
        }
        let finite = self.embeddings0.iter().chain(self.hidden.iter()).chain(self.attn.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::Trace("non-finite value".into()));
        }
        for layer in 0..l {
            for head in 0..h {
                for (row, r) in self.attn.slice(s![layer, head, .., ..]).rows().into_iter().enumerate() {
                    let sum = r.sum();
                    if (sum - 1.0).abs() > tol || r.iter().any(|&v| !(-tol..=1.0 + tol).contains(&v)) {
                        return Err(Error::NotStochastic { row, sum });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn layer_hidden(&self, layer: usize) -> Array2<f64> {
        self.hidden.slice(s![layer, .., ..]).to_owned()
    }

    pub fn attention_map(&self, layer: usize, head: usize) -> Array2<f64> {
        self.attn.slice(s![layer, head, .., ..]).to_owned()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityProfile {
    /// `[layer][position]` cosine between the hidden state and the same
    /// position's layer-0 embedding.
    pub self_alignment: Vec<Vec<f64>>,
    /// `[layer][position]` position whose layer-0 embedding is closest by cosine.
    pub best_match_position: Vec<Vec<usize>>,
    /// `(layer, position)` pairs whose hidden state had zero norm.
    pub zero_norm: Vec<(usize, usize)>,
}

impl IdentityProfile {
    pub fn mean_self_alignment(&self) -> Vec<f64> {
        self.self_alignment
            .iter()
            .map(|row| row.iter().sum::<f64>() / row.len() as f64)
            .collect()
    }

    /// Fraction of positions per layer whose best match is themselves.
    pub fn self_match_rate(&self) -> Vec<f64> {
        self.best_match_position
            .iter()
            .map(|row| {
                row.iter().enumerate().filter(|(i, &j)| *i == j).count() as f64 / row.len() as f64
            })
            .collect()
    }
}

/// Cosine similarity; exactly 1 for bitwise-equal nonzero vectors, `None`
/// when either has zero norm.
fn cosine(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Option<f64> {
    let na = a.dot(&a).sqrt();
    let nb = b.dot(&b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    if a == b {
        return Some(1.0);
    }
    Some((a.dot(&b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn identity_profile(trace: &Trace) -> IdentityProfile {
    let n = trace.seq_len();
    let mut self_alignment = Vec::new();
    let mut best_match_position = Vec::new();
    let mut zero_norm = Vec::new();
    for layer in 0..trace.hidden.dim().0 {
        let mut selves = Vec::with_capacity(n);
        let mut best = Vec::with_capacity(n);
        for i in 0..n {
            let h = trace.hidden.slice(s![layer, i, ..]);
            let sims: Vec<Option<f64>> = (0..n).map(|j| cosine(h, trace.embeddings0.row(j))).collect();
            if sims[i].is_none() && h.iter().all(|&v| v == 0.0) {
                zero_norm.push((layer, i));
            }
            selves.push(sims[i].unwrap_or(0.0));
            let mut arg = 0;
            for j in 1..n {
                if sims[j].unwrap_or(0.0) > sims[arg].unwrap_or(0.0) {
                    arg = j;
                }
            }
            best.push(arg);
        }
        self_alignment.push(selves);
        best_match_position.push(best);
    }
    IdentityProfile {
        self_alignment,
        best_match_position,
        zero_norm,
    }
}

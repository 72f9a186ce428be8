// SPDX-License-Identifier: MIT OR Apache-2.0

//! Summary statistics of attention maps and divergences between them.

use ndarray::{s, Array2, Array4, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance accepted by [`map_stats`].
pub const STOCHASTIC_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapStats {
    /// Mean row entropy in nats.
    pub entropy: f64,
    /// Mean of `A[i][i]`.
    pub diagonal_mass: f64,
    /// Mean of `A[i][i-1]` over rows `i ≥ 1`; 0 for a single row.
    pub previous_token_mass: f64,
}

fn check_stochastic(a: ArrayView2<f64>) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Shape(format!("attention map {:?} is not square", a.dim())));
    }
    for (row, r) in a.rows().into_iter().enumerate() {
        let sum = r.sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL || r.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::NotStochastic { row, sum });
        }
    }
    Ok(())
}

fn entropy(p: ArrayView1<f64>) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

pub fn map_stats(a: ArrayView2<f64>) -> Result<MapStats> {
    check_stochastic(a)?;
    let n = a.nrows();
    let entropy = a.rows().into_iter().map(entropy).sum::<f64>() / n as f64;
    let diagonal_mass = (0..n).map(|i| a[[i, i]]).sum::<f64>() / n as f64;
    let previous_token_mass = if n > 1 {
        (1..n).map(|i| a[[i, i - 1]]).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    Ok(MapStats {
        entropy,
        diagonal_mass,
        previous_token_mass,
    })
}

/// Jensen–Shannon divergence in nats, bounded by ln 2.
pub fn jensen_shannon(p: ArrayView1<f64>, q: ArrayView1<f64>) -> f64 {
    let kl_to_mid = |a: ArrayView1<f64>, b: ArrayView1<f64>| -> f64 {
        a.iter()
            .zip(b.iter())
            .filter(|(&x, _)| x > 0.0)
            .map(|(&x, &y)| x * (2.0 * x / (x + y)).ln())
            .sum()
    };
    (0.5 * kl_to_mid(p, q) + 0.5 * kl_to_mid(q, p)).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    /// n_layers × n_heads mean row JSD.
    pub per_head: Array2<f64>,
    pub overall: f64,
}

/// Mean row-wise Jensen–Shannon divergence between two attention tensors.
pub fn map_divergence(a: &Array4<f64>, b: &Array4<f64>) -> Result<Divergence> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    let (l, h, n, _) = a.dim();
    let mut per_head = Array2::zeros((l, h));
    for layer in 0..l {
        for head in 0..h {
            let (ma, mb) = (a.slice(s![layer, head, .., ..]), b.slice(s![layer, head, .., ..]));
            check_stochastic(ma)?;
            check_stochastic(mb)?;
            let total: f64 = (0..n).map(|i| jensen_shannon(ma.row(i), mb.row(i))).sum();
            per_head[[layer, head]] = total / n as f64;
        }
    }
    let overall = per_head.mean().unwrap_or(0.0);
    Ok(Divergence { per_head, overall })
}

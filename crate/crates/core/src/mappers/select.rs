// SPDX-License-Identifier: MIT OR Apache-2.0

//! Latent-size selection from a train/validation MSE curve.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_rows, fit_mapper, mse, FfnnHyper, MapperKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for Split {
    fn default() -> Self {
        Split {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCurve {
    pub grid: Vec<usize>,
    pub train_mse: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub chosen_k: usize,
}

/// Index of the elbow: the point farthest (perpendicular distance) from the
/// chord joining the first and last points of `(grid[i], values[i])`.
/// Ties resolve to the smallest index.
///
/// Perpendicular distance to a chord is, up to one constant factor, the
/// cross product with the chord direction; rescaling either axis multiplies
/// every distance by the same factor, so normalizing the axes first would
/// not change the argmax.
pub fn elbow_index(grid: &[usize], values: &[f64]) -> usize {
    assert_eq!(grid.len(), values.len());
    if grid.len() < 3 {
        return 0;
    }
    let (x0, y0) = (grid[0] as f64, values[0]);
    let (x1, y1) = (grid[grid.len() - 1] as f64, values[values.len() - 1]);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let length = (dx * dx + dy * dy).sqrt();
    if length == 0.0 {
        return 0;
    }
    let mut best = (0usize, 0.0f64);
    for (i, (&k, &v)) in grid.iter().zip(values).enumerate() {
        let d = ((k as f64 - x0) * dy - (v - y0) * dx).abs() / length;
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Fits one model per grid value on a seeded train split, records train and
/// validation MSE, and picks the elbow of the validation curve.
pub fn select_k_elbow(
    x: &Array2<f64>,
    y: &Array2<f64>,
    k_grid: &[usize],
    split: Split,
    kind: MapperKind,
    hyper: &FfnnHyper,
) -> Result<FitCurve> {
    check_rows(x, y)?;
    if k_grid.is_empty() {
        return Err(Error::Invalid("k grid is empty".into()));
    }
    if k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid("k grid must be strictly ascending".into()));
    }
    if !(split.train_fraction > 0.0 && split.train_fraction < 1.0) {
        return Err(Error::Invalid(format!(
            "train fraction {} outside (0, 1)",
            split.train_fraction
        )));
    }
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Invalid("need at least two rows to split".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(split.seed));
    let n_train = ((n as f64 * split.train_fraction).round() as usize).clamp(1, n - 1);
    let mut train_idx = order[..n_train].to_vec();
    let mut val_idx = order[n_train..].to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let (xt, yt) = (x.select(Axis(0), &train_idx), y.select(Axis(0), &train_idx));
    let (xv, yv) = (x.select(Axis(0), &val_idx), y.select(Axis(0), &val_idx));

    let errors: Vec<(f64, f64)> = k_grid
        .par_iter()
        .map(|&k| {
            let model = fit_mapper(kind, &xt, &yt, k, hyper)?;
            Ok((mse(&model.predict(&xt)?, &yt), mse(&model.predict(&xv)?, &yv)))
        })
        .collect::<Result<_>>()?;
    let (train_mse, val_mse): (Vec<f64>, Vec<f64>) = errors.into_iter().unzip();
    let chosen_k = k_grid[elbow_index(k_grid, &val_mse)];
    Ok(FitCurve {
        grid: k_grid.to_vec(),
        train_mse,
        val_mse,
        chosen_k,
    })
}

/// Drops grid values above `max_k`; if nothing survives, returns `[max_k]`.
pub fn clip_grid(grid: &[usize], max_k: usize) -> Vec<usize> {
    let mut out: Vec<usize> = grid.iter().copied().filter(|&k| k >= 1 && k <= max_k).collect();
    out.sort_unstable();
    out.dedup();
    if out.is_empty() && max_k >= 1 {
        out.push(max_k);
    }
    out
}

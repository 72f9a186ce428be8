// SPDX-License-Identifier: MIT OR Apache-2.0

//! Embedding → feature-norm mappers.
//!
//! Two families share one interface: a linear PLS regression fitted with
//! NIPALS ([`pls`]) and a single-hidden-layer tanh network trained by
//! full-batch gradient descent ([`ffnn`]). [`select`] picks the latent size
//! from a validation curve and [`cv`] produces out-of-fold predictions.

pub mod blob;
pub mod cv;
pub mod ffnn;
pub mod pls;
pub mod select;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cv::{cross_validate, fold_assignment, CrossValidation};
pub use ffnn::{ffnn_gradient_check, fit_ffnn, random_ffnn, EpochRecord, FfnnGradients, FfnnHyper, FfnnModel};
pub use pls::{fit_pls, fit_pls_with, PlsModel, PlsOptions};
pub use select::{elbow_index, select_k_elbow, FitCurve, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapperKind {
    Plsr,
    Ffnn,
}

impl std::fmt::Display for MapperKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MapperKind::Plsr => "plsr",
            MapperKind::Ffnn => "ffnn",
        })
    }
}

/// A fitted mapper of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Pls(PlsModel),
    Ffnn(FfnnModel),
}

impl Model {
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            Model::Pls(m) => m.predict(x),
            Model::Ffnn(m) => m.predict(x),
        }
    }

    pub fn kind(&self) -> MapperKind {
        match self {
            Model::Pls(_) => MapperKind::Plsr,
            Model::Ffnn(_) => MapperKind::Ffnn,
        }
    }
}

/// Fits `kind` with latent size `k` (PLS components or hidden units).
///
/// PLS is fitted in truncating mode: when fewer than `k` components can be
/// extracted the model keeps the ones it found. Use [`fit_pls`] directly for
/// the strict behaviour.
pub fn fit_mapper(
    kind: MapperKind,
    x: &Array2<f64>,
    y: &Array2<f64>,
    k: usize,
    hyper: &FfnnHyper,
) -> Result<Model> {
    match kind {
        MapperKind::Plsr => {
            let k = k.min(x.nrows()).min(x.ncols());
            let opts = PlsOptions {
                truncate: true,
                ..PlsOptions::default()
            };
            fit_pls_with(x, y, k, &opts).map(Model::Pls)
        }
        MapperKind::Ffnn => fit_ffnn(x, y, k, hyper).map(Model::Ffnn),
    }
}

pub(crate) fn check_rows(x: &Array2<f64>, y: &Array2<f64>) -> Result<()> {
    if x.nrows() != y.nrows() {
        return Err(Error::Shape(format!(
            "X has {} rows but Y has {}",
            x.nrows(),
            y.nrows()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Invalid("no training rows".into()));
    }
    Ok(())
}

/// Mean squared error over every cell.
pub fn mse(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let n = a.len() as f64;
    a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n
}

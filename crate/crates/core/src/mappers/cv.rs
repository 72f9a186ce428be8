// SPDX-License-Identifier: MIT OR Apache-2.0

//! K-fold out-of-fold prediction.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{fit_mapper, FfnnHyper, MapperKind};
use crate::error::{Error, Result};
use crate::norms::AlignedDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    /// Row `i` was predicted by the model of fold `fold_of[i]`, which never
    /// saw row `i`.
    pub yhat: Array2<f64>,
    pub fold_of: Vec<usize>,
}

/// Seeded permutation of the rows, dealt round-robin into `folds` folds.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || folds > n {
        return Err(Error::Invalid(format!(
            "folds = {folds} outside 2..={n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % folds;
    }
    Ok(fold_of)
}

/// Out-of-fold predictions for every row of `data`.
///
/// Folds are fitted in parallel and written back in fold order, so the result
/// does not depend on the number of worker threads. The network seed of fold
/// `f` is `hyper.seed + f`.
pub fn cross_validate(
    data: &AlignedDataset,
    kind: MapperKind,
    k: usize,
    folds: usize,
    seed: u64,
    hyper: &FfnnHyper,
) -> Result<CrossValidation> {
    let n = data.len();
    let fold_of = fold_assignment(n, folds, seed)?;
    let predictions: Vec<(Vec<usize>, Array2<f64>)> = (0..folds)
        .into_par_iter()
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] == fold);
            let xt = data.x.select(Axis(0), &train);
            let yt = data.y.select(Axis(0), &train);
            let fold_hyper = FfnnHyper {
                seed: hyper.seed.wrapping_add(fold as u64),
                ..hyper.clone()
            };
            let model = fit_mapper(kind, &xt, &yt, k, &fold_hyper)?;
            let pred = model.predict(&data.x.select(Axis(0), &test))?;
            Ok((test, pred))
        })
        .collect::<Result<_>>()?;

    let mut yhat = Array2::zeros(data.y.dim());
    for (test, pred) in predictions {
        for (row, &i) in test.iter().enumerate() {
            yhat.row_mut(i).assign(&pred.row(row));
        }
    }
    Ok(CrossValidation { yhat, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn dataset(n: usize, seed: u64) -> AlignedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 4), |_| StandardNormal.sample(&mut rng));
        let y = Array2::from_shape_fn((n, 3), |_| StandardNormal.sample(&mut rng));
        AlignedDataset::new((0..n).map(|i| format!("c{i}")).collect(), x, y).unwrap()
    }

    #[test]
    fn leave_one_out_on_five() {
        let fold_of = fold_assignment(5, 5, 3).unwrap();
        let mut sorted = fold_of.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
        let cv = cross_validate(&dataset(5, 1), MapperKind::Plsr, 2, 5, 3, &FfnnHyper::default()).unwrap();
        assert_eq!(cv.fold_of, fold_of);
    }

    #[test]
    fn folds_out_of_range() {
        assert!(fold_assignment(5, 1, 0).is_err());
        assert!(fold_assignment(5, 6, 0).is_err());
    }

    #[test]
    fn same_seed_same_predictions() {
        let d = dataset(30, 2);
        for kind in [MapperKind::Plsr, MapperKind::Ffnn] {
            let hyper = FfnnHyper {
                epochs: 30,
                ..Default::default()
            };
            let a = cross_validate(&d, kind, 3, 4, 9, &hyper).unwrap();
            let b = cross_validate(&d, kind, 3, 4, 9, &hyper).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn held_out_row_is_not_seen() {
        // Perturbing the target of row 0 must not change row 0's prediction.
        let d = dataset(20, 4);
        let base = cross_validate(&d, MapperKind::Plsr, 2, 4, 1, &FfnnHyper::default()).unwrap();
        let mut d2 = d.clone();
        d2.y.row_mut(0).mapv_inplace(|v| v + 100.0);
        let moved = cross_validate(&d2, MapperKind::Plsr, 2, 4, 1, &FfnnHyper::default()).unwrap();
        assert_eq!(base.yhat.row(0), moved.yhat.row(0));
    }
}

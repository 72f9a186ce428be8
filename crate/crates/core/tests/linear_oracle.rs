// SPDX-License-Identifier: MIT OR Apache-2.0

//! PLS at full rank against ordinary least squares solved independently with
//! nalgebra's normal equations.

use interp_core::mappers::{fit_pls, mse};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

fn to_na(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// OLS with intercept: append a ones column and solve (AᵀA) β = AᵀY.
fn ols_predict(x: &Array2<f64>, y: &Array2<f64>, x_new: &Array2<f64>) -> DMatrix<f64> {
    let with_ones = |m: &Array2<f64>| {
        DMatrix::from_fn(m.nrows(), m.ncols() + 1, |i, j| if j == 0 { 1.0 } else { m[[i, j - 1]] })
    };
    let a = with_ones(x);
    let ata = a.transpose() * &a;
    let aty = a.transpose() * to_na(y);
    let beta = ata.cholesky().expect("positive definite").solve(&aty);
    with_ones(x_new) * beta
}

#[test]
fn full_rank_pls_equals_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = gaussian(60, 7, &mut rng);
    let y = gaussian(60, 4, &mut rng);
    let x_new = gaussian(10, 7, &mut rng);
    let pls = fit_pls(&x, &y, 7).unwrap().predict(&x_new).unwrap();
    let ols = ols_predict(&x, &y, &x_new);
    let worst = pls
        .indexed_iter()
        .map(|((i, j), v)| (v - ols[(i, j)]).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "max |pls - ols| = {worst}");
}

#[test]
fn noiseless_low_rank_recovery_held_out() {
    // Y depends on X only through a rank-5 latent factor.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z = gaussian(240, 5, &mut rng);
    let px = gaussian(5, 50, &mut rng);
    let py = gaussian(5, 20, &mut rng);
    let x = z.dot(&px);
    let y = z.dot(&py);
    let (xt, xv) = (x.slice(ndarray::s![..200, ..]).to_owned(), x.slice(ndarray::s![200.., ..]).to_owned());
    let (yt, yv) = (y.slice(ndarray::s![..200, ..]).to_owned(), y.slice(ndarray::s![200.., ..]).to_owned());
    let m = fit_pls(&xt, &yt, 5).unwrap();
    let err = mse(&m.predict(&xv).unwrap(), &yv);
    assert!(err < 1e-8, "held-out mse {err}");
}

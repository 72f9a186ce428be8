// SPDX-License-Identifier: MIT OR Apache-2.0

//! Single-hidden-layer tanh regressor.
//!
//! `Ŷ = tanh(X·W1 + b1)·W2 + b2`, trained on the mean squared error over all
//! cells with full-batch gradient descent plus momentum. A validation split
//! carved from the training rows drives early stopping; the parameters with
//! the best validation loss are returned.
//!
//! Inputs are centered on the training rows during fitting and the output
//! bias starts at the target mean; neither is scaled.

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_rows, mse};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FfnnHyper {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub patience: usize,
    pub momentum: f64,
    pub validation_fraction: f64,
}

impl Default for FfnnHyper {
    fn default() -> Self {
        FfnnHyper {
            learning_rate: 0.05,
            epochs: 500,
            seed: 0,
            patience: 25,
            momentum: 0.9,
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnnModel {
    /// d_x × h
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// h × d_y
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Gradient of the training loss, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnnGradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl FfnnModel {
    pub fn zeros(input_dim: usize, hidden_dim: usize, output_dim: usize) -> Self {
        FfnnModel {
            w1: Array2::zeros((input_dim, hidden_dim)),
            b1: Array1::zeros(hidden_dim),
            w2: Array2::zeros((hidden_dim, output_dim)),
            b2: Array1::zeros(output_dim),
            log: Vec::new(),
            best_epoch: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.ncols()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} input columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(self.forward(x).1)
    }

    fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let hidden = (x.dot(&self.w1) + &self.b1).mapv(f64::tanh);
        let out = hidden.dot(&self.w2) + &self.b2;
        (hidden, out)
    }

    pub fn loss(&self, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        mse(&self.forward(x).1, y)
    }

    fn loss_and_grads(&self, x: &Array2<f64>, y: &Array2<f64>) -> (f64, FfnnGradients) {
        let (hidden, out) = self.forward(x);
        let diff = &out - y;
        let scale = 2.0 / diff.len() as f64;
        let loss = diff.iter().map(|d| d * d).sum::<f64>() / diff.len() as f64;
        let d_out = diff * scale;
        // dot() on a transposed view may return column-major storage.
        let w2 = hidden.t().dot(&d_out).as_standard_layout().into_owned();
        let b2 = d_out.sum_axis(Axis(0));
        let d_hidden = d_out.dot(&self.w2.t()) * hidden.mapv(|h| 1.0 - h * h);
        let w1 = x.t().dot(&d_hidden).as_standard_layout().into_owned();
        let b1 = d_hidden.sum_axis(Axis(0));
        (loss, FfnnGradients { w1, b1, w2, b2 })
    }

    /// Loss and its analytic gradient on `(x, y)`.
    pub fn gradients(&self, x: &Array2<f64>, y: &Array2<f64>) -> Result<(f64, FfnnGradients)> {
        check_rows(x, y)?;
        if x.ncols() != self.input_dim() || y.ncols() != self.output_dim() {
            return Err(Error::Shape("data does not match model dimensions".into()));
        }
        Ok(self.loss_and_grads(x, y))
    }

    fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).chain(&self.b2).all(|v| v.is_finite())
    }
}

impl FfnnGradients {
    fn slices(&self) -> [&[f64]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }
}

pub fn fit_ffnn(x: &Array2<f64>, y: &Array2<f64>, hidden_dim: usize, hyper: &FfnnHyper) -> Result<FfnnModel> {
    check_rows(x, y)?;
    if hidden_dim == 0 {
        return Err(Error::Invalid("hidden_dim must be at least 1".into()));
    }
    if !(hyper.learning_rate > 0.0) || !(0.0..1.0).contains(&hyper.momentum) {
        return Err(Error::Invalid("learning rate must be positive and momentum in [0, 1)".into()));
    }
    if !(0.0..1.0).contains(&hyper.validation_fraction) {
        return Err(Error::Invalid("validation fraction must be in [0, 1)".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64) * hyper.validation_fraction).floor() as usize;
    let n_val = n_val.min(n - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let mut val_idx = val_idx.to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    // Training runs on centered inputs; the shift is folded back into b1 at
    // the end, so the stored model takes raw X.
    let x_mean = x.select(Axis(0), &train_idx).mean_axis(Axis(0)).expect("non-empty");
    let xc = x - &x_mean;
    let x_train = xc.select(Axis(0), &train_idx);
    let y_train = y.select(Axis(0), &train_idx);
    let validation = (!val_idx.is_empty())
        .then(|| (xc.select(Axis(0), &val_idx), y.select(Axis(0), &val_idx)));

    let (dx, dy) = (x.ncols(), y.ncols());
    let mut model = FfnnModel::zeros(dx, hidden_dim, dy);
    let a1 = 1.0 / (dx as f64).sqrt();
    let a2 = 1.0 / (hidden_dim as f64).sqrt();
    model.w1.mapv_inplace(|_| rng.random_range(-a1..=a1));
    model.w2.mapv_inplace(|_| rng.random_range(-a2..=a2));
    model.b2 = y_train.mean_axis(Axis(0)).expect("non-empty");

    let mut velocity = FfnnModel::zeros(dx, hidden_dim, dy);
    let mut log = Vec::with_capacity(hyper.epochs);
    let mut best: Option<(f64, usize, FfnnModel)> = None;

    for epoch in 0..hyper.epochs {
        let (train_mse, grads) = model.loss_and_grads(&x_train, &y_train);
        if !train_mse.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let val_mse = validation.as_ref().map(|(xv, yv)| model.loss(xv, yv));
        if let Some(v) = val_mse {
            if !v.is_finite() {
                return Err(Error::Diverged { epoch });
            }
        }
        log.push(EpochRecord {
            epoch,
            train_mse,
            val_mse,
        });

        let monitored = val_mse.unwrap_or(train_mse);
        let improved = best.as_ref().map(|(b, _, _)| monitored < *b).unwrap_or(true);
        if improved {
            best = Some((monitored, epoch, model.clone()));
        } else if validation.is_some() {
            let since = epoch - best.as_ref().map(|(_, e, _)| *e).unwrap_or(0);
            if since > hyper.patience {
                break;
            }
        }

        for (v, (p, g)) in velocity
            .params_mut()
            .into_iter()
            .zip(model.params_mut().into_iter().zip(grads.slices()))
        {
            for ((vi, pi), gi) in v.iter_mut().zip(p.iter_mut()).zip(g) {
                *vi = hyper.momentum * *vi - hyper.learning_rate * gi;
                *pi += *vi;
            }
        }
        if !model.is_finite() {
            return Err(Error::Diverged { epoch: epoch + 1 });
        }
    }

    let (mut chosen, best_epoch) = match best {
        Some((_, epoch, m)) if validation.is_some() => (m, epoch),
        _ => {
            let last = log.len().saturating_sub(1);
            (model, last)
        }
    };
    chosen.b1 = &chosen.b1 - &x_mean.dot(&chosen.w1);
    chosen.log = log;
    chosen.best_epoch = best_epoch;
    Ok(chosen)
}

/// Absolute floor of the relative-error denominator, so that gradients that
/// are zero up to rounding do not produce spurious large ratios.
pub const GRAD_CHECK_FLOOR: f64 = 1e-8;

/// Largest relative error between the analytic gradient and central finite
/// differences, over every parameter.
///
/// The relative error of one parameter is `|a − n| / max(|a|, |n|, GRAD_CHECK_FLOOR)`;
/// exact zero-vs-zero pairs are skipped.
pub fn ffnn_gradient_check(model: &FfnnModel, x: &Array2<f64>, y: &Array2<f64>, epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Invalid(format!(
            "epsilon out of range: {epsilon} not in [1e-7, 1e-3]"
        )));
    }
    check_rows(x, y)?;
    if x.ncols() != model.input_dim() || y.ncols() != model.output_dim() {
        return Err(Error::Shape("data does not match model dimensions".into()));
    }
    let (_, grads) = model.loss_and_grads(x, y);
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (block, analytic_block) in analytic.iter().enumerate() {
        for (i, &a) in analytic_block.iter().enumerate() {
            let original = probe.params_mut()[block][i];
            probe.params_mut()[block][i] = original + epsilon;
            let plus = probe.loss(x, y);
            probe.params_mut()[block][i] = original - epsilon;
            let minus = probe.loss(x, y);
            probe.params_mut()[block][i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            if a == 0.0 && numeric == 0.0 {
                continue;
            }
            let denom = a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

/// Random network with weights in [-scale, scale]; used by the gradient-check
/// sweeps.
pub fn random_ffnn(input_dim: usize, hidden_dim: usize, output_dim: usize, scale: f64, seed: u64) -> FfnnModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = FfnnModel::zeros(input_dim, hidden_dim, output_dim);
    for block in m.params_mut() {
        for v in block.iter_mut() {
            *v = rng.random_range(-scale..=scale);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn zero_weights_predict_b2() {
        let mut m = FfnnModel::zeros(3, 4, 2);
        m.b2 = ndarray::array![1.5, -2.0];
        let p = m.predict(&gaussian(5, 3, 1)).unwrap();
        for row in p.rows() {
            assert_eq!(row.to_vec(), vec![1.5, -2.0]);
        }
    }

    #[test]
    fn hidden_dim_zero_rejected() {
        let x = gaussian(10, 2, 2);
        assert!(fit_ffnn(&x, &x, 0, &FfnnHyper::default()).is_err());
    }

    #[test]
    fn constant_target_converges() {
        let x = gaussian(40, 5, 3);
        let y = Array2::from_elem((40, 3), 0.7);
        let hyper = FfnnHyper {
            learning_rate: 0.05,
            epochs: 20_000,
            patience: 20_000,
            seed: 5,
            ..Default::default()
        };
        let m = fit_ffnn(&x, &y, 6, &hyper).unwrap();
        let train = m.loss(&x, &y);
        assert!(train < 1e-6, "train mse {train}");
        let (_, out) = m.forward(&Array2::zeros((1, 5)));
        for v in out.iter() {
            assert!((v - 0.7).abs() < 1e-2);
        }
    }

    #[test]
    fn same_seed_same_model() {
        let x = gaussian(30, 4, 6);
        let y = gaussian(30, 2, 7);
        let hyper = FfnnHyper {
            epochs: 50,
            seed: 9,
            ..Default::default()
        };
        let a = fit_ffnn(&x, &y, 5, &hyper).unwrap();
        let b = fit_ffnn(&x, &y, 5, &hyper).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log.len(), b.log.len());
    }

    #[test]
    fn divergence_is_reported() {
        let x = gaussian(20, 3, 8) * 100.0;
        let y = gaussian(20, 2, 9) * 1e6;
        let hyper = FfnnHyper {
            learning_rate: 1e3,
            epochs: 200,
            patience: 1000,
            ..Default::default()
        };
        match fit_ffnn(&x, &y, 4, &hyper) {
            Err(Error::Diverged { epoch }) => assert!(epoch > 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn early_stopping_keeps_best_validation_epoch() {
        let x = gaussian(60, 8, 10);
        let y = gaussian(60, 3, 11);
        let hyper = FfnnHyper {
            epochs: 400,
            patience: 5,
            learning_rate: 0.1,
            ..Default::default()
        };
        let m = fit_ffnn(&x, &y, 32, &hyper).unwrap();
        let best = m
            .log
            .iter()
            .filter_map(|r| r.val_mse.map(|v| (v, r.epoch)))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap();
        assert_eq!(m.best_epoch, best.1);
        assert!(m.log.len() < 400, "pure noise should trigger early stopping");
    }

    #[test]
    fn gradient_check_random_network() {
        let m = random_ffnn(4, 5, 3, 0.5, 12);
        let x = gaussian(10, 4, 13);
        let y = gaussian(10, 3, 14);
        let err = ffnn_gradient_check(&m, &x, &y, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn small_shapes_do_not_break_gradient_layout() {
        // A single row with one output made dot() return column-major W1
        // gradients, which the parameter update could not flatten.
        for n in 1..=3 {
            for dx in 1..=3 {
                for h in 1..=3 {
                    for dy in 1..=2 {
                        let m = random_ffnn(dx, h, dy, 0.5, (n * 10 + dx * 3 + h) as u64);
                        let x = gaussian(n, dx, 18);
                        let y = gaussian(n, dy, 19);
                        let (_, g) = m.gradients(&x, &y).unwrap();
                        assert!(g.w1.is_standard_layout() && g.w2.is_standard_layout());
                        let err = ffnn_gradient_check(&m, &x, &y, 1e-5).unwrap();
                        assert!(err < 1e-4, "n={n} dx={dx} h={h} dy={dy}: {err}");
                    }
                }
            }
        }
    }

    #[test]
    fn zero_input_gives_exact_zero_w1_gradient() {
        let m = random_ffnn(3, 4, 2, 0.5, 15);
        let x = Array2::zeros((6, 3));
        let y = gaussian(6, 2, 16);
        let (_, g) = m.loss_and_grads(&x, &y);
        assert!(g.w1.iter().all(|&v| v == 0.0));
        let err = ffnn_gradient_check(&m, &x, &y, 1e-5).unwrap();
        assert!(err < 1e-4);
    }

    #[test]
    fn epsilon_out_of_range() {
        let m = random_ffnn(2, 2, 1, 0.5, 17);
        let x = gaussian(3, 2, 18);
        let y = gaussian(3, 1, 19);
        let err = ffnn_gradient_check(&m, &x, &y, 1.0).unwrap_err();
        assert!(err.to_string().contains("epsilon out of range"));
    }
}

// SPDX-License-Identifier: MIT OR Apache-2.0

//! PLS regression (PLS2) fitted with NIPALS and regression-mode deflation.
//!
//! X and Y are centered but not scaled. For each component the inner loop
//! alternates
//!
//! ```text
//! w = Xᵀu / ‖Xᵀu‖,  t = Xw,  c = Yᵀt / tᵀt,  u = Yc / cᵀc
//! ```
//!
//! until `w` moves less than the tolerance, then deflates
//! `X ← X − t pᵀ`, `Y ← Y − t cᵀ` with `p = Xᵀt / tᵀt`.
//! The coefficient matrix is `B = R Cᵀ` where the rotations `R` satisfy
//! `T = X₀ R`.

use ndarray::{Array1, Array2, Axis};

use super::check_rows;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PlsOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Keep the components found so far instead of failing when a component
    /// cannot be extracted (X or Y fully explained). With nothing extracted
    /// the model predicts the training mean of Y.
    pub truncate: bool,
}

impl Default for PlsOptions {
    fn default() -> Self {
        PlsOptions {
            tol: 1e-10,
            max_iter: 500,
            truncate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlsModel {
    /// Number of components actually extracted.
    pub k: usize,
    pub x_mean: Array1<f64>,
    pub y_mean: Array1<f64>,
    /// d_x × k
    pub x_weights: Array2<f64>,
    /// d_x × k
    pub x_loadings: Array2<f64>,
    /// d_y × k
    pub y_loadings: Array2<f64>,
    /// d_x × d_y, maps centered X to centered Y.
    pub coefficients: Array2<f64>,
    /// Inner iterations used per component.
    pub n_iter: Vec<usize>,
}

pub fn fit_pls(x: &Array2<f64>, y: &Array2<f64>, k: usize) -> Result<PlsModel> {
    fit_pls_with(x, y, k, &PlsOptions::default())
}

pub fn fit_pls_with(x: &Array2<f64>, y: &Array2<f64>, k: usize, opts: &PlsOptions) -> Result<PlsModel> {
    check_rows(x, y)?;
    let (n, dx) = x.dim();
    let dy = y.ncols();
    if k == 0 || k > n.min(dx) {
        return Err(Error::Invalid(format!(
            "k = {k} outside 1..={}",
            n.min(dx)
        )));
    }

    let x_mean = x.mean_axis(Axis(0)).expect("non-empty");
    let y_mean = y.mean_axis(Axis(0)).expect("non-empty");
    let mut xr = x - &x_mean;
    let mut yr = y - &y_mean;
    let x_scale = frobenius(&xr);
    let y_scale = frobenius(&yr);
    let x_floor = 1e-12 * x_scale.max(f64::MIN_POSITIVE);
    let y_floor = 1e-12 * y_scale.max(f64::MIN_POSITIVE);

    let mut weights: Vec<Array1<f64>> = Vec::with_capacity(k);
    let mut x_loadings: Vec<Array1<f64>> = Vec::with_capacity(k);
    let mut y_loadings: Vec<Array1<f64>> = Vec::with_capacity(k);
    let mut n_iter = Vec::with_capacity(k);

    for component in 0..k {
        match extract_component(&xr, &yr, x_floor, y_floor, opts) {
            Some((w, t, iters)) => {
                let tt = t.dot(&t);
                let p = xr.t().dot(&t) / tt;
                let q = yr.t().dot(&t) / tt;
                xr -= &outer(&t, &p);
                yr -= &outer(&t, &q);
                weights.push(w);
                x_loadings.push(p);
                y_loadings.push(q);
                n_iter.push(iters);
            }
            None if opts.truncate => break,
            None => {
                return Err(Error::RankDeficient {
                    k,
                    component: component + 1,
                })
            }
        }
    }

    // r_a = w_a − Σ_{j<a} (p_jᵀ w_a) r_j
    let mut rotations: Vec<Array1<f64>> = Vec::with_capacity(weights.len());
    for (a, w) in weights.iter().enumerate() {
        let mut r = w.clone();
        for j in 0..a {
            let proj = x_loadings[j].dot(w);
            r.scaled_add(-proj, &rotations[j]);
        }
        rotations.push(r);
    }

    let found = weights.len();
    let x_weights = stack_columns(&weights, dx);
    let x_loadings = stack_columns(&x_loadings, dx);
    let y_loadings = stack_columns(&y_loadings, dy);
    let rot = stack_columns(&rotations, dx);
    let coefficients = rot.dot(&y_loadings.t());

    Ok(PlsModel {
        k: found,
        x_mean,
        y_mean,
        x_weights,
        x_loadings,
        y_loadings,
        coefficients,
        n_iter,
    })
}

/// One NIPALS component on the current residuals, or `None` when no
/// direction with nonzero covariance remains.
fn extract_component(
    xr: &Array2<f64>,
    yr: &Array2<f64>,
    x_floor: f64,
    y_floor: f64,
    opts: &PlsOptions,
) -> Option<(Array1<f64>, Array1<f64>, usize)> {
    if frobenius(xr) <= x_floor {
        return None;
    }
    // Start from the first Y column that still carries signal and is not
    // orthogonal to every X column.
    for col in yr.axis_iter(Axis(1)) {
        if norm(&col.to_owned()) <= y_floor {
            continue;
        }
        let mut u = col.to_owned();
        let w0 = xr.t().dot(&u);
        if norm(&w0) <= x_floor * norm(&u) {
            continue;
        }
        let mut w_old: Option<Array1<f64>> = None;
        let mut iters = 0;
        let mut result = None;
        while iters < opts.max_iter {
            iters += 1;
            let mut w = xr.t().dot(&u);
            let nw = norm(&w);
            if nw <= x_floor * norm(&u) || !nw.is_finite() {
                break;
            }
            w /= nw;
            let t = xr.dot(&w);
            let tt = t.dot(&t);
            if tt <= x_floor * x_floor {
                break;
            }
            let c = yr.t().dot(&t) / tt;
            let cc = c.dot(&c);
            let converged = w_old
                .as_ref()
                .map(|old| norm(&(&w - old)) < opts.tol)
                .unwrap_or(false);
            if cc == 0.0 || converged || yr.ncols() == 1 {
                result = Some((w, t, iters));
                break;
            }
            u = yr.dot(&c) / cc;
            w_old = Some(w.clone());
            result = Some((w, t, iters));
        }
        if result.is_some() {
            return result;
        }
    }
    None
}

impl PlsModel {
    pub fn input_dim(&self) -> usize {
        self.x_mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.y_mean.len()
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} input columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok((x - &self.x_mean).dot(&self.coefficients) + &self.y_mean)
    }
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}

fn norm(v: &Array1<f64>) -> f64 {
    v.dot(v).sqrt()
}

fn frobenius(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn stack_columns(cols: &[Array1<f64>], rows: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows, cols.len()));
    for (j, c) in cols.iter().enumerate() {
        out.column_mut(j).assign(c);
    }
    out
}

//! L2-regularized logistic regression.
//!
//! For targets `y in {0, 1}` and `z = w.x + b` the objective is
//!
//! ```text
//! J(w, b) = (1/n) sum_i [softplus(z_i) - y_i z_i] + (l2/2) ||w||^2
//! ```
//!
//! with the intercept left unregularized so that heavy regularization
//! collapses to an intercept-only fit of the class prior. Optimization is
//! block gradient descent: one Armijo-backtracked gradient step on the
//! weights, then one on the intercept, each block keeping its own step
//! size. Separate steps matter because the two blocks have very different
//! curvature (`l2` versus the mean Bernoulli variance); a shared step
//! would crawl whenever `l2` is large or the intercept direction is
//! nearly flat. Convergence means the max-norm of the full gradient
//! dropped below `tol`.
//!
//! Single-class data with `l2 = 0` has no finite optimum (the likelihood
//! keeps improving as the intercept diverges), so that case is reported as
//! a non-convergence error up front. With `l2 > 0` the weights are pinned
//! near zero and the intercept saturates, which the solver reaches as a
//! valid degenerate fit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{load_model, save_model, Dataset};
use crate::error::{Error, Result};
use crate::scores::{check_feature_len, Predictor};

const FORMAT_LOGISTIC: &str = "ocs-arc/logistic";

// Sufficient-decrease constant. It must be well above 0 or the doubling
// step policy settles on barely-contracting edge steps; 0.3 caps accepted
// steps at ~1.4/L, which contracts by a constant factor per iteration.
const ARMIJO_C: f64 = 0.3;

/// Stopping parameters for [`fit_logistic_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogisticParams {
    fn default() -> Self {
        // tol is bounded below by what an objective-comparison line search
        // can resolve, roughly sqrt(machine epsilon times the curvature);
        // 1e-6 stays attainable even for strongly regularized fits.
        Self {
            max_iter: 50_000,
            tol: 1e-6,
        }
    }
}

/// A fitted logistic-regression classifier; `predict` returns
/// `sigma(w.x + b)`, a probability in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    weights: Vec<f64>,
    intercept: f64,
}

impl LogisticModel {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(path, FORMAT_LOGISTIC, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_model(path, FORMAT_LOGISTIC)
    }
}

impl Predictor for LogisticModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn predict(&self, x: &[f64]) -> Result<f64> {
        check_feature_len(self.weights.len(), x.len())?;
        let z: f64 = self
            .weights
            .iter()
            .zip(x)
            .map(|(w, v)| w * v)
            .sum::<f64>()
            + self.intercept;
        Ok(sigmoid(z))
    }
}

/// Fits logistic regression with default stopping parameters.
pub fn fit_logistic(data: &Dataset, l2: f64) -> Result<LogisticModel> {
    fit_logistic_with(data, l2, &LogisticParams::default())
}

/// Fits logistic regression by backtracking gradient descent.
pub fn fit_logistic_with(
    data: &Dataset,
    l2: f64,
    params: &LogisticParams,
) -> Result<LogisticModel> {
    if data.n_rows() == 0 {
        return Err(Error::EmptyDataset(
            "cannot fit logistic regression on an empty dataset".into(),
        ));
    }
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::invalid(format!("l2 must be finite and >= 0, got {l2}")));
    }
    if params.tol.is_nan() || params.tol <= 0.0 {
        return Err(Error::invalid("tol must be > 0"));
    }
    if let Some(bad) = data.targets().iter().position(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::invalid(format!(
            "logistic regression needs binary targets in {{0, 1}}, row {bad} has {}",
            data.targets()[bad]
        )));
    }
    let single_class = data.targets().iter().all(|&y| y == data.targets()[0]);
    if single_class && l2 == 0.0 {
        return Err(Error::NonConvergence(
            "single-class data with l2 = 0 has no finite optimum".into(),
        ));
    }

    let d = data.n_cols();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut step_w = 1.0;
    let mut step_b = 1.0;
    let mut grad_norm = f64::INFINITY;

    for _ in 0..params.max_iter {
        let (j, gw, gb) = objective_grad(data, &w, b, l2);
        grad_norm = gb.abs().max(gw.iter().fold(0.0, |m, g| g.abs().max(m)));
        if grad_norm <= params.tol {
            return Ok(LogisticModel {
                weights: w,
                intercept: b,
            });
        }

        let mut moved = false;

        // weights block
        let gw2: f64 = gw.iter().map(|g| g * g).sum();
        if gw2 > 0.0 {
            let mut eta = step_w;
            while eta >= 1e-18 {
                let cand: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - eta * gi).collect();
                if objective(data, &cand, b, l2) <= j - ARMIJO_C * eta * gw2 {
                    w = cand;
                    step_w = (eta * 2.0).min(1e12);
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
        }

        // intercept block, at the updated weights
        let (j, _, gb) = if moved {
            objective_grad(data, &w, b, l2)
        } else {
            (j, Vec::new(), gb)
        };
        if gb != 0.0 {
            let mut eta = step_b;
            while eta >= 1e-18 {
                let cand = b - eta * gb;
                if objective(data, &w, cand, l2) <= j - ARMIJO_C * eta * gb * gb {
                    b = cand;
                    step_b = (eta * 2.0).min(1e15);
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
        }

        if !moved {
            return Err(Error::NonConvergence(format!(
                "line search stalled with gradient norm {grad_norm:.3e} > tol {:.3e}",
                params.tol
            )));
        }
    }

    Err(Error::NonConvergence(format!(
        "gradient norm {grad_norm:.3e} > tol {:.3e} after {} iterations",
        params.tol, params.max_iter
    )))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn linear(data: &Dataset, w: &[f64], b: f64, i: usize) -> f64 {
    data.row(i).iter().zip(w).map(|(x, wi)| x * wi).sum::<f64>() + b
}

fn objective(data: &Dataset, w: &[f64], b: f64, l2: f64) -> f64 {
    let n = data.n_rows() as f64;
    let mut loss = 0.0;
    for i in 0..data.n_rows() {
        let z = linear(data, w, b, i);
        loss += softplus(z) - data.targets()[i] * z;
    }
    loss / n + 0.5 * l2 * w.iter().map(|wi| wi * wi).sum::<f64>()
}

fn objective_grad(data: &Dataset, w: &[f64], b: f64, l2: f64) -> (f64, Vec<f64>, f64) {
    let n = data.n_rows() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for i in 0..data.n_rows() {
        let z = linear(data, w, b, i);
        let y = data.targets()[i];
        loss += softplus(z) - y * z;
        let r = sigmoid(z) - y;
        for (g, x) in gw.iter_mut().zip(data.row(i)) {
            *g += r * x;
        }
        gb += r;
    }
    for (g, wi) in gw.iter_mut().zip(w) {
        *g = *g / n + l2 * wi;
    }
    (
        loss / n + 0.5 * l2 * w.iter().map(|wi| wi * wi).sum::<f64>(),
        gw,
        gb / n,
    )
}

// ---------------------------------------------------------------- tests --

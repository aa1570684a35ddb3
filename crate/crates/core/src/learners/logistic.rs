//! L2-regularized logistic regression.
//!
//! Minimizes `Σ softplus(-s·z) + ‖w‖² / (2c)` (intercept unpenalized) with
//! L-BFGS and an Armijo backtracking line search, so the objective never
//! increases between iterations.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{check_dense_row, check_matrix, sigmoid, softplus};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Stop once an iteration improves the objective by less than this.
pub const LOSS_TOLERANCE: f64 = 1e-8;
const HISTORY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrParams {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LogisticModel {
    pub fn linear_predictor(&self, x: &FeatureVector) -> Result<f64> {
        check_dense_row(x, self.weights.len())?;
        Ok(dot(&self.weights, &x.values) + self.intercept)
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64> {
        Ok(sigmoid(self.linear_predictor(x)?))
    }
}

/// Training trace, exposed for convergence checks.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: LogisticModel,
    /// Objective before the first iteration, then after each one.
    pub loss_history: Vec<f64>,
    pub final_gradient_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Objective over the parameter vector `[w.., b]`, and its gradient.
pub fn objective(params: &[f64], rows: &[FeatureVector], y: &[bool], c: f64) -> (f64, Vec<f64>) {
    let d = params.len() - 1;
    let (w, b) = (&params[..d], params[d]);
    let mut grad = vec![0.0; d + 1];
    let mut loss = 0.0;
    for (r, &label) in rows.iter().zip(y) {
        let z = dot(w, &r.values) + b;
        loss += if label { softplus(-z) } else { softplus(z) };
        let resid = sigmoid(z) - if label { 1.0 } else { 0.0 };
        for (g, x) in grad[..d].iter_mut().zip(&r.values) {
            *g += resid * x;
        }
        grad[d] += resid;
    }
    let inv_c = 1.0 / c;
    loss += 0.5 * inv_c * dot(w, w);
    for (g, wj) in grad[..d].iter_mut().zip(w) {
        *g += inv_c * wj;
    }
    (loss, grad)
}

pub fn train_logistic(rows: &[FeatureVector], y: &[bool], hp: &LrParams) -> Result<LogisticModel> {
    Ok(fit_logistic(rows, y, hp)?.model)
}

pub fn fit_logistic(rows: &[FeatureVector], y: &[bool], hp: &LrParams) -> Result<LogisticFit> {
    let d = check_matrix(rows, y, true)?;
    if !(hp.c > 0.0 && hp.c.is_finite()) {
        return Err(Error::InvalidHyperParams(format!("C must be positive, got {}", hp.c)));
    }

    let mut x = vec![0.0; d + 1];
    let (mut f, mut g) = objective(&x, rows, y, hp.c);
    let mut history = vec![f];
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(HISTORY);

    for _ in 0..hp.max_iter {
        let gnorm = norm(&g);
        if gnorm < 1e-12 {
            break;
        }
        let mut dir = two_loop(&g, &mem);
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // not a descent direction; fall back to steepest descent
            mem.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = if mem.is_empty() { 1.0 / gnorm.max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(a, p)| a + step * p).collect();
            let (fc, gc) = objective(&cand, rows, y, hp.c);
            if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if mem.len() == HISTORY {
                mem.pop_front();
            }
            mem.push_back((s, yv, 1.0 / sy));
        }
        let improvement = f - fn_;
        x = xn;
        f = fn_;
        g = gn;
        history.push(f);
        if improvement < LOSS_TOLERANCE {
            break;
        }
    }

    let final_gradient_norm = norm(&g);
    let intercept = x.pop().unwrap_or(0.0);
    Ok(LogisticFit {
        model: LogisticModel { weights: x, intercept },
        loss_history: history,
        final_gradient_norm,
    })
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// L-BFGS two-loop recursion: returns `-H·g`.
fn two_loop(g: &[f64], mem: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(mem.len());
    for (s, y, rho) in mem.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = mem.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

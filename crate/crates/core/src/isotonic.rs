//! Isotonic (monotone least-squares) calibration maps.

use serde::{Deserialize, Serialize};

/// Piecewise-linear non-decreasing map through `(knots[i], values[i])`,
/// clamped to the end values outside `[knots[0], knots[last]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicMap {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

/// Pool-adjacent-violators on `values` with weights. Returns the weighted
/// least-squares non-decreasing fit, one value per input.
pub fn pava(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let w = w1 + w2;
            *blocks.last_mut().expect("two blocks") = ((m1 * w1 + m2 * w2) / w, w, n1 + n2);
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}

/// Fits a calibration map of binary `targets` on `scores`. Tied scores are
/// pooled into one knot before the monotone fit.
pub fn fit_isotonic(scores: &[f64], targets: &[bool]) -> IsotonicMap {
    assert_eq!(scores.len(), targets.len(), "scores and targets must align");
    let mut pairs: Vec<(f64, f64)> = scores
        .iter()
        .zip(targets)
        .map(|(&s, &t)| (s, if t { 1.0 } else { 0.0 }))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut knots = Vec::new();
    let mut means = Vec::new();
    let mut weights = Vec::new();
    for (s, t) in pairs {
        if knots.last() == Some(&s) {
            let k = knots.len() - 1;
            means[k] += t;
            weights[k] += 1.0;
        } else {
            knots.push(s);
            means.push(t);
            weights.push(1.0);
        }
    }
    for (m, w) in means.iter_mut().zip(&weights) {
        *m /= w;
    }
    let values = pava(&means, &weights);
    IsotonicMap { knots, values }
}

impl IsotonicMap {
    pub fn apply(&self, s: f64) -> f64 {
        let n = self.knots.len();
        if n == 0 {
            return s.clamp(0.0, 1.0);
        }
        if s.is_nan() || s <= self.knots[0] {
            return self.values[0];
        }
        if s >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        let hi = self.knots.partition_point(|&k| k <= s);
        let lo = hi - 1;
        let (x0, x1) = (self.knots[lo], self.knots[hi]);
        let (y0, y1) = (self.values[lo], self.values[hi]);
        y0 + (y1 - y0) * (s - x0) / (x1 - x0)
    }
}

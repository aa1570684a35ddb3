//! Discrimination and calibration statistics with bootstrap intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_BOOTSTRAP: usize = 1000;
pub const LOGIT_CLAMP: f64 = 1e-6;
pub const RELIABILITY_BINS: usize = 10;
const MAX_REDRAWS: usize = 100;

fn class_counts(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: labels.len(),
        });
    }
    let pos = labels.iter().filter(|&&l| l).count();
    Ok((pos, labels.len() - pos))
}

/// Mann-Whitney AUROC from midrank sums; ties count one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined("AUROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Confusion counts `(tp, fp)` at each descending unique score threshold.
fn threshold_counts(scores: &[f64], labels: &[bool]) -> Vec<(f64, usize, usize)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        if k + 1 == order.len() || scores[order[k + 1]] != scores[i] {
            out.push((scores[i], tp, fp));
        }
    }
    out
}

/// Step-wise average precision: `Σ (R_n − R_{n−1}) · P_n`.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, _) = class_counts(scores, labels)?;
    if pos == 0 {
        return Err(Error::MetricUndefined("AUPRC needs a positive"));
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (_, tp, fp) in threshold_counts(scores, labels) {
        let recall = tp as f64 / pos as f64;
        ap += (recall - prev_recall) * tp as f64 / (tp + fp) as f64;
        prev_recall = recall;
    }
    Ok(ap)
}

/// ROC curve as `(false positive rate, true positive rate)` from (0, 0).
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined("ROC needs both classes"));
    }
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(
        threshold_counts(scores, labels)
            .into_iter()
            .map(|(_, tp, fp)| (fp as f64 / neg as f64, tp as f64 / pos as f64)),
    );
    Ok(pts)
}

/// Precision-recall pairs `(recall, precision)` per threshold.
pub fn pr_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, _) = class_counts(scores, labels)?;
    if pos == 0 {
        return Err(Error::MetricUndefined("PR curve needs a positive"));
    }
    Ok(threshold_counts(scores, labels)
        .into_iter()
        .map(|(_, tp, fp)| (tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_bootstrap: usize,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Percentile bootstrap 95% interval. Each replicate draws from its own
/// stream of `seed`, so the result does not depend on thread scheduling.
/// Resamples lacking a class (or on which the metric is undefined) are redrawn.
pub fn bootstrap_ci<F>(metric: F, scores: &[f64], labels: &[bool], n: usize, seed: u64) -> Result<MetricResult>
where
    F: Fn(&[f64], &[bool]) -> Result<f64> + Sync,
{
    let point = metric(scores, labels)?;
    if n == 0 {
        return Ok(MetricResult {
            point,
            ci_low: point,
            ci_high: point,
            n_bootstrap: 0,
        });
    }
    let m = scores.len();
    let draws: Result<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|it| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(it as u64);
            let mut s = vec![0.0; m];
            let mut l = vec![false; m];
            for _ in 0..MAX_REDRAWS {
                for k in 0..m {
                    let i = rng.random_range(0..m);
                    s[k] = scores[i];
                    l[k] = labels[i];
                }
                let pos = l.iter().filter(|&&b| b).count();
                if pos == 0 || pos == m {
                    continue;
                }
                if let Ok(v) = metric(&s, &l) {
                    if v.is_finite() {
                        return Ok(v);
                    }
                }
            }
            Err(Error::Bootstrap(format!(
                "replicate {it} failed after {MAX_REDRAWS} redraws"
            )))
        })
        .collect();
    let mut draws = draws?;
    draws.sort_by(f64::total_cmp);
    Ok(MetricResult {
        point,
        ci_low: quantile(&draws, 0.025),
        ci_high: quantile(&draws, 0.975),
        n_bootstrap: n,
    })
}

fn clamped_logit(s: f64) -> f64 {
    let p = s.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
    (p / (1.0 - p)).ln()
}

fn loglik(z: &[f64], y: &[bool], a: f64, b: f64, offset: bool) -> f64 {
    z.iter()
        .zip(y)
        .map(|(&x, &l)| {
            let eta = a + if offset { x } else { b * x };
            let sp = |t: f64| {
                if t > 0.0 {
                    t + (-t).exp().ln_1p()
                } else {
                    t.exp().ln_1p()
                }
            };
            -if l { sp(-eta) } else { sp(eta) }
        })
        .sum()
}

/// Newton-Raphson logistic fit of `y ~ a + b·z` (or `a + z` with `offset`).
fn newton_logistic(z: &[f64], y: &[bool], offset: bool) -> Result<(f64, f64)> {
    let (mut a, mut b) = (0.0, if offset { 1.0 } else { 0.0 });
    let mut ll = loglik(z, y, a, b, offset);
    for _ in 0..200 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &l) in z.iter().zip(y) {
            let eta = a + if offset { x } else { b * x };
            let p = 1.0 / (1.0 + (-eta).exp());
            let r = if l { 1.0 } else { 0.0 } - p;
            let w = p * (1.0 - p);
            ga += r;
            gb += r * x;
            haa += w;
            hab += w * x;
            hbb += w * x * x;
        }
        let (da, db) = if offset {
            if haa <= 0.0 {
                return Err(Error::NonConvergent);
            }
            (ga / haa, 0.0)
        } else {
            let det = haa * hbb - hab * hab;
            if det.abs() < 1e-300 {
                return Err(Error::NonConvergent);
            }
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let (na, nb) = (a + step * da, b + step * db);
            let nll = loglik(z, y, na, nb, offset);
            if nll.is_finite() && nll >= ll - 1e-12 {
                a = na;
                b = nb;
                ll = nll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergent);
        }
        if (step * da).abs().max((step * db).abs()) < 1e-10 {
            if !(a.is_finite() && b.is_finite()) || a.abs() > 1e6 || b.abs() > 1e6 {
                return Err(Error::NonConvergent);
            }
            return Ok((a, b));
        }
    }
    Err(Error::NonConvergent)
}

/// Calibration slope (logistic refit coefficient on the logit of the
/// scores) and calibration-in-the-large intercept (offset fit).
pub fn calibration_slope_intercept(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined("calibration needs both classes"));
    }
    let z: Vec<f64> = scores.iter().map(|&s| clamped_logit(s)).collect();
    let (_, slope) = newton_logistic(&z, labels, false)?;
    let (intercept, _) = newton_logistic(&z, labels, true)?;
    Ok((slope, intercept))
}

pub fn calibration_slope(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(calibration_slope_intercept(scores, labels)?.0)
}

pub fn calibration_intercept(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = class_counts(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::MetricUndefined("calibration needs both classes"));
    }
    let z: Vec<f64> = scores.iter().map(|&s| clamped_logit(s)).collect();
    Ok(newton_logistic(&z, labels, true)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub mean_predicted: f64,
    pub observed_rate: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityCurve {
    pub bins: Vec<ReliabilityBin>,
}

/// Quantile-binned reliability curve. Equal scores never straddle a bin
/// boundary, so heavy ties yield fewer bins.
pub fn reliability_curve(scores: &[f64], labels: &[bool], n_bins: usize) -> Result<ReliabilityCurve> {
    class_counts(scores, labels)?;
    let n = scores.len();
    if n == 0 {
        return Err(Error::EmptyInput("reliability curve"));
    }
    let n_bins = n_bins.clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for b in 1..=n_bins {
        let mut end = (b * n).div_ceil(n_bins).max(start);
        while end < n && end > 0 && scores[order[end]] == scores[order[end - 1]] {
            end += 1;
        }
        if end <= start {
            continue;
        }
        let members = &order[start..end];
        let count = members.len();
        bins.push(ReliabilityBin {
            mean_predicted: members.iter().map(|&i| scores[i]).sum::<f64>() / count as f64,
            observed_rate: members.iter().filter(|&&i| labels[i]).count() as f64 / count as f64,
            count,
        });
        start = end;
    }
    Ok(ReliabilityCurve { bins })
}

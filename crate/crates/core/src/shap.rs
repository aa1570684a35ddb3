//! Exact Shapley attributions: path-dependent TreeSHAP for boosted trees and
//! the closed form for linear models, plus ensemble-level feature rankings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{schema, FeatureVector};
use crate::learners::gbm::{goes_left, TreeNode};
use crate::learners::{check_dense_row, Family, GbmModel, LogisticModel, TrainedModel};
use crate::pipeline::Ensemble;

pub const DEFAULT_TOP_K: usize = 4;

/// Per-slot contributions on the model's margin scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub values: Vec<f64>,
    pub base_value: f64,
}

impl Attribution {
    /// `base + Σ values`, which reproduces the model margin.
    pub fn total(&self) -> f64 {
        self.base_value + self.values.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: usize,
    zero: f64,
    one: f64,
    weight: f64,
}

const NO_FEATURE: usize = usize::MAX;

fn extend(path: &mut Vec<PathElement>, zero: f64, one: f64, feature: usize) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero,
        one,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    });
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind(path: &mut Vec<PathElement>, i: usize) {
    let depth = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    for j in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[j].weight;
            path[j].weight = next * d1 / ((j + 1) as f64 * one);
            next = tmp - path[j].weight * zero * (depth - j) as f64 / d1;
        } else {
            path[j].weight = path[j].weight * d1 / (zero * (depth - j) as f64);
        }
    }
    for j in i..depth {
        path[j].feature = path[j + 1].feature;
        path[j].zero = path[j + 1].zero;
        path[j].one = path[j + 1].one;
    }
    path.pop();
}

fn unwound_sum(path: &[PathElement], i: usize) -> f64 {
    let depth = path.len() - 1;
    let (one, zero) = (path[i].one, path[i].zero);
    let d1 = (depth + 1) as f64;
    let mut next = path[depth].weight;
    let mut total = 0.0;
    for j in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next * d1 / ((j + 1) as f64 * one);
            total += tmp;
            next = path[j].weight - tmp * zero * (depth - j) as f64 / d1;
        } else {
            total += path[j].weight / zero / ((depth - j) as f64 / d1);
        }
    }
    total
}

fn recurse(
    node: &TreeNode,
    x: &FeatureVector,
    phi: &mut [f64],
    parent: &[PathElement],
    zero: f64,
    one: f64,
    feature: usize,
) {
    let mut path = parent.to_vec();
    extend(&mut path, zero, one, feature);
    match node {
        TreeNode::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let e = path[i];
                phi[e.feature] += w * (e.one - e.zero) * value;
            }
        }
        TreeNode::Split {
            feature: split,
            threshold,
            missing,
            cover,
            left,
            right,
            ..
        } => {
            let (hot, cold) = if goes_left(x, *split, *threshold, *missing) {
                (left, right)
            } else {
                (right, left)
            };
            let (mut iz, mut io) = (1.0, 1.0);
            if let Some(k) = (1..path.len()).find(|&k| path[k].feature == *split) {
                iz = path[k].zero;
                io = path[k].one;
                unwind(&mut path, k);
            }
            recurse(hot, x, phi, &path, iz * hot.cover() / cover, io, *split);
            recurse(cold, x, phi, &path, iz * cold.cover() / cover, 0.0, *split);
        }
    }
}

/// Cover-weighted mean leaf value: the tree's expectation over training rows.
pub fn tree_expectation(node: &TreeNode) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split { cover, left, right, .. } => {
            (left.cover() * tree_expectation(left) + right.cover() * tree_expectation(right)) / cover
        }
    }
}

/// Exact Shapley values of one tree's raw output.
pub fn tree_shap_single(tree: &TreeNode, x: &FeatureVector, n_features: usize) -> Vec<f64> {
    let mut phi = vec![0.0; n_features];
    recurse(tree, x, &mut phi, &[], 1.0, 1.0, NO_FEATURE);
    phi
}

pub fn tree_shap(model: &GbmModel, x: &FeatureVector) -> Result<Attribution> {
    if x.len() != model.n_features {
        return Err(Error::DimensionMismatch {
            expected: model.n_features,
            got: x.len(),
        });
    }
    let mut values = vec![0.0; model.n_features];
    let mut expected = 0.0;
    for t in &model.trees {
        recurse(t, x, &mut values, &[], 1.0, 1.0, NO_FEATURE);
        expected += tree_expectation(t);
    }
    values.iter_mut().for_each(|v| *v *= model.learning_rate);
    Ok(Attribution {
        values,
        base_value: model.base_score + model.learning_rate * expected,
    })
}

/// `w_j (x_j − mean_j)` with base `w·mean + b`.
pub fn linear_shap(model: &LogisticModel, x: &FeatureVector, background_mean: &[f64]) -> Result<Attribution> {
    check_dense_row(x, model.weights.len())?;
    if background_mean.len() != model.weights.len() {
        return Err(Error::DimensionMismatch {
            expected: model.weights.len(),
            got: background_mean.len(),
        });
    }
    let values = model
        .weights
        .iter()
        .zip(&x.values)
        .zip(background_mean)
        .map(|((w, xi), m)| w * (xi - m))
        .collect();
    let base_value = model
        .weights
        .iter()
        .zip(background_mean)
        .map(|(w, m)| w * m)
        .sum::<f64>()
        + model.intercept;
    Ok(Attribution { values, base_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    /// `(slot name, mean |shap|)`, non-increasing; ties keep slot order.
    pub entries: Vec<(String, f64)>,
}

impl FeatureRanking {
    pub fn top(&self, k: usize) -> &[(String, f64)] {
        &self.entries[..k.min(self.entries.len())]
    }
}

/// Mean |shap| per slot over `rows`, averaged across the ensemble members.
/// Rows are raw feature vectors; each member applies its fold preprocessor.
pub fn rank_features(ens: &Ensemble, rows: &[FeatureVector]) -> Result<FeatureRanking> {
    if !matches!(ens.family, Family::Gbm | Family::Lr) {
        return Err(Error::AttributionsUnavailable(ens.family.to_string()));
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("attribution rows"));
    }
    let d = ens.preprocessors.first().map_or(0, |p| p.dim());
    let mut totals = vec![0.0; d];
    for m in &ens.members {
        let pre = &ens.preprocessors[m.fold];
        let mut acc = vec![0.0; d];
        for r in rows {
            let x = pre.apply(r)?;
            let a = match &m.model {
                TrainedModel::Gbm(g) => tree_shap(g, &x)?,
                TrainedModel::Lr(l) => linear_shap(l, &x, &ens.background_means[m.fold])?,
                other => return Err(Error::AttributionsUnavailable(other.family().to_string())),
            };
            for (s, v) in acc.iter_mut().zip(&a.values) {
                *s += v.abs();
            }
        }
        for (t, s) in totals.iter_mut().zip(acc) {
            *t += s / rows.len() as f64;
        }
    }
    let n_members = ens.members.len().max(1) as f64;
    let names: Vec<String> = if d == schema().len() {
        schema().names().map(str::to_owned).collect()
    } else {
        (0..d).map(|j| format!("x{j}")).collect()
    };
    let mut entries: Vec<(usize, f64)> = totals.into_iter().map(|t| t / n_members).enumerate().collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(FeatureRanking {
        entries: entries.into_iter().map(|(j, v)| (names[j].clone(), v)).collect(),
    })
}

//! Independent oracles and fixture loaders shared by the integration tests
//! and the acceptance runner.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use complication_risk::cohort::{parse_encounters, Encounter};
use complication_risk::features::FeatureVector;
use complication_risk::learners::gbm::{MissingDirection, TreeNode};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn load_fixture_cohort(name: &str) -> Vec<Encounter> {
    let out = parse_encounters(BufReader::new(File::open(fixture(name)).unwrap())).unwrap();
    assert!(
        out.errors.is_empty(),
        "fixture {name} has parse errors: {:?}",
        out.errors
    );
    out.encounters
}

/// Expected onset per encounter and complication code; `None` is "NA".
pub fn load_expected_labels() -> BTreeMap<String, BTreeMap<String, Option<i64>>> {
    let mut r = csv::Reader::from_path(fixture("expected_labels.csv")).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.unwrap();
        let row = header[1..]
            .iter()
            .zip(rec.iter().skip(1))
            .map(|(k, v)| (k.clone(), if v == "NA" { None } else { Some(v.parse().unwrap()) }))
            .collect();
        out.insert(rec[0].to_string(), row);
    }
    out
}

pub struct Snippet {
    pub text: String,
    pub opacity: bool,
    pub bilateral: bool,
    pub ards_term: bool,
    pub positive: bool,
}

pub fn load_snippets() -> Vec<Snippet> {
    let mut r = csv::Reader::from_path(fixture("reports.csv")).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            let b = |i: usize| &rec[i] == "1";
            Snippet {
                text: rec[0].to_string(),
                opacity: b(1),
                bilateral: b(2),
                ards_term: b(3),
                positive: b(4),
            }
        })
        .collect()
}

/// Pairwise AUROC: fraction of (positive, negative) pairs ranked correctly,
/// ties counting one half.
pub fn auroc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice_wins = 0u64;
    let (mut p, mut n) = (0u64, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        if li {
            p += 1;
        } else {
            n += 1;
        }
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            twice_wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    twice_wins as f64 / 2.0 / (p * n) as f64
}

/// Average precision as the mean, over positives, of the precision among
/// everything scored at least as high.
pub fn average_precision_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let pos: Vec<usize> = (0..scores.len()).filter(|&i| labels[i]).collect();
    let mut total = 0.0;
    for &i in &pos {
        let above: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] >= scores[i]).collect();
        let hits = above.iter().filter(|&&j| labels[j]).count();
        total += hits as f64 / above.len() as f64;
    }
    total / pos.len() as f64
}

/// Least-squares non-decreasing fit by exhaustive search over every split of
/// the sequence into consecutive constant blocks.
pub fn monotone_projection(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n == 0 {
        return Vec::new();
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for cuts in 0u32..(1 << (n - 1)) {
        let mut fit = Vec::with_capacity(n);
        let mut start = 0;
        let mut prev = f64::NEG_INFINITY;
        let mut ok = true;
        for end in 1..=n {
            if end == n || cuts & (1 << (end - 1)) != 0 {
                let mean = y[start..end].iter().sum::<f64>() / (end - start) as f64;
                if mean < prev {
                    ok = false;
                    break;
                }
                prev = mean;
                fit.extend(std::iter::repeat_n(mean, end - start));
                start = end;
            }
        }
        if !ok {
            continue;
        }
        let sse: f64 = fit.iter().zip(y).map(|(f, v)| (f - v) * (f - v)).sum();
        if best.as_ref().is_none_or(|(b, _)| sse < *b - 1e-15) {
            best = Some((sse, fit));
        }
    }
    best.expect("a single block is always feasible").1
}

fn branch_left(x: &FeatureVector, feature: usize, threshold: f64, missing: MissingDirection) -> bool {
    match x.get(feature) {
        Some(v) => v <= threshold,
        None => missing == MissingDirection::Left,
    }
}

/// Cover-weighted expectation of the tree with the features in `known`
/// fixed at `x`.
pub fn conditional_expectation(node: &TreeNode, x: &FeatureVector, known: u32) -> f64 {
    match node {
        TreeNode::Leaf { value, .. } => *value,
        TreeNode::Split {
            feature,
            threshold,
            missing,
            cover,
            left,
            right,
            ..
        } => {
            if known & (1 << feature) != 0 {
                let next = if branch_left(x, *feature, *threshold, *missing) {
                    left
                } else {
                    right
                };
                conditional_expectation(next, x, known)
            } else {
                (left.cover() * conditional_expectation(left, x, known)
                    + right.cover() * conditional_expectation(right, x, known))
                    / cover
            }
        }
    }
}

/// Shapley values by enumerating every coalition.
pub fn exhaustive_shapley(tree: &TreeNode, x: &FeatureVector, d: usize) -> Vec<f64> {
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    (0..d)
        .map(|i| {
            (0u32..(1 << d))
                .filter(|s| s & (1 << i) == 0)
                .map(|s| {
                    let k = s.count_ones() as usize;
                    let w = fact(k) * fact(d - k - 1) / fact(d);
                    w * (conditional_expectation(tree, x, s | (1 << i)) - conditional_expectation(tree, x, s))
                })
                .sum()
        })
        .collect()
}

pub fn random_tree(rng: &mut impl rand::Rng, d: usize, depth: usize) -> TreeNode {
    if depth == 0 || rng.random_bool(0.2) {
        return TreeNode::Leaf {
            value: rng.random_range(-3.0..3.0),
            cover: rng.random_range(1..50) as f64,
        };
    }
    let left = random_tree(rng, d, depth - 1);
    let right = random_tree(rng, d, depth - 1);
    TreeNode::Split {
        feature: rng.random_range(0..d),
        threshold: rng.random_range(0.1..0.9),
        missing: if rng.random_bool(0.5) {
            MissingDirection::Left
        } else {
            MissingDirection::Right
        },
        gain: 1.0,
        cover: left.cover() + right.cover(),
        left: Box::new(left),
        right: Box::new(right),
    }
}

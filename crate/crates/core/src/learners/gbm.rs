//! Gradient-boosted regression trees on the logistic loss.
//!
//! Trees are grown leaf-wise with exact (presorted, histogram-free) split
//! search and second-order gains. Rows whose split feature is missing are
//! routed to whichever child maximizes the gain; that learned default
//! direction is stored on the node and reused at prediction time.

use serde::{Deserialize, Serialize};

use super::{check_matrix, sigmoid, softplus};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const HESSIAN_FLOOR: f64 = 1e-6;
pub const MIN_SUM_HESSIAN_IN_LEAF: f64 = 1e-3;
pub const DEFAULT_MIN_DATA_IN_LEAF: usize = 20;
const MIN_GAIN: f64 = 1e-10;

fn default_min_data() -> usize {
    DEFAULT_MIN_DATA_IN_LEAF
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub num_leaves: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub n_estimators: usize,
    /// Not searched; the conventional library default.
    #[serde(default = "default_min_data")]
    pub min_data_in_leaf: usize,
}

impl GbmParams {
    pub fn new(num_leaves: usize, learning_rate: f64, max_depth: usize, n_estimators: usize) -> Self {
        GbmParams {
            num_leaves,
            learning_rate,
            max_depth,
            n_estimators,
            min_data_in_leaf: DEFAULT_MIN_DATA_IN_LEAF,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingDirection {
    Left,
    Right,
}

/// A regression tree node. `cover` is the number of training rows that
/// reached the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        cover: f64,
    },
    Split {
        feature: usize,
        /// Present values `<= threshold` go left.
        threshold: f64,
        missing: MissingDirection,
        gain: f64,
        cover: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn cover(&self) -> f64 {
        match self {
            TreeNode::Leaf { cover, .. } | TreeNode::Split { cover, .. } => *cover,
        }
    }

    /// Raw (unshrunk) leaf value reached by `x`.
    pub fn leaf_value(&self, x: &FeatureVector) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    missing,
                    left,
                    right,
                    ..
                } => {
                    node = if goes_left(x, *feature, *threshold, *missing) {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.num_leaves() + right.num_leaves(),
        }
    }

    /// Depth in edges; a lone leaf has depth 0.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Calls `f` with every split feature in the subtree.
    pub fn visit_splits(&self, f: &mut dyn FnMut(usize)) {
        if let TreeNode::Split {
            feature, left, right, ..
        } = self
        {
            f(*feature);
            left.visit_splits(f);
            right.visit_splits(f);
        }
    }
}

pub(crate) fn goes_left(x: &FeatureVector, feature: usize, threshold: f64, missing: MissingDirection) -> bool {
    match x.get(feature) {
        Some(v) if !v.is_nan() => v <= threshold,
        _ => missing == MissingDirection::Left,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    /// Log-odds of the training prevalence.
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub trees: Vec<TreeNode>,
}

impl GbmModel {
    /// Pre-sigmoid score: `base + learning_rate · Σ leaf values`.
    pub fn predict_margin(&self, x: &FeatureVector) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let sum: f64 = self.trees.iter().map(|t| t.leaf_value(x)).sum();
        Ok(self.base_score + self.learning_rate * sum)
    }
}

/// Model plus the mean training log-loss before boosting and after each round.
#[derive(Debug, Clone)]
pub struct GbmFit {
    pub model: GbmModel,
    pub loss_history: Vec<f64>,
}

pub fn train_gbm(rows: &[FeatureVector], y: &[bool], hp: &GbmParams) -> Result<GbmModel> {
    Ok(fit_gbm(rows, y, hp)?.model)
}

fn mean_logloss(margins: &[f64], y: &[bool]) -> f64 {
    margins
        .iter()
        .zip(y)
        .map(|(&m, &l)| if l { softplus(-m) } else { softplus(m) })
        .sum::<f64>()
        / y.len() as f64
}

pub fn fit_gbm(rows: &[FeatureVector], y: &[bool], hp: &GbmParams) -> Result<GbmFit> {
    let d = check_matrix(rows, y, false)?;
    if hp.num_leaves < 2 || hp.max_depth < 1 {
        return Err(Error::InvalidHyperParams(format!(
            "num_leaves = {}, max_depth = {}",
            hp.num_leaves, hp.max_depth
        )));
    }
    if !(hp.learning_rate > 0.0 && hp.learning_rate.is_finite()) {
        return Err(Error::InvalidHyperParams(format!(
            "learning_rate = {}",
            hp.learning_rate
        )));
    }
    let n = rows.len();
    let prevalence = y.iter().filter(|&&b| b).count() as f64 / n as f64;
    let base_score = (prevalence / (1.0 - prevalence)).ln();

    let builder = Builder::new(rows, d, hp);
    let mut margins = vec![base_score; n];
    let mut loss_history = vec![mean_logloss(&margins, y)];
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut trees = Vec::with_capacity(hp.n_estimators);
    for _ in 0..hp.n_estimators {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            g[i] = p - if y[i] { 1.0 } else { 0.0 };
            h[i] = p * (1.0 - p);
        }
        let (tree, leaf_rows) = builder.grow(&g, &h);
        for (value, members) in leaf_rows {
            for i in members {
                margins[i as usize] += hp.learning_rate * value;
            }
        }
        trees.push(tree);
        loss_history.push(mean_logloss(&margins, y));
    }
    Ok(GbmFit {
        model: GbmModel {
            base_score,
            learning_rate: hp.learning_rate,
            n_features: d,
            trees,
        },
        loss_history,
    })
}

fn split_score(g: f64, h: f64) -> f64 {
    g * g / h.max(HESSIAN_FLOOR)
}

fn leaf_output(g: f64, h: f64) -> f64 {
    -g / h.max(HESSIAN_FLOOR)
}

#[derive(Debug, Clone, Copy)]
struct SplitCandidate {
    feature: usize,
    threshold: f64,
    missing_left: bool,
    gain: f64,
}

/// Present rows of every feature, sorted by value. Each leaf owns one
/// contiguous range per feature; splitting a leaf reorders only its ranges.
#[derive(Clone)]
struct Columns {
    rows: Vec<Vec<u32>>,
    vals: Vec<Vec<f64>>,
}

struct Leaf {
    /// Range of the leaf's rows in the row buffer.
    span: (usize, usize),
    /// Per feature: range in that feature's column buffers.
    cols: Vec<(usize, usize)>,
    depth: usize,
    g: f64,
    h: f64,
    arena: usize,
    best: Option<SplitCandidate>,
}

impl Leaf {
    fn len(&self) -> usize {
        self.span.1
    }
}

enum ArenaNode {
    Leaf {
        value: f64,
        cover: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        missing: MissingDirection,
        gain: f64,
        cover: f64,
        left: usize,
        right: usize,
    },
}

struct Builder<'a> {
    n: usize,
    d: usize,
    /// Column-major values; NaN marks a missing slot.
    cols: Vec<f64>,
    sorted: Columns,
    hp: &'a GbmParams,
}

/// Running best split; `offer` is ordered so that earlier candidates win ties.
struct Best {
    parent: f64,
    min_data: usize,
    found: Option<SplitCandidate>,
    gain: f64,
}

impl Best {
    #[inline]
    fn offer(
        &mut self,
        feature: usize,
        threshold: f64,
        missing_left: bool,
        l: (usize, f64, f64),
        r: (usize, f64, f64),
    ) {
        let ((cl, gl, hl), (cr, gr, hr)) = (l, r);
        if cl < self.min_data || cr < self.min_data || hl < MIN_SUM_HESSIAN_IN_LEAF || hr < MIN_SUM_HESSIAN_IN_LEAF {
            return;
        }
        let gain = split_score(gl, hl) + split_score(gr, hr) - self.parent;
        if gain > self.gain {
            self.gain = gain;
            self.found = Some(SplitCandidate {
                feature,
                threshold,
                missing_left,
                gain,
            });
        }
    }
}

/// Working state of one tree: row and column buffers plus a side mask.
struct Work {
    rows: Vec<u32>,
    cols: Columns,
    go_left: Vec<bool>,
    tmp_rows: Vec<u32>,
    tmp_vals: Vec<f64>,
}

/// Stable in-place partition of `rows[lo..lo + len]` (and the matching
/// `vals`) by side. Every element is written to both destinations and only
/// the matching cursor advances, which keeps the loop branch-free.
fn partition_range(
    rows: &mut [u32],
    mut vals: Option<&mut [f64]>,
    (lo, len): (usize, usize),
    go_left: &[bool],
    tmp_rows: &mut [u32],
    tmp_vals: &mut [f64],
) -> usize {
    let (mut nl, mut nr) = (0usize, 0usize);
    for k in lo..lo + len {
        let i = rows[k];
        let left = go_left[i as usize] as usize;
        rows[lo + nl] = i;
        tmp_rows[nr] = i;
        if let Some(v) = vals.as_deref_mut() {
            let x = v[k];
            v[lo + nl] = x;
            tmp_vals[nr] = x;
        }
        nl += left;
        nr += 1 - left;
    }
    rows[lo + nl..lo + len].copy_from_slice(&tmp_rows[..nr]);
    if let Some(v) = vals {
        v[lo + nl..lo + len].copy_from_slice(&tmp_vals[..nr]);
    }
    nl
}

impl<'a> Builder<'a> {
    fn new(rows: &[FeatureVector], d: usize, hp: &'a GbmParams) -> Self {
        let n = rows.len();
        let mut cols = vec![f64::NAN; n * d];
        for (i, r) in rows.iter().enumerate() {
            for j in 0..d {
                if let Some(v) = r.get(j) {
                    cols[j * n + i] = v;
                }
            }
        }
        let mut sorted = Columns {
            rows: Vec::with_capacity(d),
            vals: Vec::with_capacity(d),
        };
        for j in 0..d {
            let col = &cols[j * n..(j + 1) * n];
            let mut idx: Vec<u32> = (0..n as u32).filter(|&i| !col[i as usize].is_nan()).collect();
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            sorted.vals.push(idx.iter().map(|&i| col[i as usize]).collect());
            sorted.rows.push(idx);
        }
        Builder { n, d, cols, sorted, hp }
    }

    #[inline]
    fn value(&self, j: usize, i: u32) -> f64 {
        self.cols[j * self.n + i as usize]
    }

    fn grow(&self, g: &[f64], h: &[f64]) -> (TreeNode, Vec<(f64, Vec<u32>)>) {
        let mut work = Work {
            rows: (0..self.n as u32).collect(),
            cols: self.sorted.clone(),
            go_left: vec![false; self.n],
            tmp_rows: vec![0; self.n],
            tmp_vals: vec![0.0; self.n],
        };
        let (gs, hs) = sums(&work.rows, g, h);
        let mut arena = vec![ArenaNode::Leaf {
            value: 0.0,
            cover: self.n as f64,
        }];
        let mut root = Leaf {
            span: (0, self.n),
            cols: work.cols.rows.iter().map(|c| (0, c.len())).collect(),
            depth: 0,
            g: gs,
            h: hs,
            arena: 0,
            best: None,
        };
        root.best = self.best_split(&work, &root, g, h);
        let mut leaves = vec![root];

        while leaves.len() < self.hp.num_leaves {
            let pick = leaves
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.best.map(|b| (i, b.gain)))
                .fold(None, |acc: Option<(usize, f64)>, (i, gain)| match acc {
                    Some((_, best)) if best >= gain => acc,
                    _ => Some((i, gain)),
                });
            let Some((idx, _)) = pick else { break };
            let leaf = leaves.swap_remove(idx);
            let split = leaf.best.expect("picked leaf has a split");
            let cover = leaf.len() as f64;
            let parent_arena = leaf.arena;
            let (mut left, mut right) = self.partition(&mut work, leaf, split, g, h);

            let li = arena.len();
            arena.push(ArenaNode::Leaf {
                value: 0.0,
                cover: left.len() as f64,
            });
            let ri = arena.len();
            arena.push(ArenaNode::Leaf {
                value: 0.0,
                cover: right.len() as f64,
            });
            let missing = if split.missing_left {
                MissingDirection::Left
            } else {
                MissingDirection::Right
            };
            arena[parent_arena] = ArenaNode::Split {
                feature: split.feature,
                threshold: split.threshold,
                missing,
                gain: split.gain,
                cover,
                left: li,
                right: ri,
            };
            left.arena = li;
            right.arena = ri;
            left.best = self.best_split(&work, &left, g, h);
            right.best = self.best_split(&work, &right, g, h);
            // keep a stable, position-independent order for tie-breaking
            let pos = idx.min(leaves.len());
            leaves.insert(pos, right);
            leaves.insert(pos, left);
        }

        let mut leaf_rows = Vec::with_capacity(leaves.len());
        for leaf in leaves {
            let value = leaf_output(leaf.g, leaf.h);
            arena[leaf.arena] = ArenaNode::Leaf {
                value,
                cover: leaf.len() as f64,
            };
            let (lo, len) = leaf.span;
            leaf_rows.push((value, work.rows[lo..lo + len].to_vec()));
        }
        (into_tree(&arena, 0), leaf_rows)
    }

    fn best_split(&self, work: &Work, leaf: &Leaf, g: &[f64], h: &[f64]) -> Option<SplitCandidate> {
        if leaf.depth >= self.hp.max_depth {
            return None;
        }
        let min_data = self.hp.min_data_in_leaf.max(1);
        let n_node = leaf.len();
        if n_node < 2 * min_data {
            return None;
        }
        let mut best = Best {
            parent: split_score(leaf.g, leaf.h),
            min_data,
            found: None,
            gain: MIN_GAIN,
        };

        for (j, &(lo, cp)) in leaf.cols.iter().enumerate() {
            if cp == 0 {
                continue;
            }
            let rows = &work.cols.rows[j][lo..lo + cp];
            let vals = &work.cols.vals[j][lo..lo + cp];
            let (gp, hp) = sums(rows, g, h);
            let cm = n_node - cp;
            let (gm, hm) = (leaf.g - gp, leaf.h - hp);
            // past this many present rows on the left, no right side is large enough
            let last = cp.saturating_sub(min_data.saturating_sub(cm).max(1));

            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..cp - 1 {
                let i = rows[k] as usize;
                gl += g[i];
                hl += h[i];
                let cl = k + 1;
                if cl > last {
                    break;
                }
                let (v, vn) = (vals[k], vals[k + 1]);
                if v == vn || cl + cm < min_data {
                    continue;
                }
                let mut threshold = v + (vn - v) / 2.0;
                if threshold >= vn {
                    threshold = v;
                }
                let cr = cp - cl;
                let (gr, hr) = (gp - gl, hp - hl);
                if cm == 0 {
                    // no missing rows here: default to the larger child
                    best.offer(j, threshold, cl >= cr, (cl, gl, hl), (cr, gr, hr));
                } else {
                    best.offer(j, threshold, false, (cl, gl, hl), (cr + cm, gr + gm, hr + hm));
                    best.offer(j, threshold, true, (cl + cm, gl + gm, hl + hm), (cr, gr, hr));
                }
            }
            if cm > 0 {
                // present versus missing
                best.offer(j, vals[cp - 1], false, (cp, gp, hp), (cm, gm, hm));
            }
        }
        best.found
    }

    fn partition(&self, work: &mut Work, leaf: Leaf, s: SplitCandidate, g: &[f64], h: &[f64]) -> (Leaf, Leaf) {
        let (lo, len) = leaf.span;
        for &i in &work.rows[lo..lo + len] {
            let v = self.value(s.feature, i);
            work.go_left[i as usize] = if v.is_nan() { s.missing_left } else { v <= s.threshold };
        }
        let nl = partition_range(
            &mut work.rows,
            None,
            leaf.span,
            &work.go_left,
            &mut work.tmp_rows,
            &mut work.tmp_vals,
        );
        let mut lcols = Vec::with_capacity(self.d);
        let mut rcols = Vec::with_capacity(self.d);
        for (j, &(clo, clen)) in leaf.cols.iter().enumerate() {
            let k = partition_range(
                &mut work.cols.rows[j],
                Some(&mut work.cols.vals[j]),
                (clo, clen),
                &work.go_left,
                &mut work.tmp_rows,
                &mut work.tmp_vals,
            );
            lcols.push((clo, k));
            rcols.push((clo + k, clen - k));
        }
        let (lg, lh) = sums(&work.rows[lo..lo + nl], g, h);
        let (rg, rh) = sums(&work.rows[lo + nl..lo + len], g, h);
        let child = |span, cols, g, h| Leaf {
            span,
            cols,
            depth: leaf.depth + 1,
            g,
            h,
            arena: 0,
            best: None,
        };
        (
            child((lo, nl), lcols, lg, lh),
            child((lo + nl, len - nl), rcols, rg, rh),
        )
    }
}

fn sums(rows: &[u32], g: &[f64], h: &[f64]) -> (f64, f64) {
    rows.iter()
        .fold((0.0, 0.0), |(a, b), &i| (a + g[i as usize], b + h[i as usize]))
}

fn into_tree(arena: &[ArenaNode], i: usize) -> TreeNode {
    match arena[i] {
        ArenaNode::Leaf { value, cover } => TreeNode::Leaf { value, cover },
        ArenaNode::Split {
            feature,
            threshold,
            missing,
            gain,
            cover,
            left,
            right,
        } => TreeNode::Split {
            feature,
            threshold,
            missing,
            gain,
            cover,
            left: Box::new(into_tree(arena, left)),
            right: Box::new(into_tree(arena, right)),
        },
    }
}

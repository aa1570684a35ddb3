//! Exact k-nearest-neighbors vote under a Minkowski distance.

use serde::{Deserialize, Serialize};

use super::{check_dense_row, check_matrix};
use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub n_neighbors: usize,
    /// Minkowski power: 1 (Manhattan) or 2 (Euclidean).
    pub power: u8,
    /// Recorded for completeness; the search is exact and ignores it.
    pub leaf_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub params: KnnParams,
    pub n_features: usize,
    /// Row-major training matrix.
    pub points: Vec<f64>,
    pub labels: Vec<bool>,
    /// Content hash per training row, used to break distance ties the same
    /// way regardless of row order.
    pub row_hashes: Vec<u64>,
}

fn row_hash(values: &[f64], label: bool) -> u64 {
    // FNV-1a over the value bits and the label
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |byte: u8| {
        h ^= byte as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    };
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            eat(b);
        }
    }
    eat(label as u8);
    h
}

pub fn train_knn(rows: &[FeatureVector], y: &[bool], hp: &KnnParams) -> Result<KnnModel> {
    let d = check_matrix(rows, y, true)?;
    if hp.n_neighbors == 0 || hp.n_neighbors > rows.len() {
        return Err(Error::InvalidHyperParams(format!(
            "n_neighbors = {} with {} training rows",
            hp.n_neighbors,
            rows.len()
        )));
    }
    if !matches!(hp.power, 1 | 2) {
        return Err(Error::InvalidHyperParams(format!(
            "power must be 1 or 2, got {}",
            hp.power
        )));
    }
    let points = rows.iter().flat_map(|r| r.values.iter().copied()).collect();
    let row_hashes = rows.iter().zip(y).map(|(r, &l)| row_hash(&r.values, l)).collect();
    Ok(KnnModel {
        params: hp.clone(),
        n_features: d,
        points,
        labels: y.to_vec(),
        row_hashes,
    })
}

impl KnnModel {
    /// Distance used for ranking: Σ|Δ| for p = 1, Σ Δ² for p = 2 (the square
    /// root is monotone so it is skipped).
    fn rank_distance(&self, row: &[f64], q: &[f64]) -> f64 {
        match self.params.power {
            1 => row.iter().zip(q).map(|(a, b)| (a - b).abs()).sum(),
            _ => row.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(),
        }
    }

    /// Indices of the k nearest training rows, nearest first.
    pub fn neighbors(&self, x: &FeatureVector) -> Result<Vec<usize>> {
        check_dense_row(x, self.n_features)?;
        let mut cand: Vec<(f64, u64, usize)> = self
            .points
            .chunks_exact(self.n_features)
            .enumerate()
            .map(|(i, row)| (self.rank_distance(row, &x.values), self.row_hashes[i], i))
            .collect();
        let key =
            |a: &(f64, u64, usize), b: &(f64, u64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2));
        let k = self.params.n_neighbors;
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, key);
            cand.truncate(k);
        }
        cand.sort_by(key);
        Ok(cand.into_iter().map(|c| c.2).collect())
    }

    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64> {
        let nb = self.neighbors(x)?;
        let pos = nb.iter().filter(|&&i| self.labels[i]).count();
        Ok(pos as f64 / nb.len() as f64)
    }
}

/// Minkowski distance of order `p`.
pub fn minkowski(a: &[f64], b: &[f64], p: u8) -> f64 {
    let p = p as f64;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs().powf(p))
        .sum::<f64>()
        .powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit(xs: &[[f64; 2]], y: &[bool], k: usize, p: u8) -> KnnModel {
        let rows: Vec<_> = xs.iter().map(|x| FeatureVector::dense(x.to_vec())).collect();
        train_knn(
            &rows,
            y,
            &KnnParams {
                n_neighbors: k,
                power: p,
                leaf_size: 30,
            },
        )
        .unwrap()
    }

    #[test]
    fn identity_neighbor() {
        let m = fit(&[[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]], &[false, true, false], 1, 2);
        assert_eq!(m.predict_proba(&FeatureVector::dense(vec![1.0, 1.0])).unwrap(), 1.0);
        assert_eq!(m.predict_proba(&FeatureVector::dense(vec![2.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn global_vote_is_prevalence() {
        let m = fit(
            &[[0.0, 0.0], [1.0, 1.0], [2.0, 0.0], [5.0, 5.0]],
            &[false, true, false, true],
            4,
            1,
        );
        assert_eq!(m.predict_proba(&FeatureVector::dense(vec![9.0, 9.0])).unwrap(), 0.5);
    }

    #[test]
    fn vote_fraction() {
        let m = fit(
            &[[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [9.0, 9.0]],
            &[true, true, false, false],
            3,
            2,
        );
        let p = m.predict_proba(&FeatureVector::dense(vec![0.0, 0.0])).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn minkowski_distances() {
        let q = [0.9, 0.0];
        let a = [1.0, 0.5];
        let b = [0.5, 1.0];
        assert!((minkowski(&q, &a, 2) - 0.5099).abs() < 1e-4);
        assert!((minkowski(&q, &b, 2) - 1.0770).abs() < 1e-4);
        assert!((minkowski(&q, &a, 1) - 0.6).abs() < 1e-12);
        assert!((minkowski(&q, &b, 1) - 1.4).abs() < 1e-12);
        for p in [1, 2] {
            let m = fit(&[a, b], &[true, false], 1, p);
            assert_eq!(m.neighbors(&FeatureVector::dense(q.to_vec())).unwrap(), vec![0]);
        }
    }

    #[test]
    fn too_many_neighbors_rejected() {
        let rows = vec![FeatureVector::dense(vec![0.0]), FeatureVector::dense(vec![1.0])];
        let r = train_knn(
            &rows,
            &[true, false],
            &KnnParams {
                n_neighbors: 3,
                power: 2,
                leaf_size: 1,
            },
        );
        assert!(matches!(r, Err(Error::InvalidHyperParams(_))));
    }

    #[test]
    fn ties_independent_of_row_order() {
        let pts = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let y = [true, false, true, false];
        let q = FeatureVector::dense(vec![0.0, 0.0]);
        let m1 = fit(&pts, &y, 1, 2);
        let rev: Vec<_> = pts.iter().rev().copied().collect();
        let yr: Vec<_> = y.iter().rev().copied().collect();
        let m2 = fit(&rev, &yr, 1, 2);
        assert_eq!(m1.predict_proba(&q).unwrap(), m2.predict_proba(&q).unwrap());
    }
}

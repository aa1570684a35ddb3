//! Base learner families sharing one train/predict contract.
//!
//! Every learner consumes rows of [`FeatureVector`] and binary outcomes and
//! produces a [`TrainedModel`] whose predictions are risks in `[0, 1]`.
//! Only the gradient-boosted trees accept masked (missing) slots; the other
//! families expect imputed, dense rows.

pub mod gbm;
pub mod knn;
pub mod logistic;
pub mod mlp;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, PreprocessKind};

pub use gbm::{GbmModel, GbmParams};
pub use knn::{KnnModel, KnnParams};
pub use logistic::{LogisticModel, LrParams};
pub use mlp::{MlpModel, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Lr,
    Knn,
    Gbm,
    Mlp,
}

impl Family {
    /// Registry order; also the tie-break order for family selection.
    pub const ALL: [Family; 4] = [Family::Lr, Family::Knn, Family::Gbm, Family::Mlp];

    pub fn code(self) -> &'static str {
        match self {
            Family::Lr => "lr",
            Family::Knn => "knn",
            Family::Gbm => "gbm",
            Family::Mlp => "mlp",
        }
    }

    pub fn from_code(s: &str) -> Option<Family> {
        Self::ALL.iter().copied().find(|f| f.code() == s)
    }

    pub fn preprocess_kind(self) -> PreprocessKind {
        match self {
            Family::Lr | Family::Mlp => PreprocessKind::MedianImputeMinmax,
            Family::Knn => PreprocessKind::MedianImputeStandard,
            Family::Gbm => PreprocessKind::Passthrough,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum HyperParams {
    Lr(LrParams),
    Knn(KnnParams),
    Gbm(GbmParams),
    Mlp(MlpParams),
}

impl HyperParams {
    pub fn family(&self) -> Family {
        match self {
            HyperParams::Lr(_) => Family::Lr,
            HyperParams::Knn(_) => Family::Knn,
            HyperParams::Gbm(_) => Family::Gbm,
            HyperParams::Mlp(_) => Family::Mlp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TrainedModel {
    Lr(LogisticModel),
    Knn(KnnModel),
    Gbm(GbmModel),
    Mlp(MlpModel),
}

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct RiskScore(f64);

impl RiskScore {
    pub fn new(p: f64) -> RiskScore {
        RiskScore(if p.is_nan() { 0.5 } else { p.clamp(0.0, 1.0) })
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub(crate) fn check_labels(y: &[bool]) -> Result<()> {
    let pos = y.iter().filter(|&&b| b).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::DegenerateLabels);
    }
    Ok(())
}

/// Validates shape and, for dense learners, the absence of masked slots.
pub(crate) fn check_matrix(rows: &[FeatureVector], y: &[bool], dense: bool) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("training matrix"));
    }
    if rows.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            got: y.len(),
        });
    }
    let dim = rows[0].len();
    for r in rows {
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        if dense {
            if let Some(j) = r.missing.iter().position(|&m| m) {
                return Err(Error::UnexpectedMissing(j));
            }
        }
    }
    check_labels(y)?;
    Ok(dim)
}

pub(crate) fn check_dense_row(x: &FeatureVector, dim: usize) -> Result<()> {
    if x.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x.len(),
        });
    }
    if let Some(j) = x.missing.iter().position(|&m| m) {
        return Err(Error::UnexpectedMissing(j));
    }
    Ok(())
}

/// Trains the family selected by `hp`. `seed` only matters for the MLP.
pub fn train(hp: &HyperParams, rows: &[FeatureVector], y: &[bool], seed: u64) -> Result<TrainedModel> {
    Ok(match hp {
        HyperParams::Lr(p) => TrainedModel::Lr(logistic::train_logistic(rows, y, p)?),
        HyperParams::Knn(p) => TrainedModel::Knn(knn::train_knn(rows, y, p)?),
        HyperParams::Gbm(p) => TrainedModel::Gbm(gbm::train_gbm(rows, y, p)?),
        HyperParams::Mlp(p) => TrainedModel::Mlp(mlp::train_mlp(rows, y, p, seed)?),
    })
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        match self {
            TrainedModel::Lr(_) => Family::Lr,
            TrainedModel::Knn(_) => Family::Knn,
            TrainedModel::Gbm(_) => Family::Gbm,
            TrainedModel::Mlp(_) => Family::Mlp,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            TrainedModel::Lr(m) => m.weights.len(),
            TrainedModel::Knn(m) => m.n_features,
            TrainedModel::Gbm(m) => m.n_features,
            TrainedModel::Mlp(m) => m.layer_sizes[0],
        }
    }
}

pub fn predict_risk(model: &TrainedModel, x: &FeatureVector) -> Result<RiskScore> {
    let p = match model {
        TrainedModel::Lr(m) => m.predict_proba(x)?,
        TrainedModel::Knn(m) => m.predict_proba(x)?,
        TrainedModel::Gbm(m) => sigmoid(m.predict_margin(x)?),
        TrainedModel::Mlp(m) => m.predict_proba(x)?,
    };
    Ok(RiskScore::new(p))
}

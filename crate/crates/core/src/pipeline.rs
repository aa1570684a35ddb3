//! Per-complication model development: task datasets, stratified folds,
//! random hyperparameter search, top-2 fold ensembles, isotonic calibration
//! and family selection.

use std::collections::BTreeMap;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cohort::{Comorbidity, Encounter};
use crate::error::{Error, Result};
use crate::features::{extract_features, fit_preprocessor, FeatureVector, Preprocessor};
use crate::isotonic::{fit_isotonic, IsotonicMap};
use crate::labeler::{label_encounter, ComplicationKind, EncounterLabels};
use crate::learners::mlp::{Activation, LrSchedule, Solver};
use crate::learners::{
    predict_risk, train, Family, GbmParams, HyperParams, KnnParams, LrParams, MlpParams, RiskScore, TrainedModel,
};
use crate::metrics::{auprc, auroc};
use crate::reportnlp::Lexicon;

pub const K_FOLDS: usize = 3;
pub const N_SEARCH: usize = 20;
pub const TOP_HYPERPARAMS: usize = 2;
/// Version of the serialized model bundle.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// Seed for one stochastic task, independent of scheduling order.
pub fn derive_seed(master_seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(label.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// An encounter reduced to what model development needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedEncounter {
    pub encounter_id: String,
    pub features: FeatureVector,
    pub labels: EncounterLabels,
    pub chronic_kidney_disease: bool,
}

pub fn prepare_encounter(enc: &Encounter, lexicon: &Lexicon) -> PreparedEncounter {
    let labels = label_encounter(enc, lexicon);
    PreparedEncounter {
        encounter_id: enc.encounter_id.clone(),
        features: extract_features(enc, &labels),
        labels,
        chronic_kidney_disease: enc.comorbidities.contains(&Comorbidity::ChronicKidneyDisease),
    }
}

pub fn prepare_all(encounters: &[Encounter], lexicon: &Lexicon) -> Vec<PreparedEncounter> {
    encounters.par_iter().map(|e| prepare_encounter(e, lexicon)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskExclusion {
    OccurredWithin24h,
    ChronicKidneyDisease,
}

impl TaskExclusion {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskExclusion::OccurredWithin24h => "occurred within 24h",
            TaskExclusion::ChronicKidneyDisease => "chronic kidney disease",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub complication: ComplicationKind,
    pub ids: Vec<String>,
    pub rows: Vec<FeatureVector>,
    /// Complication developed after the first 24 hours.
    pub outcomes: Vec<bool>,
    pub excluded: Vec<(String, TaskExclusion)>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.outcomes.iter().filter(|&&o| o).count()
    }
}

/// Why a prepared encounter does not belong to `kind`'s dataset, if any.
pub fn task_exclusion(p: &PreparedEncounter, kind: ComplicationKind) -> Option<TaskExclusion> {
    if p.labels.get(kind).within_24h() {
        Some(TaskExclusion::OccurredWithin24h)
    } else if kind == ComplicationKind::Aki && p.chronic_kidney_disease {
        Some(TaskExclusion::ChronicKidneyDisease)
    } else {
        None
    }
}

/// Dataset for one complication without the trainability check; test sets
/// may legitimately lack positives.
pub fn task_rows(rows: &[PreparedEncounter], kind: ComplicationKind) -> TaskDataset {
    let mut ds = TaskDataset {
        complication: kind,
        ids: Vec::new(),
        rows: Vec::new(),
        outcomes: Vec::new(),
        excluded: Vec::new(),
    };
    for p in rows {
        match task_exclusion(p, kind) {
            Some(reason) => ds.excluded.push((p.encounter_id.clone(), reason)),
            None => {
                ds.ids.push(p.encounter_id.clone());
                ds.rows.push(p.features.clone());
                ds.outcomes.push(p.labels.get(kind).after_24h());
            }
        }
    }
    ds
}

pub fn build_task_dataset(rows: &[PreparedEncounter], kind: ComplicationKind) -> Result<TaskDataset> {
    let ds = task_rows(rows, kind);
    if ds.n_positive() == 0 {
        return Err(Error::UntrainableTask(format!(
            "{kind}: no positive rows after exclusions"
        )));
    }
    Ok(ds)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Class-stratified folds: each class is shuffled by `seed` and dealt
/// round-robin, negatives continuing where positives stopped so that fold
/// sizes stay balanced.
pub fn stratified_kfold(outcomes: &[bool], k: usize, seed: u64) -> Result<FoldAssignment> {
    let mut pos: Vec<usize> = (0..outcomes.len()).filter(|&i| outcomes[i]).collect();
    let mut neg: Vec<usize> = (0..outcomes.len()).filter(|&i| !outcomes[i]).collect();
    if k < 2 || pos.len() < k || neg.len() < k {
        return Err(Error::InsufficientStrata {
            k,
            positives: pos.len(),
            negatives: neg.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold_of = vec![0; outcomes.len()];
    for (r, &i) in pos.iter().enumerate() {
        fold_of[i] = r % k;
    }
    let offset = pos.len() % k;
    for (r, &i) in neg.iter().enumerate() {
        fold_of[i] = (offset + r) % k;
    }
    Ok(FoldAssignment { k, fold_of })
}

const LR_C: [f64; 7] = [0.01, 0.1, 1.0, 10.0, 25.0, 50.0, 100.0];
const LR_MAX_ITER: [usize; 3] = [50, 100, 200];
const MLP_ALPHA: [f64; 6] = [0.005, 0.002, 0.01, 0.2, 0.03, 0.05];
const GBM_LEARNING_RATE: [f64; 6] = [0.005, 0.002, 0.01, 0.2, 0.03, 0.1];

fn pick<T: Copy>(rng: &mut impl Rng, xs: &[T]) -> T {
    xs[rng.random_range(0..xs.len())]
}

/// `n` independent uniform draws from the family's search space.
pub fn sample_hyperparameters(family: Family, seed: u64, n: usize) -> Vec<HyperParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match family {
            Family::Lr => HyperParams::Lr(LrParams {
                c: pick(&mut rng, &LR_C),
                max_iter: pick(&mut rng, &LR_MAX_ITER),
            }),
            Family::Knn => HyperParams::Knn(KnnParams {
                leaf_size: rng.random_range(1..=50),
                power: pick(&mut rng, &[1, 2]),
                n_neighbors: rng.random_range(1..=30),
            }),
            Family::Mlp => {
                let hidden: &[&[usize]] = &[&[50, 50, 50], &[50, 100, 50], &[100]];
                HyperParams::Mlp(MlpParams::new(
                    pick(&mut rng, &MLP_ALPHA),
                    pick(&mut rng, &[Activation::Tanh, Activation::Relu]),
                    pick(&mut rng, &[LrSchedule::Constant, LrSchedule::Adaptive]),
                    pick(&mut rng, &[Solver::Sgd, Solver::Adam]),
                    pick(&mut rng, hidden).to_vec(),
                ))
            }
            Family::Gbm => HyperParams::Gbm(GbmParams::new(
                rng.random_range(10..=40),
                pick(&mut rng, &GBM_LEARNING_RATE),
                rng.random_range(1..=10),
                rng.random_range(200..=500),
            )),
        })
        .collect()
}

/// Preprocessed train/validation matrices for one fold.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub fold: usize,
    pub preprocessor: Preprocessor,
    pub train_x: Vec<FeatureVector>,
    pub train_y: Vec<bool>,
    pub val_x: Vec<FeatureVector>,
    pub val_y: Vec<bool>,
}

/// Fits each fold's preprocessor on its training part only.
pub fn prepare_folds(task: &TaskDataset, folds: &FoldAssignment, family: Family) -> Result<Vec<FoldData>> {
    (0..folds.k)
        .map(|f| {
            let tr = folds.complement(f);
            let va = folds.members(f);
            let raw_train: Vec<FeatureVector> = tr.iter().map(|&i| task.rows[i].clone()).collect();
            let pre = fit_preprocessor(&raw_train, family.preprocess_kind())?;
            Ok(FoldData {
                fold: f,
                train_x: pre.apply_all(&raw_train)?,
                train_y: tr.iter().map(|&i| task.outcomes[i]).collect(),
                val_x: va.iter().map(|&i| pre.apply(&task.rows[i])).collect::<Result<_>>()?,
                val_y: va.iter().map(|&i| task.outcomes[i]).collect(),
                preprocessor: pre,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FoldModel {
    pub fold: usize,
    pub model: TrainedModel,
    pub val_auroc: f64,
    pub val_auprc: f64,
}

#[derive(Debug, Clone)]
pub struct CandidateResult {
    /// Position in the sampled sequence; lower wins ties.
    pub index: usize,
    pub hyperparams: HyperParams,
    pub mean_val_auroc: f64,
    pub mean_val_auprc: f64,
    pub fold_models: Vec<FoldModel>,
}

pub fn raw_scores(model: &TrainedModel, xs: &[FeatureVector]) -> Result<Vec<f64>> {
    xs.iter().map(|x| Ok(predict_risk(model, x)?.value())).collect()
}

/// Trains one model per fold and averages their validation AUROCs.
pub fn cross_validate_candidate(
    folds: &[FoldData],
    hp: &HyperParams,
    index: usize,
    seed: u64,
) -> Result<CandidateResult> {
    let mut fold_models = Vec::with_capacity(folds.len());
    for fd in folds {
        let model = train(
            hp,
            &fd.train_x,
            &fd.train_y,
            derive_seed(seed, &format!("fold{}", fd.fold)),
        )?;
        let scores = raw_scores(&model, &fd.val_x)?;
        let val_auroc = auroc(&scores, &fd.val_y)?;
        let val_auprc = auprc(&scores, &fd.val_y)?;
        fold_models.push(FoldModel {
            fold: fd.fold,
            model,
            val_auroc,
            val_auprc,
        });
    }
    let n = fold_models.len() as f64;
    Ok(CandidateResult {
        index,
        hyperparams: hp.clone(),
        mean_val_auroc: fold_models.iter().map(|m| m.val_auroc).sum::<f64>() / n,
        mean_val_auprc: fold_models.iter().map(|m| m.val_auprc).sum::<f64>() / n,
        fold_models,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedMember {
    /// 1 for the best hyperparameter set, 2 for the runner-up.
    pub hp_rank: usize,
    pub candidate_index: usize,
    pub fold: usize,
    pub hyperparams: HyperParams,
    pub model: TrainedModel,
    pub calibration: Option<IsotonicMap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub complication: ComplicationKind,
    pub family: Family,
    pub members: Vec<CalibratedMember>,
    /// One per fold; a member uses the preprocessor of its fold.
    pub preprocessors: Vec<Preprocessor>,
    /// Per fold, column means of the preprocessed training rows.
    pub background_means: Vec<Vec<f64>>,
    pub mean_val_auroc: f64,
    pub mean_val_auprc: f64,
}

/// Ranks survivors by mean validation AUROC (ties: lower sampling index)
/// and keeps the fold models of the top two.
pub fn assemble_top2_ensemble(
    complication: ComplicationKind,
    family: Family,
    mut candidates: Vec<CandidateResult>,
    folds: &[FoldData],
) -> Result<Ensemble> {
    if candidates.len() < TOP_HYPERPARAMS {
        return Err(Error::TooFewCandidates(candidates.len()));
    }
    candidates.sort_by(|a, b| {
        b.mean_val_auroc
            .total_cmp(&a.mean_val_auroc)
            .then(a.index.cmp(&b.index))
    });
    candidates.truncate(TOP_HYPERPARAMS);
    let mean_val_auroc = candidates.iter().map(|c| c.mean_val_auroc).sum::<f64>() / TOP_HYPERPARAMS as f64;
    let mean_val_auprc = candidates.iter().map(|c| c.mean_val_auprc).sum::<f64>() / TOP_HYPERPARAMS as f64;
    let members = candidates
        .into_iter()
        .enumerate()
        .flat_map(|(rank, c)| {
            let hp = c.hyperparams;
            let index = c.index;
            c.fold_models.into_iter().map(move |fm| CalibratedMember {
                hp_rank: rank + 1,
                candidate_index: index,
                fold: fm.fold,
                hyperparams: hp.clone(),
                model: fm.model,
                calibration: None,
            })
        })
        .collect();
    Ok(Ensemble {
        complication,
        family,
        members,
        preprocessors: folds.iter().map(|f| f.preprocessor.clone()).collect(),
        background_means: folds.iter().map(|f| column_means(&f.train_x)).collect(),
        mean_val_auroc,
        mean_val_auprc,
    })
}

fn column_means(rows: &[FeatureVector]) -> Vec<f64> {
    let d = rows.first().map_or(0, |r| r.len());
    let mut sums = vec![0.0; d];
    let mut counts = vec![0usize; d];
    for r in rows {
        for j in 0..d {
            if let Some(v) = r.get(j) {
                sums[j] += v;
                counts[j] += 1;
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// Fits each non-LR member's isotonic map on its own held-out fold.
pub fn calibrate_ensemble(mut ens: Ensemble, folds: &[FoldData]) -> Result<Ensemble> {
    for m in &mut ens.members {
        if m.model.family() == Family::Lr {
            m.calibration = None;
            continue;
        }
        let fd = &folds[m.fold];
        let scores = raw_scores(&m.model, &fd.val_x)?;
        m.calibration = Some(fit_isotonic(&scores, &fd.val_y));
    }
    Ok(ens)
}

impl CalibratedMember {
    pub fn predict(&self, x_preprocessed: &FeatureVector) -> Result<f64> {
        let raw = predict_risk(&self.model, x_preprocessed)?.value();
        Ok(match &self.calibration {
            Some(map) => map.apply(raw),
            None => raw,
        })
    }
}

/// Each member's calibrated output on a raw feature vector.
pub fn member_outputs(ens: &Ensemble, x: &FeatureVector) -> Result<Vec<f64>> {
    let pre: Vec<FeatureVector> = ens.preprocessors.iter().map(|p| p.apply(x)).collect::<Result<_>>()?;
    ens.members.iter().map(|m| m.predict(&pre[m.fold])).collect()
}

pub fn ensemble_predict(ens: &Ensemble, x: &FeatureVector) -> Result<RiskScore> {
    let outs = member_outputs(ens, x)?;
    if outs.is_empty() {
        return Err(Error::EmptyInput("ensemble members"));
    }
    Ok(RiskScore::new(outs.iter().sum::<f64>() / outs.len() as f64))
}

/// Highest mean validation AUROC; ties go to the earlier family in
/// [`Family::ALL`].
pub fn select_best_family(ensembles: Vec<Ensemble>) -> Result<Ensemble> {
    ensembles
        .into_iter()
        .min_by(|a, b| {
            b.mean_val_auroc
                .total_cmp(&a.mean_val_auroc)
                .then(a.family.cmp(&b.family))
        })
        .ok_or(Error::AllFamiliesFailed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub master_seed: u64,
    pub k: usize,
    pub n_search: usize,
    pub families: Vec<Family>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            master_seed: 0,
            k: K_FOLDS,
            n_search: N_SEARCH,
            families: Family::ALL.to_vec(),
        }
    }
}

/// Per-family validation summary for one complication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySummary {
    pub family: Family,
    pub n_candidates: usize,
    pub n_failed: usize,
    pub mean_val_auroc: Option<f64>,
    pub mean_val_auprc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub selected: Ensemble,
    pub families: Vec<FamilySummary>,
}

/// Searches every configured family for one complication and returns the
/// selected calibrated ensemble.
pub fn train_task(task: &TaskDataset, cfg: &TrainConfig) -> Result<TaskOutcome> {
    let kind = task.complication;
    let folds = stratified_kfold(
        &task.outcomes,
        cfg.k,
        derive_seed(cfg.master_seed, &format!("folds/{kind}")),
    )?;

    let prepared: Vec<(Family, Result<Vec<FoldData>>)> = cfg
        .families
        .iter()
        .map(|&f| (f, prepare_folds(task, &folds, f)))
        .collect();

    // (family, candidate index, hyperparameters) for every family whose folds exist
    let mut jobs = Vec::new();
    for (fi, (family, fd)) in prepared.iter().enumerate() {
        if fd.is_ok() {
            let seed = derive_seed(cfg.master_seed, &format!("search/{kind}/{family}"));
            for (i, hp) in sample_hyperparameters(*family, seed, cfg.n_search)
                .into_iter()
                .enumerate()
            {
                jobs.push((fi, i, hp));
            }
        }
    }
    let results: Vec<(usize, usize, Result<CandidateResult>)> = jobs
        .into_par_iter()
        .map(|(fi, i, hp)| {
            let (family, fd) = &prepared[fi];
            let fd = fd.as_ref().expect("filtered above");
            let seed = derive_seed(cfg.master_seed, &format!("fit/{kind}/{family}/{i}"));
            (fi, i, cross_validate_candidate(fd, &hp, i, seed))
        })
        .collect();

    let mut per_family: BTreeMap<usize, Vec<CandidateResult>> = BTreeMap::new();
    let mut failures: BTreeMap<usize, usize> = BTreeMap::new();
    for (fi, i, r) in results {
        match r {
            Ok(c) => per_family.entry(fi).or_default().push(c),
            Err(e) => {
                warn!("{kind}/{}: candidate {i} discarded: {e}", prepared[fi].0);
                *failures.entry(fi).or_default() += 1;
            }
        }
    }

    let mut ensembles = Vec::new();
    let mut summaries = Vec::new();
    for (fi, (family, fd)) in prepared.iter().enumerate() {
        let n_failed = failures.get(&fi).copied().unwrap_or(0);
        let built = fd.as_ref().map_err(|e| Error::Config(e.to_string())).and_then(|fd| {
            let cands = per_family.remove(&fi).unwrap_or_default();
            let ens = assemble_top2_ensemble(kind, *family, cands, fd)?;
            calibrate_ensemble(ens, fd)
        });
        match built {
            Ok(ens) => {
                info!("{kind}/{family}: mean validation AUROC {:.4}", ens.mean_val_auroc);
                summaries.push(FamilySummary {
                    family: *family,
                    n_candidates: cfg.n_search,
                    n_failed,
                    mean_val_auroc: Some(ens.mean_val_auroc),
                    mean_val_auprc: Some(ens.mean_val_auprc),
                    error: None,
                });
                ensembles.push(ens);
            }
            Err(e) => {
                warn!("{kind}/{family}: no ensemble: {e}");
                summaries.push(FamilySummary {
                    family: *family,
                    n_candidates: cfg.n_search,
                    n_failed,
                    mean_val_auroc: None,
                    mean_val_auprc: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    Ok(TaskOutcome {
        selected: select_best_family(ensembles)?,
        families: summaries,
    })
}

/// Everything `train` produces; the unit of serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_version: u32,
    pub master_seed: u64,
    pub ensembles: Vec<Ensemble>,
    pub validation: Vec<TaskValidation>,
    pub failures: Vec<TaskFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskValidation {
    pub complication: ComplicationKind,
    pub n_rows: usize,
    pub n_positive: usize,
    pub n_excluded: usize,
    pub selected: Family,
    pub families: Vec<FamilySummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub complication: ComplicationKind,
    pub error: String,
}

impl ModelBundle {
    pub fn ensemble(&self, kind: ComplicationKind) -> Option<&Ensemble> {
        self.ensembles.iter().find(|e| e.complication == kind)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<ModelBundle> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: u32,
        }
        let v: Version = serde_json::from_str(s)?;
        if v.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: v.schema_version,
                expected: MODEL_SCHEMA_VERSION,
            });
        }
        Ok(serde_json::from_str(s)?)
    }
}

/// Trains one ensemble per requested complication. Failures are recorded
/// per complication and do not stop the others.
pub fn train_all_complications(
    rows: &[PreparedEncounter],
    complications: &[ComplicationKind],
    cfg: &TrainConfig,
) -> ModelBundle {
    let mut bundle = ModelBundle {
        schema_version: MODEL_SCHEMA_VERSION,
        master_seed: cfg.master_seed,
        ensembles: Vec::new(),
        validation: Vec::new(),
        failures: Vec::new(),
    };
    for &kind in complications {
        let outcome = build_task_dataset(rows, kind).and_then(|task| {
            let out = train_task(&task, cfg)?;
            Ok((task, out))
        });
        match outcome {
            Ok((task, out)) => {
                bundle.validation.push(TaskValidation {
                    complication: kind,
                    n_rows: task.len(),
                    n_positive: task.n_positive(),
                    n_excluded: task.excluded.len(),
                    selected: out.selected.family,
                    families: out.families,
                });
                bundle.ensembles.push(out.selected);
            }
            Err(e) => {
                warn!("{kind}: not trained: {e}");
                bundle.failures.push(TaskFailure {
                    complication: kind,
                    error: e.to_string(),
                });
            }
        }
    }
    bundle
}

/// Seven-slot risk vector. A slot is `None` when the complication already
/// occurred within the first 24 hours or no ensemble exists for it.
pub fn predict_risk_vector(bundle: &ModelBundle, p: &PreparedEncounter) -> Result<[Option<f64>; 7]> {
    let mut out = [None; 7];
    for kind in ComplicationKind::ALL {
        if p.labels.get(kind).within_24h() {
            continue;
        }
        if let Some(ens) = bundle.ensemble(kind) {
            out[kind.index()] = Some(ensemble_predict(ens, &p.features)?.value());
        }
    }
    Ok(out)
}

//! Synthetic cohorts with planted logistic signals, for desk-scale runs.
//!
//! Every encounter draws a latent standard-normal z per feature analyte.
//! Readings in the first 24 hours scatter around `mean + sd·z`. Each
//! complication's outcome comes from `sigmoid(b0 + Σ coef·z)`, with `b0`
//! solved by bisection to hit the requested prevalence. Positive outcomes
//! are then written into the record as the raw evidence the labeler looks
//! for (threshold crossings, creatinine rises, cultures, reports).

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{
    format_timestamp, Analyte, AnalyteRole, Comorbidity, CultureRecord, CultureSite, EncounterRecord, Minutes,
    Modality, ObservationRecord, Region, ReportRecord, Sex, Symptom, DAY,
};
use crate::error::{Error, Result};
use crate::labeler::ComplicationKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplicationSpec {
    pub kind: ComplicationKind,
    pub prevalence: f64,
    /// Share of cases whose onset falls inside the first 24 hours.
    #[serde(default = "default_early_fraction")]
    pub early_fraction: f64,
    /// Logistic weights on latent analyte z-scores, keyed by analyte code.
    #[serde(default)]
    pub signal: BTreeMap<String, f64>,
}

fn default_early_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_encounters: usize,
    pub seed: u64,
    /// Probability that an analyte (or BMI) is never measured.
    pub missingness: f64,
    pub start_date: NaiveDate,
    pub span_days: u32,
    pub chronic_kidney_disease_rate: f64,
    pub complications: Vec<ComplicationSpec>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_encounters: 3000,
            seed: 7,
            missingness: 0.15,
            start_date: NaiveDate::from_ymd_opt(2020, 4, 1).expect("valid date"),
            span_days: 30,
            chronic_kidney_disease_rate: 0.08,
            complications: ComplicationKind::ALL
                .iter()
                .map(|&kind| ComplicationSpec {
                    kind,
                    prevalence: 0.15,
                    early_fraction: default_early_fraction(),
                    signal: if kind == ComplicationKind::Aki {
                        [("urea", 2.0), ("crp", 1.5), ("lymphocytes", -1.0)]
                            .into_iter()
                            .map(|(k, v)| (k.to_string(), v))
                            .collect()
                    } else {
                        BTreeMap::new()
                    },
                })
                .collect(),
        }
    }
}

/// Population mean and spread used to draw readings.
fn reference(a: Analyte) -> (f64, f64) {
    use Analyte::*;
    match a {
        SystolicBp => (125.0, 18.0),
        DiastolicBp => (75.0, 11.0),
        RespiratoryRate => (20.0, 4.0),
        Pulse => (88.0, 15.0),
        OxygenSaturation => (94.0, 3.0),
        Temperature => (37.4, 0.7),
        Gcs => (14.5, 0.8),
        Albumin => (35.0, 5.0),
        Aptt => (32.0, 5.0),
        Bilirubin => (12.0, 5.0),
        Calcium => (2.2, 0.15),
        Chloride => (102.0, 4.0),
        Crp => (80.0, 40.0),
        Ferritin => (700.0, 350.0),
        Hematocrit => (40.0, 5.0),
        Hemoglobin => (13.0, 1.8),
        Inr => (1.1, 0.15),
        Ldh => (320.0, 110.0),
        Lymphocytes => (1.1, 0.5),
        ProthrombinTime => (13.0, 1.5),
        Procalcitonin => (0.3, 0.2),
        Sodium => (138.0, 4.0),
        Rbc => (4.5, 0.6),
        Urea => (7.0, 3.0),
        UricAcid => (300.0, 80.0),
        Neutrophils => (5.5, 2.5),
        _ => (0.0, 1.0),
    }
}

fn feature_analytes() -> Vec<Analyte> {
    Analyte::ALL
        .iter()
        .copied()
        .filter(|a| a.role() != AnalyteRole::Labeling)
        .collect()
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSynthSpec(m));
        if self.n_encounters == 0 {
            return bad("n_encounters must be positive".into());
        }
        if !(0.0..1.0).contains(&self.missingness) {
            return bad(format!("missingness {} outside [0, 1)", self.missingness));
        }
        if !(0.0..1.0).contains(&self.chronic_kidney_disease_rate) {
            return bad(format!("CKD rate {} outside [0, 1)", self.chronic_kidney_disease_rate));
        }
        let known = feature_analytes();
        for c in &self.complications {
            if !(c.prevalence > 0.0 && c.prevalence < 1.0) {
                return bad(format!("{}: prevalence {} outside (0, 1)", c.kind, c.prevalence));
            }
            if (self.n_encounters as f64) * c.prevalence < 1.0 {
                return bad(format!(
                    "{}: no achievable positives at n = {}",
                    c.kind, self.n_encounters
                ));
            }
            if !(0.0..=1.0).contains(&c.early_fraction) {
                return bad(format!("{}: early_fraction {}", c.kind, c.early_fraction));
            }
            for (code, w) in &c.signal {
                match Analyte::from_code(code) {
                    Some(a) if known.contains(&a) && w.is_finite() => {}
                    _ => return bad(format!("{}: signal on `{code}` is not a feature analyte", c.kind)),
                }
            }
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Intercept `b0` with `mean(sigmoid(b0 + s_i)) = target`.
pub fn solve_intercept(scores: &[f64], target: f64) -> f64 {
    let mean = |b: f64| scores.iter().map(|s| sigmoid(b + s)).sum::<f64>() / scores.len() as f64;
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

struct Draft {
    obs: Vec<(Analyte, f64, Minutes)>,
    reports: Vec<(Minutes, Modality, String)>,
    cultures: Vec<(Minutes, Minutes, CultureSite, bool)>,
}

impl Draft {
    fn obs(&mut self, a: Analyte, v: f64, t: Minutes) {
        self.obs.push((a, v, t));
    }
}

const POSITIVE_REPORTS: [&str; 3] = [
    "Bilateral patchy opacities in both lower zones.",
    "Diffuse ground-glass opacification bilaterally, worse than prior.",
    "Findings consistent with ARDS.",
];
const NEGATIVE_REPORTS: [&str; 3] = [
    "No focal consolidation. Heart size normal.",
    "Lungs are clear. No pleural effusion.",
    "Right basal atelectasis without bilateral involvement.",
];

/// Writes the evidence for one complication, present or absent.
fn plant(d: &mut Draft, kind: ComplicationKind, onset: Option<Minutes>, rng: &mut ChaCha8Rng) {
    let quiet = rng.random_range(0..DAY / 2);
    match kind {
        ComplicationKind::ElevatedTroponin | ComplicationKind::ElevatedDdimer | ComplicationKind::ElevatedIl6 => {
            let (a, low, high) = match kind {
                ComplicationKind::ElevatedTroponin => (Analyte::TroponinT, 6.0, 45.0),
                ComplicationKind::ElevatedDdimer => (Analyte::DDimer, 250.0, 1400.0),
                _ => (Analyte::Il6, 3.0, 30.0),
            };
            match onset {
                Some(t) => {
                    if t > 60 {
                        d.obs(a, low, 30);
                    }
                    d.obs(a, high, t);
                }
                None => d.obs(a, low, quiet),
            }
        }
        ComplicationKind::ElevatedAminotransferases => match onset {
            Some(t) => {
                if t > 60 {
                    d.obs(Analyte::Ast, 22.0, 30);
                    d.obs(Analyte::Alt, 25.0, 30);
                }
                d.obs(Analyte::Ast, 95.0, t);
                d.obs(Analyte::Alt, 110.0, t);
            }
            None => {
                d.obs(Analyte::Ast, 24.0, quiet);
                d.obs(Analyte::Alt, 28.0, quiet);
            }
        },
        ComplicationKind::Sbi => match onset {
            Some(t) => d.cultures.push((t, t + 600, CultureSite::Blood, true)),
            None => d.cultures.push((quiet, quiet + 2000, CultureSite::Urine, false)),
        },
        ComplicationKind::Aki => match onset {
            Some(t) => {
                d.obs(Analyte::SerumCreatinine, 0.9, (t - 600).max(0));
                d.obs(Analyte::SerumCreatinine, 1.8, t);
            }
            None => {
                d.obs(Analyte::SerumCreatinine, 0.9, quiet);
                d.obs(Analyte::SerumCreatinine, 1.0, quiet + 1500);
            }
        },
        ComplicationKind::Ards => match onset {
            Some(t) => {
                let text = POSITIVE_REPORTS[rng.random_range(0..POSITIVE_REPORTS.len())];
                d.reports.push((t, Modality::Xray, text.into()));
                d.obs(Analyte::Fio2, 0.5, t);
                d.obs(Analyte::Pao2, 70.0, t);
            }
            None => {
                let text = NEGATIVE_REPORTS[rng.random_range(0..NEGATIVE_REPORTS.len())];
                d.reports.push((quiet, Modality::Xray, text.into()));
                d.obs(Analyte::Pao2, 92.0, quiet);
            }
        },
    }
}

/// Latest onset that the labeler still attributes to each complication.
fn onset_limit(kind: ComplicationKind) -> Minutes {
    match kind {
        ComplicationKind::Ards => 7 * DAY,
        _ => 12 * DAY,
    }
}

/// Generates `spec.n_encounters` records; a pure function of the spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<EncounterRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let analytes = feature_analytes();
    let n = spec.n_encounters;

    let latent: Vec<Vec<f64>> = (0..n)
        .map(|_| analytes.iter().map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();

    // outcome and onset per complication
    let mut onsets: Vec<Vec<Option<Minutes>>> = vec![vec![None; spec.complications.len()]; n];
    for (ci, c) in spec.complications.iter().enumerate() {
        let weights: Vec<(usize, f64)> = c
            .signal
            .iter()
            .map(|(code, w)| {
                let a = Analyte::from_code(code).expect("validated");
                (analytes.iter().position(|&x| x == a).expect("validated"), *w)
            })
            .collect();
        let scores: Vec<f64> = latent
            .iter()
            .map(|z| weights.iter().map(|&(j, w)| w * z[j]).sum())
            .collect();
        let b0 = solve_intercept(&scores, c.prevalence);
        let mut any = false;
        for i in 0..n {
            if rng.random_bool(sigmoid(b0 + scores[i])) {
                any = true;
                onsets[i][ci] = Some(if rng.random_bool(c.early_fraction) {
                    rng.random_range(60..=DAY - 60)
                } else {
                    rng.random_range(DAY + 60..=onset_limit(c.kind))
                });
            }
        }
        if !any {
            return Err(Error::InvalidSynthSpec(format!("{}: no positives were drawn", c.kind)));
        }
    }

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let day = rng.random_range(0..spec.span_days.max(1)) as i64;
        let minute = rng.random_range(0..DAY);
        let admission: NaiveDateTime =
            spec.start_date.and_time(NaiveTime::MIN) + Duration::days(day) + Duration::minutes(minute);
        let sex = if rng.random_bool(0.55) { Sex::Male } else { Sex::Female };
        let age = if rng.random_bool(0.01) {
            rng.random_range(5..18)
        } else {
            rng.random_range(18..95)
        };
        let pregnant = sex == Sex::Female && age < 45 && rng.random_bool(0.03);

        let mut comorbidities = Vec::new();
        for (c, rate) in [
            (Comorbidity::Hypertension, 0.35),
            (Comorbidity::Diabetes, 0.25),
            (Comorbidity::ChronicKidneyDisease, spec.chronic_kidney_disease_rate),
            (Comorbidity::Cancer, 0.08),
        ] {
            if rng.random_bool(rate) {
                comorbidities.push(c);
            }
        }
        let mut symptoms = Vec::new();
        for (s, rate) in [
            (Symptom::Cough, 0.6),
            (Symptom::Fever, 0.55),
            (Symptom::ShortnessOfBreath, 0.4),
            (Symptom::SoreThroat, 0.15),
            (Symptom::Rash, 0.03),
        ] {
            if rng.random_bool(rate) {
                symptoms.push(s);
            }
        }
        let bmi = if rng.random_bool(spec.missingness) {
            None
        } else {
            Some(
                (27.0
                    + 5.0 * {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z
                    })
                .clamp(14.0, 60.0),
            )
        };

        let mut draft = Draft {
            obs: Vec::new(),
            reports: Vec::new(),
            cultures: Vec::new(),
        };
        for (j, &a) in analytes.iter().enumerate() {
            if rng.random_bool(spec.missingness) {
                continue;
            }
            let (mean, sd) = reference(a);
            let center = mean + sd * latent[i][j];
            for _ in 0..rng.random_range(1..=3) {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let v = (center + 0.25 * sd * noise).max(0.0);
                draft.obs(a, (v * 1000.0).round() / 1000.0, rng.random_range(0..=DAY));
            }
        }
        for (ci, c) in spec.complications.iter().enumerate() {
            plant(&mut draft, c.kind, onsets[i][ci], &mut rng);
        }

        let ts = |t: Minutes| format_timestamp(admission + Duration::minutes(t));
        draft.obs.sort_by_key(|&(a, _, t)| (t, a));
        out.push(EncounterRecord {
            encounter_id: format!("syn-{i:06}"),
            patient_id: format!("pt-{i:06}"),
            facility_region: if rng.random_bool(0.6) {
                Region::AMiddle
            } else {
                Region::BEastWest
            },
            admission_time: Some(ts(0)),
            age,
            sex,
            bmi: bmi.map(|b| (b * 10.0).round() / 10.0),
            pregnant,
            cardiac_edema_prior: false,
            comorbidities,
            symptoms,
            observations: draft
                .obs
                .iter()
                .map(|&(a, value, t)| ObservationRecord {
                    code: a.code().to_string(),
                    value,
                    time: ts(t),
                })
                .collect(),
            reports: draft
                .reports
                .iter()
                .map(|(t, modality, text)| ReportRecord {
                    time: ts(*t),
                    modality: *modality,
                    text: text.clone(),
                })
                .collect(),
            cultures: draft
                .cultures
                .iter()
                .map(|&(s, r, site, positive)| CultureRecord {
                    sample_time: ts(s),
                    result_time: ts(r),
                    site,
                    positive,
                })
                .collect(),
        });
    }
    Ok(out)
}

/// One JSON object per line.
pub fn write_jsonl<W: Write>(mut w: W, records: &[EncounterRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

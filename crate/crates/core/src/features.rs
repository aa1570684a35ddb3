//! The fixed 97-slot feature vector built from the first 24 hours of an
//! encounter, and the per-learner preprocessing fitted on training rows.

use std::io::Write;
use std::sync::LazyLock;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::cohort::{Analyte, AnalyteRole, Comorbidity, Encounter, Sex, Symptom, DAY};
use crate::error::{Error, Result};
use crate::labeler::{ComplicationKind, EncounterLabels};

pub const N_FEATURES: usize = 97;

const _: () = assert!(2 + 1 + 4 + 5 + 3 * 7 + 3 * 19 + 7 == N_FEATURES);

/// End of the feature window, inclusive.
pub const FEATURE_WINDOW_END: i64 = DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stat {
    Min,
    Max,
    Mean,
}

impl Stat {
    fn suffix(self) -> &'static str {
        match self {
            Stat::Min => "min",
            Stat::Max => "max",
            Stat::Mean => "mean",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotSource {
    Age,
    Bmi,
    SexMale,
    Comorbidity(Comorbidity),
    Symptom(Symptom),
    Aggregate(Analyte, Stat),
    ComplicationWithin24h(ComplicationKind),
}

impl SlotSource {
    pub fn is_binary(self) -> bool {
        matches!(
            self,
            SlotSource::SexMale
                | SlotSource::Comorbidity(_)
                | SlotSource::Symptom(_)
                | SlotSource::ComplicationWithin24h(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub source: SlotSource,
}

#[derive(Debug, Clone)]
pub struct FeatureSchema {
    pub slots: Vec<Slot>,
}

static SCHEMA: LazyLock<FeatureSchema> = LazyLock::new(FeatureSchema::build);

/// The process-wide feature schema.
pub fn schema() -> &'static FeatureSchema {
    &SCHEMA
}

impl FeatureSchema {
    fn build() -> FeatureSchema {
        let mut slots = vec![
            Slot {
                name: "age".into(),
                source: SlotSource::Age,
            },
            Slot {
                name: "bmi".into(),
                source: SlotSource::Bmi,
            },
            Slot {
                name: "sex_male".into(),
                source: SlotSource::SexMale,
            },
        ];
        for c in Comorbidity::ALL {
            slots.push(Slot {
                name: c.code().into(),
                source: SlotSource::Comorbidity(c),
            });
        }
        for s in Symptom::ALL {
            slots.push(Slot {
                name: s.code().into(),
                source: SlotSource::Symptom(s),
            });
        }
        for a in Analyte::vitals().chain(Analyte::feature_labs()) {
            for stat in [Stat::Min, Stat::Max, Stat::Mean] {
                slots.push(Slot {
                    name: format!("{}_{}", a.code(), stat.suffix()),
                    source: SlotSource::Aggregate(a, stat),
                });
            }
        }
        for k in ComplicationKind::ALL {
            slots.push(Slot {
                name: format!("{}_24h", k.code()),
                source: SlotSource::ComplicationWithin24h(k),
            });
        }
        FeatureSchema { slots }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.name.as_str())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    pub fn slot_of(&self, analyte: Analyte, stat: Stat) -> Option<usize> {
        self.slots
            .iter()
            .position(|s| s.source == SlotSource::Aggregate(analyte, stat))
    }

    /// Analytes that feed any slot.
    pub fn analytes(&self) -> Vec<Analyte> {
        let mut out: Vec<Analyte> = self
            .slots
            .iter()
            .filter_map(|s| match s.source {
                SlotSource::Aggregate(a, _) => Some(a),
                _ => None,
            })
            .collect();
        out.dedup();
        out
    }

    /// Checks the slot count, name uniqueness, and that no analyte used to
    /// define a complication is also an input feature.
    pub fn check_integrity(&self) -> Result<()> {
        if self.len() != N_FEATURES {
            return Err(Error::Config(format!(
                "feature schema has {} slots, expected {N_FEATURES}",
                self.len()
            )));
        }
        let mut names: Vec<&str> = self.names().collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.len() {
            return Err(Error::Config("duplicate feature slot names".into()));
        }
        let leaked: Vec<Analyte> = self
            .analytes()
            .into_iter()
            .filter(|a| a.role() == AnalyteRole::Labeling)
            .collect();
        if !leaked.is_empty() {
            return Err(Error::Config(format!("labeling analytes used as features: {leaked:?}")));
        }
        Ok(())
    }
}

/// A row of features with an explicit missingness mask. Masked slots hold NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub missing: Vec<bool>,
}

impl FeatureVector {
    pub fn dense(values: Vec<f64>) -> FeatureVector {
        let missing = vec![false; values.len()];
        FeatureVector { values, missing }
    }

    /// Builds a row from optional values; `None` becomes a masked slot.
    pub fn from_options(values: &[Option<f64>]) -> FeatureVector {
        FeatureVector {
            values: values.iter().map(|v| v.unwrap_or(f64::NAN)).collect(),
            missing: values.iter().map(Option::is_none).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        (!self.missing[i]).then_some(self.values[i])
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }
}

fn flag(b: bool) -> Option<f64> {
    Some(if b { 1.0 } else { 0.0 })
}

/// Aggregates observations with time ≤ 24h; complication flags come from
/// the labels' within-24h state.
pub fn extract_features(enc: &Encounter, labels: &EncounterLabels) -> FeatureVector {
    let sch = schema();
    let mut stats: Vec<Option<(f64, f64, f64)>> = vec![None; Analyte::ALL.len()];
    let mut counts = vec![0usize; Analyte::ALL.len()];
    for o in enc.observations.iter().filter(|o| o.time <= FEATURE_WINDOW_END) {
        let i = o.code as usize;
        counts[i] += 1;
        stats[i] = Some(match stats[i] {
            None => (o.value, o.value, o.value),
            Some((lo, hi, sum)) => (lo.min(o.value), hi.max(o.value), sum + o.value),
        });
    }

    let values: Vec<Option<f64>> = sch
        .slots
        .iter()
        .map(|slot| match slot.source {
            SlotSource::Age => Some(enc.age as f64),
            SlotSource::Bmi => enc.bmi,
            SlotSource::SexMale => flag(enc.sex == Sex::Male),
            SlotSource::Comorbidity(c) => flag(enc.comorbidities.contains(&c)),
            SlotSource::Symptom(s) => flag(enc.symptoms.contains(&s)),
            SlotSource::Aggregate(a, stat) => {
                let i = a as usize;
                stats[i].map(|(lo, hi, sum)| match stat {
                    Stat::Min => lo,
                    Stat::Max => hi,
                    Stat::Mean => (sum / counts[i] as f64).clamp(lo, hi),
                })
            }
            SlotSource::ComplicationWithin24h(k) => flag(labels.get(k).within_24h()),
        })
        .collect();
    FeatureVector::from_options(&values)
}

/// Writes a delimited feature table with a header row of slot names.
pub fn write_feature_table<W: Write>(out: W, rows: &[(&str, &FeatureVector)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["encounter_id"];
    header.extend(schema().names());
    w.write_record(&header)?;
    for (id, fv) in rows {
        let mut rec = vec![id.to_string()];
        rec.extend((0..fv.len()).map(|i| match fv.get(i) {
            Some(v) => v.to_string(),
            None => "NA".to_string(),
        }));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreprocessKind {
    /// Median imputation then min-max scaling (LR, MLP).
    MedianImputeMinmax,
    /// Median imputation then standardization (KNN).
    MedianImputeStandard,
    /// Values and missing mask passed through untouched (GBM).
    Passthrough,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    pub kind: PreprocessKind,
    pub medians: Vec<f64>,
    /// Subtracted before scaling: the minimum or the mean.
    pub offsets: Vec<f64>,
    /// Divisor: the range or the standard deviation. Zero maps to 0.
    pub scales: Vec<f64>,
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

pub fn fit_preprocessor(rows: &[FeatureVector], kind: PreprocessKind) -> Result<Preprocessor> {
    let Some(first) = rows.first() else {
        return Err(Error::EmptyInput("preprocessor training matrix"));
    };
    let dim = first.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }

    let mut medians = Vec::with_capacity(dim);
    let mut offsets = Vec::with_capacity(dim);
    let mut scales = Vec::with_capacity(dim);
    let mut column = Vec::with_capacity(rows.len());
    for j in 0..dim {
        column.clear();
        column.extend(rows.iter().filter_map(|r| r.get(j)));
        let med = median(&mut column).unwrap_or_else(|| {
            warn!("feature slot {j} is missing in every training row; imputing 0");
            0.0
        });
        medians.push(med);

        let imputed = rows.iter().map(|r| r.get(j).unwrap_or(med));
        let (offset, scale) = match kind {
            PreprocessKind::Passthrough => (0.0, 1.0),
            PreprocessKind::MedianImputeMinmax => {
                let (lo, hi) = imputed.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                (lo, hi - lo)
            }
            PreprocessKind::MedianImputeStandard => {
                let n = rows.len() as f64;
                let mean = imputed.clone().sum::<f64>() / n;
                let var = imputed.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                (mean, var.sqrt())
            }
        };
        offsets.push(offset);
        scales.push(scale);
    }
    Ok(Preprocessor {
        kind,
        medians,
        offsets,
        scales,
    })
}

impl Preprocessor {
    pub fn dim(&self) -> usize {
        self.medians.len()
    }

    /// Passthrough keeps the mask; the other kinds produce dense rows.
    /// Out-of-range values are not clipped.
    pub fn apply(&self, v: &FeatureVector) -> Result<FeatureVector> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        if self.kind == PreprocessKind::Passthrough {
            return Ok(v.clone());
        }
        let values = (0..v.len())
            .map(|j| {
                let x = v.get(j).unwrap_or(self.medians[j]);
                if self.scales[j] == 0.0 {
                    0.0
                } else {
                    (x - self.offsets[j]) / self.scales[j]
                }
            })
            .collect();
        Ok(FeatureVector::dense(values))
    }

    pub fn apply_all(&self, rows: &[FeatureVector]) -> Result<Vec<FeatureVector>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Observation, Region};
    use crate::labeler::ComplicationLabel;

    fn bare() -> Encounter {
        Encounter {
            encounter_id: "e".into(),
            patient_id: "p".into(),
            facility_region: Region::AMiddle,
            admission_time: None,
            age: 61,
            sex: Sex::Male,
            bmi: None,
            pregnant: false,
            cardiac_edema_prior: false,
            comorbidities: [Comorbidity::Diabetes].into(),
            symptoms: [Symptom::Fever].into(),
            observations: vec![],
            reports: vec![],
            cultures: vec![],
        }
    }

    #[test]
    fn schema_integrity() {
        let s = schema();
        assert_eq!(s.len(), 97);
        s.check_integrity().unwrap();
        for a in Analyte::labeling() {
            assert!(!s.analytes().contains(&a), "{a} leaks into features");
        }
    }

    #[test]
    fn window_aggregation() {
        let mut e = bare();
        e.observations = [(60, 80.0), (1400, 90.0), (2000, 120.0)]
            .iter()
            .map(|&(time, value)| Observation {
                code: Analyte::Pulse,
                value,
                time,
            })
            .collect();
        let fv = extract_features(&e, &EncounterLabels::none());
        let s = schema();
        assert_eq!(fv.get(s.slot_of(Analyte::Pulse, Stat::Min).unwrap()), Some(80.0));
        assert_eq!(fv.get(s.slot_of(Analyte::Pulse, Stat::Max).unwrap()), Some(90.0));
        assert_eq!(fv.get(s.slot_of(Analyte::Pulse, Stat::Mean).unwrap()), Some(85.0));
        for stat in [Stat::Min, Stat::Max, Stat::Mean] {
            assert_eq!(fv.get(s.slot_of(Analyte::Albumin, stat).unwrap()), None);
        }
        assert_eq!(fv.get(s.index_of("bmi").unwrap()), None);
        assert_eq!(fv.get(s.index_of("diabetes").unwrap()), Some(1.0));
        assert_eq!(fv.get(s.index_of("cancer").unwrap()), Some(0.0));
        assert_eq!(fv.get(s.index_of("sex_male").unwrap()), Some(1.0));
    }

    #[test]
    fn window_boundary_inclusive() {
        let mut e = bare();
        e.observations = vec![Observation {
            code: Analyte::Crp,
            value: 7.0,
            time: DAY,
        }];
        let fv = extract_features(&e, &EncounterLabels::none());
        assert_eq!(fv.get(schema().slot_of(Analyte::Crp, Stat::Max).unwrap()), Some(7.0));
    }

    #[test]
    fn complication_flags() {
        let mut labels = EncounterLabels::none();
        labels.0[ComplicationKind::Aki.index()] = ComplicationLabel::at(ComplicationKind::Aki, 900);
        labels.0[ComplicationKind::Sbi.index()] = ComplicationLabel::at(ComplicationKind::Sbi, 3000);
        let fv = extract_features(&bare(), &labels);
        assert_eq!(fv.get(schema().index_of("aki_24h").unwrap()), Some(1.0));
        assert_eq!(fv.get(schema().index_of("sbi_24h").unwrap()), Some(0.0));
    }

    fn col(vals: &[Option<f64>]) -> Vec<FeatureVector> {
        vals.iter().map(|v| FeatureVector::from_options(&[*v])).collect()
    }

    #[test]
    fn median_over_observed() {
        let rows = col(&[Some(1.0), Some(2.0), None, Some(4.0)]);
        let p = fit_preprocessor(&rows, PreprocessKind::MedianImputeMinmax).unwrap();
        assert_eq!(p.medians[0], 2.0);
    }

    #[test]
    fn minmax_midpoint_and_no_clipping() {
        let rows = col(&[Some(10.0), Some(30.0)]);
        let p = fit_preprocessor(&rows, PreprocessKind::MedianImputeMinmax).unwrap();
        assert_eq!(p.apply(&FeatureVector::dense(vec![20.0])).unwrap().values[0], 0.5);
        assert_eq!(p.apply(&FeatureVector::dense(vec![50.0])).unwrap().values[0], 2.0);
    }

    #[test]
    fn impute_then_scale() {
        let rows = col(&[Some(0.0), Some(2.0), None, Some(4.0)]);
        let p = fit_preprocessor(&rows, PreprocessKind::MedianImputeMinmax).unwrap();
        let out = p.apply(&FeatureVector::from_options(&[None])).unwrap();
        assert_eq!(out.values[0], 0.5);
        assert!(!out.has_missing());
    }

    #[test]
    fn constant_slot_standardizes_to_zero() {
        let rows = col(&[Some(3.0), Some(3.0), Some(3.0)]);
        let p = fit_preprocessor(&rows, PreprocessKind::MedianImputeStandard).unwrap();
        for r in &rows {
            assert_eq!(p.apply(r).unwrap().values[0], 0.0);
        }
    }

    #[test]
    fn passthrough_keeps_mask() {
        let rows = col(&[Some(1.0), None]);
        let p = fit_preprocessor(&rows, PreprocessKind::Passthrough).unwrap();
        let out = p.apply(&rows[1]).unwrap();
        assert!(out.missing[0]);
    }

    #[test]
    fn all_masked_slot_gets_zero_median() {
        let rows = col(&[None, None]);
        let p = fit_preprocessor(&rows, PreprocessKind::MedianImputeMinmax).unwrap();
        assert_eq!(p.medians[0], 0.0);
    }

    #[test]
    fn empty_matrix_is_error() {
        assert!(matches!(
            fit_preprocessor(&[], PreprocessKind::Passthrough),
            Err(Error::EmptyInput(_))
        ));
    }
}

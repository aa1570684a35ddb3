//! Encounter records, cohort exclusions and the train/test split.
//!
//! Encounters arrive as line-delimited JSON, one admission per line. All
//! timestamps on the wire are ISO-8601; at parse time they are converted to
//! integer minutes relative to the admission time, and everything downstream
//! works in those minutes.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::BufRead;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

/// Minutes relative to admission.
pub type Minutes = i64;

pub const DAY: Minutes = 24 * 60;

/// Observations recorded earlier than this (relative to admission) are rejected.
pub const EARLIEST_OBSERVATION: Minutes = -DAY;

pub const ADULT_AGE: u32 = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "A_middle")]
    AMiddle,
    #[serde(rename = "B_east_west")]
    BEastWest,
}

impl Region {
    pub fn code(self) -> &'static str {
        match self {
            Region::AMiddle => "A_middle",
            Region::BEastWest => "B_east_west",
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comorbidity {
    Hypertension,
    Diabetes,
    ChronicKidneyDisease,
    Cancer,
}

impl Comorbidity {
    pub const ALL: [Comorbidity; 4] = [
        Comorbidity::Hypertension,
        Comorbidity::Diabetes,
        Comorbidity::ChronicKidneyDisease,
        Comorbidity::Cancer,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Comorbidity::Hypertension => "hypertension",
            Comorbidity::Diabetes => "diabetes",
            Comorbidity::ChronicKidneyDisease => "chronic_kidney_disease",
            Comorbidity::Cancer => "cancer",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symptom {
    Cough,
    Fever,
    ShortnessOfBreath,
    SoreThroat,
    Rash,
}

impl Symptom {
    pub const ALL: [Symptom; 5] = [
        Symptom::Cough,
        Symptom::Fever,
        Symptom::ShortnessOfBreath,
        Symptom::SoreThroat,
        Symptom::Rash,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Symptom::Cough => "cough",
            Symptom::Fever => "fever",
            Symptom::ShortnessOfBreath => "shortness_of_breath",
            Symptom::SoreThroat => "sore_throat",
            Symptom::Rash => "rash",
        }
    }
}

/// Whether an analyte feeds the feature vector or is reserved for labeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyteRole {
    Vital,
    Lab,
    Labeling,
}

macro_rules! analytes {
    ($( $variant:ident => $code:literal, $unit:literal, $role:ident; )*) => {
        /// Vital signs and laboratory analytes. Units are fixed per code.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Analyte { $( $variant, )* }

        impl Analyte {
            pub const ALL: &'static [Analyte] = &[ $( Analyte::$variant, )* ];

            pub fn code(self) -> &'static str {
                match self { $( Analyte::$variant => $code, )* }
            }

            pub fn unit(self) -> &'static str {
                match self { $( Analyte::$variant => $unit, )* }
            }

            pub fn role(self) -> AnalyteRole {
                match self { $( Analyte::$variant => AnalyteRole::$role, )* }
            }

            pub fn from_code(code: &str) -> Option<Analyte> {
                match code { $( $code => Some(Analyte::$variant), )* _ => None }
            }
        }
    };
}

analytes! {
    SystolicBp => "systolic_bp", "mmHg", Vital;
    DiastolicBp => "diastolic_bp", "mmHg", Vital;
    RespiratoryRate => "respiratory_rate", "breaths/min", Vital;
    Pulse => "pulse", "beats/min", Vital;
    OxygenSaturation => "oxygen_saturation", "%", Vital;
    Temperature => "temperature", "degC", Vital;
    Gcs => "gcs", "score", Vital;
    Albumin => "albumin", "g/L", Lab;
    Aptt => "aptt", "s", Lab;
    Bilirubin => "bilirubin", "umol/L", Lab;
    Calcium => "calcium", "mmol/L", Lab;
    Chloride => "chloride", "mmol/L", Lab;
    Crp => "crp", "mg/L", Lab;
    Ferritin => "ferritin", "ug/L", Lab;
    Hematocrit => "hematocrit", "%", Lab;
    Hemoglobin => "hemoglobin", "g/dL", Lab;
    Inr => "inr", "ratio", Lab;
    Ldh => "ldh", "U/L", Lab;
    Lymphocytes => "lymphocytes", "10^9/L", Lab;
    ProthrombinTime => "prothrombin_time", "s", Lab;
    Procalcitonin => "procalcitonin", "ng/mL", Lab;
    Sodium => "sodium", "mmol/L", Lab;
    Rbc => "rbc", "10^12/L", Lab;
    Urea => "urea", "mmol/L", Lab;
    UricAcid => "uric_acid", "umol/L", Lab;
    Neutrophils => "neutrophils", "10^9/L", Lab;
    TroponinT => "troponin_t", "ng/L", Labeling;
    DDimer => "d_dimer", "ng/mL", Labeling;
    Il6 => "il6", "pg/mL", Labeling;
    Ast => "ast", "U/l", Labeling;
    Alt => "alt", "U/l", Labeling;
    SerumCreatinine => "serum_creatinine", "mg/dl", Labeling;
    Pao2 => "pao2", "mmHg", Labeling;
    Fio2 => "fio2", "fraction", Labeling;
}

impl Analyte {
    pub fn vitals() -> impl Iterator<Item = Analyte> {
        Self::ALL.iter().copied().filter(|a| a.role() == AnalyteRole::Vital)
    }

    pub fn feature_labs() -> impl Iterator<Item = Analyte> {
        Self::ALL.iter().copied().filter(|a| a.role() == AnalyteRole::Lab)
    }

    pub fn labeling() -> impl Iterator<Item = Analyte> {
        Self::ALL.iter().copied().filter(|a| a.role() == AnalyteRole::Labeling)
    }
}

impl fmt::Display for Analyte {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub code: Analyte,
    pub value: f64,
    pub time: Minutes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Xray,
    Ct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiologyReport {
    pub time: Minutes,
    pub modality: Modality,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CultureSite {
    Blood,
    Urine,
    Throat,
    Sputum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CultureResult {
    pub sample_time: Minutes,
    pub result_time: Minutes,
    pub site: CultureSite,
    pub positive: bool,
}

/// One hospital admission.
#[derive(Debug, Clone, PartialEq)]
pub struct Encounter {
    pub encounter_id: String,
    pub patient_id: String,
    pub facility_region: Region,
    /// `None` when the record carried no admission time. Event times are then
    /// relative to the earliest event in the record, and the encounter is
    /// dropped at the split.
    pub admission_time: Option<NaiveDateTime>,
    pub age: u32,
    pub sex: Sex,
    pub bmi: Option<f64>,
    pub pregnant: bool,
    pub cardiac_edema_prior: bool,
    pub comorbidities: BTreeSet<Comorbidity>,
    pub symptoms: BTreeSet<Symptom>,
    /// Sorted by time.
    pub observations: Vec<Observation>,
    /// Sorted by time.
    pub reports: Vec<RadiologyReport>,
    pub cultures: Vec<CultureResult>,
}

impl Encounter {
    pub fn observations_of(&self, code: Analyte) -> impl Iterator<Item = &Observation> + '_ {
        self.observations.iter().filter(move |o| o.code == code)
    }

    pub fn admission_date(&self) -> Option<NaiveDate> {
        self.admission_time.map(|t| t.date())
    }
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

/// An encounter exactly as it appears on one input line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncounterRecord {
    pub encounter_id: String,
    pub patient_id: String,
    pub facility_region: Region,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub admission_time: Option<String>,
    pub age: u32,
    pub sex: Sex,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bmi: Option<f64>,
    #[serde(default)]
    pub pregnant: bool,
    #[serde(default)]
    pub cardiac_edema_prior: bool,
    #[serde(default)]
    pub comorbidities: Vec<Comorbidity>,
    #[serde(default)]
    pub symptoms: Vec<Symptom>,
    #[serde(default)]
    pub observations: Vec<ObservationRecord>,
    #[serde(default)]
    pub reports: Vec<ReportRecord>,
    #[serde(default)]
    pub cultures: Vec<CultureRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub code: String,
    pub value: f64,
    pub time: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportRecord {
    pub time: String,
    pub modality: Modality,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CultureRecord {
    pub sample_time: String,
    pub result_time: String,
    pub site: CultureSite,
    pub positive: bool,
}

/// Formats a timestamp the way the wire format expects it.
pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Accepts RFC 3339 (any offset, normalized to UTC) or a naive
/// `YYYY-MM-DDTHH:MM[:SS]` taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_utc());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M:%S"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
}

/// A record-level parse failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseIssue {
    /// 1-based line number in the input stream.
    pub line: usize,
    pub encounter_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct ParseOutcome {
    pub encounters: Vec<Encounter>,
    pub errors: Vec<ParseIssue>,
}

/// Parses line-delimited encounter records. Malformed records are collected
/// in [`ParseOutcome::errors`] and do not stop the parse; only I/O failures do.
pub fn parse_encounters<R: BufRead>(reader: R) -> std::io::Result<ParseOutcome> {
    let mut out = ParseOutcome::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let record: EncounterRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                out.errors.push(ParseIssue {
                    line: lineno,
                    encounter_id: None,
                    message: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        let id = record.encounter_id.clone();
        match encounter_from_record(record) {
            Ok(enc) => {
                if !seen.insert(enc.encounter_id.clone()) {
                    out.errors.push(ParseIssue {
                        line: lineno,
                        encounter_id: Some(id),
                        message: "duplicate encounter_id".into(),
                    });
                } else {
                    out.encounters.push(enc);
                }
            }
            Err(message) => out.errors.push(ParseIssue {
                line: lineno,
                encounter_id: Some(id),
                message,
            }),
        }
    }
    Ok(out)
}

/// Validates a wire record and normalizes its timestamps.
pub fn encounter_from_record(r: EncounterRecord) -> Result<Encounter, String> {
    if r.encounter_id.is_empty() {
        return Err("empty encounter_id".into());
    }
    if let Some(b) = r.bmi {
        if !b.is_finite() {
            return Err("bmi is not finite".into());
        }
    }

    let parse = |s: &str, what: &str| -> Result<NaiveDateTime, String> {
        parse_timestamp(s).ok_or_else(|| format!("invalid {what} timestamp `{s}`"))
    };

    let admission = r.admission_time.as_deref().map(|s| parse(s, "admission")).transpose()?;

    // Resolve every event timestamp first so a missing admission time can
    // fall back to the earliest event.
    let mut obs_raw = Vec::with_capacity(r.observations.len());
    for o in &r.observations {
        let code = Analyte::from_code(&o.code).ok_or_else(|| format!("unknown analyte code `{}`", o.code))?;
        if !o.value.is_finite() {
            return Err(format!("non-finite value for {}", o.code));
        }
        obs_raw.push((code, o.value, parse(&o.time, "observation")?));
    }
    let mut rep_raw = Vec::with_capacity(r.reports.len());
    for rep in &r.reports {
        if rep.text.trim().is_empty() {
            return Err("empty radiology report text".into());
        }
        rep_raw.push((parse(&rep.time, "report")?, rep.modality, rep.text.clone()));
    }
    let mut cul_raw = Vec::with_capacity(r.cultures.len());
    for c in &r.cultures {
        let sample = parse(&c.sample_time, "culture sample")?;
        let result = parse(&c.result_time, "culture result")?;
        if result < sample {
            return Err(format!(
                "non-monotone culture timestamps: result {} precedes sample {}",
                c.result_time, c.sample_time
            ));
        }
        cul_raw.push((sample, result, c.site, c.positive));
    }

    let reference = match admission {
        Some(a) => a,
        None => obs_raw
            .iter()
            .map(|o| o.2)
            .chain(rep_raw.iter().map(|r| r.0))
            .chain(cul_raw.iter().map(|c| c.0))
            .min()
            .unwrap_or_default(),
    };
    let rel = |t: NaiveDateTime| -> Minutes { (t - reference).num_seconds().div_euclid(60) };

    let mut observations = Vec::with_capacity(obs_raw.len());
    for (code, value, t) in obs_raw {
        let time = rel(t);
        if time < EARLIEST_OBSERVATION {
            return Err(format!(
                "{code} observation at {time} min precedes admission by more than 24h"
            ));
        }
        observations.push(Observation { code, value, time });
    }
    observations.sort_by_key(|o| o.time);

    let mut reports: Vec<RadiologyReport> = rep_raw
        .into_iter()
        .map(|(t, modality, text)| RadiologyReport {
            time: rel(t),
            modality,
            text,
        })
        .collect();
    reports.sort_by_key(|r| r.time);

    let mut cultures: Vec<CultureResult> = cul_raw
        .into_iter()
        .map(|(s, res, site, positive)| CultureResult {
            sample_time: rel(s),
            result_time: rel(res),
            site,
            positive,
        })
        .collect();
    cultures.sort_by_key(|c| c.sample_time);

    Ok(Encounter {
        encounter_id: r.encounter_id,
        patient_id: r.patient_id,
        facility_region: r.facility_region,
        admission_time: admission,
        age: r.age,
        sex: r.sex,
        bmi: r.bmi,
        pregnant: r.pregnant,
        cardiac_edema_prior: r.cardiac_edema_prior,
        comorbidities: r.comorbidities.into_iter().collect(),
        symptoms: r.symptoms.into_iter().collect(),
        observations,
        reports,
        cultures,
    })
}

// ---------------------------------------------------------------------------
// Exclusions and splitting
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExclusionReason {
    NonAdult,
    Pregnant,
    MissingAdmissionDate,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::NonAdult => "non-adult",
            ExclusionReason::Pregnant => "pregnant",
            ExclusionReason::MissingAdmissionDate => "missing admission date",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Filtered {
    pub kept: Vec<Encounter>,
    pub excluded: Vec<(String, ExclusionReason)>,
}

/// Drops non-adult (age < 18) and pregnant encounters.
pub fn apply_cohort_exclusions(encounters: Vec<Encounter>) -> Filtered {
    let mut out = Filtered::default();
    for enc in encounters {
        if enc.age < ADULT_AGE {
            out.excluded.push((enc.encounter_id, ExclusionReason::NonAdult));
        } else if enc.pregnant {
            out.excluded.push((enc.encounter_id, ExclusionReason::Pregnant));
        } else {
            out.kept.push(enc);
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct CohortSplit {
    pub train: Vec<Encounter>,
    pub test: Vec<Encounter>,
    pub excluded: Vec<(String, ExclusionReason)>,
}

impl CohortSplit {
    /// Concatenates region splits in region order.
    pub fn merge<I: IntoIterator<Item = CohortSplit>>(splits: I) -> CohortSplit {
        let mut out = CohortSplit::default();
        for s in splits {
            out.train.extend(s.train);
            out.test.extend(s.test);
            out.excluded.extend(s.excluded);
        }
        out
    }
}

/// Splits each region independently: admissions on or before `cutoff` go to
/// train, later ones to test. Input order is preserved within each list.
pub fn split_train_test(encounters: Vec<Encounter>, cutoff: NaiveDate) -> BTreeMap<Region, CohortSplit> {
    let mut out: BTreeMap<Region, CohortSplit> = BTreeMap::new();
    for enc in encounters {
        let split = out.entry(enc.facility_region).or_default();
        match enc.admission_date() {
            None => split
                .excluded
                .push((enc.encounter_id, ExclusionReason::MissingAdmissionDate)),
            Some(d) if d <= cutoff => split.train.push(enc),
            Some(_) => split.test.push(enc),
        }
    }
    out
}

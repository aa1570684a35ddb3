//! Complication labeling: whether, and when first, each of the seven
//! complications occurred during an encounter.

use std::fmt;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::cohort::{Analyte, Encounter, Minutes, DAY};
use crate::reportnlp::{first_positive_finding, ImagingFinding, Lexicon};

/// Absolute slack for derived comparisons (creatinine deltas and ratios,
/// P/F ratios) so values sitting exactly on a boundary satisfy it despite
/// floating-point rounding.
const EPS: f64 = 1e-9;

pub const KDIGO_DELTA: f64 = 0.3;
pub const KDIGO_RATIO: f64 = 1.5;
pub const KDIGO_WINDOW: Minutes = 48 * 60;
pub const PF_THRESHOLD: f64 = 300.0;
pub const ROOM_AIR_FIO2: f64 = 0.2095;
pub const ARDS_ONSET_WINDOW: Minutes = 7 * DAY;
pub const SBI_RESULT_WINDOW: Minutes = DAY;
pub const AMINOTRANSFERASE_THRESHOLD: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplicationKind {
    ElevatedTroponin,
    ElevatedDdimer,
    ElevatedAminotransferases,
    ElevatedIl6,
    Sbi,
    Aki,
    Ards,
}

impl ComplicationKind {
    /// Fixed ordering of the risk vector.
    pub const ALL: [ComplicationKind; 7] = [
        ComplicationKind::ElevatedTroponin,
        ComplicationKind::ElevatedDdimer,
        ComplicationKind::ElevatedAminotransferases,
        ComplicationKind::ElevatedIl6,
        ComplicationKind::Sbi,
        ComplicationKind::Aki,
        ComplicationKind::Ards,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ComplicationKind::ElevatedTroponin => "elevated_troponin",
            ComplicationKind::ElevatedDdimer => "elevated_ddimer",
            ComplicationKind::ElevatedAminotransferases => "elevated_aminotransferases",
            ComplicationKind::ElevatedIl6 => "elevated_il6",
            ComplicationKind::Sbi => "sbi",
            ComplicationKind::Aki => "aki",
            ComplicationKind::Ards => "ards",
        }
    }

    pub fn from_code(s: &str) -> Option<ComplicationKind> {
        Self::ALL.iter().copied().find(|k| k.code() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ComplicationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// First occurrence of a complication, if any.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplicationLabel {
    pub kind: ComplicationKind,
    pub first_time: Option<Minutes>,
}

impl ComplicationLabel {
    pub fn absent(kind: ComplicationKind) -> Self {
        ComplicationLabel { kind, first_time: None }
    }

    pub fn at(kind: ComplicationKind, t: Minutes) -> Self {
        ComplicationLabel {
            kind,
            first_time: Some(t),
        }
    }

    pub fn occurred(&self) -> bool {
        self.first_time.is_some()
    }

    /// Occurred no later than 24h after admission (inclusive).
    pub fn within_24h(&self) -> bool {
        self.first_time.is_some_and(|t| t <= DAY)
    }

    /// Occurred strictly after the first 24h.
    pub fn after_24h(&self) -> bool {
        self.first_time.is_some_and(|t| t > DAY)
    }
}

/// All seven labels of one encounter, in [`ComplicationKind::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncounterLabels(pub [ComplicationLabel; 7]);

impl EncounterLabels {
    pub fn get(&self, kind: ComplicationKind) -> &ComplicationLabel {
        &self.0[kind.index()]
    }

    pub fn none() -> Self {
        EncounterLabels(ComplicationKind::ALL.map(ComplicationLabel::absent))
    }
}

/// A single-analyte `value ≥ threshold` criterion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdDef {
    pub kind: ComplicationKind,
    pub analyte: Analyte,
    pub threshold: f64,
}

pub const TROPONIN: ThresholdDef = ThresholdDef {
    kind: ComplicationKind::ElevatedTroponin,
    analyte: Analyte::TroponinT,
    threshold: 14.0,
};

pub const DDIMER: ThresholdDef = ThresholdDef {
    kind: ComplicationKind::ElevatedDdimer,
    analyte: Analyte::DDimer,
    threshold: 500.0,
};

pub const IL6: ThresholdDef = ThresholdDef {
    kind: ComplicationKind::ElevatedIl6,
    analyte: Analyte::Il6,
    threshold: 8.43,
};

pub fn label_threshold(enc: &Encounter, def: &ThresholdDef) -> ComplicationLabel {
    let first = enc
        .observations_of(def.analyte)
        .filter(|o| o.value >= def.threshold)
        .map(|o| o.time)
        .min();
    ComplicationLabel {
        kind: def.kind,
        first_time: first,
    }
}

/// AST ≥ 40 and ALT ≥ 40, judged on the most recent value of each at time t.
/// Several readings of the same analyte at the same minute: the largest wins.
pub fn label_aminotransferases(enc: &Encounter) -> ComplicationLabel {
    let kind = ComplicationKind::ElevatedAminotransferases;
    let mut events: Vec<(Minutes, bool, f64)> = enc
        .observations
        .iter()
        .filter_map(|o| match o.code {
            Analyte::Ast => Some((o.time, true, o.value)),
            Analyte::Alt => Some((o.time, false, o.value)),
            _ => None,
        })
        .collect();
    events.sort_by_key(|e| e.0);

    let mut ast: Option<f64> = None;
    let mut alt: Option<f64> = None;
    let mut i = 0;
    while i < events.len() {
        let t = events[i].0;
        let mut group_ast: Option<f64> = None;
        let mut group_alt: Option<f64> = None;
        while i < events.len() && events[i].0 == t {
            let (_, is_ast, v) = events[i];
            let slot = if is_ast { &mut group_ast } else { &mut group_alt };
            *slot = Some(slot.map_or(v, |cur: f64| cur.max(v)));
            i += 1;
        }
        ast = group_ast.or(ast);
        alt = group_alt.or(alt);
        if ast.is_some_and(|v| v >= AMINOTRANSFERASE_THRESHOLD) && alt.is_some_and(|v| v >= AMINOTRANSFERASE_THRESHOLD)
        {
            return ComplicationLabel::at(kind, t);
        }
    }
    ComplicationLabel::absent(kind)
}

/// Positive culture resulted within 24h of collection, anchored at sample time.
pub fn label_sbi(enc: &Encounter) -> ComplicationLabel {
    let first = enc
        .cultures
        .iter()
        .filter(|c| c.positive && c.result_time - c.sample_time <= SBI_RESULT_WINDOW)
        .map(|c| c.sample_time)
        .min();
    ComplicationLabel {
        kind: ComplicationKind::Sbi,
        first_time: first,
    }
}

/// KDIGO creatinine criteria: a rise of ≥ 0.3 mg/dl over any reading in the
/// preceding 48h, or a value ≥ 1.5× the first recorded (baseline) value.
pub fn label_aki(enc: &Encounter) -> ComplicationLabel {
    let kind = ComplicationKind::Aki;
    let mut scr: Vec<(Minutes, f64)> = enc
        .observations_of(Analyte::SerumCreatinine)
        .map(|o| (o.time, o.value))
        .collect();
    scr.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let Some(&(_, baseline)) = scr.first() else {
        return ComplicationLabel::absent(kind);
    };

    for (j, &(t, v)) in scr.iter().enumerate() {
        let ratio_hit = baseline > 0.0 && v >= KDIGO_RATIO * baseline - EPS;
        let delta_hit = scr[..j]
            .iter()
            .any(|&(tu, u)| tu < t && t - tu <= KDIGO_WINDOW && v - u >= KDIGO_DELTA - EPS);
        if ratio_hit || delta_hit {
            return ComplicationLabel::at(kind, t);
        }
    }
    ComplicationLabel::absent(kind)
}

/// PaO₂/FiO₂ at each PaO₂ time, using the closest FiO₂ recorded at or before
/// it, or room air when there is none.
pub fn compute_pf_series(enc: &Encounter) -> Vec<(Minutes, f64)> {
    let mut fio2: Vec<(Minutes, f64)> = enc.observations_of(Analyte::Fio2).map(|o| (o.time, o.value)).collect();
    fio2.sort_by_key(|f| f.0);

    let mut out = Vec::new();
    for o in enc.observations_of(Analyte::Pao2) {
        let prior = fio2.iter().rev().find(|f| f.0 <= o.time).map(|f| f.1);
        let fraction = prior.unwrap_or(ROOM_AIR_FIO2);
        if fraction <= 0.0 {
            warn!(
                "encounter {}: skipping PaO2 at {} min, matched FiO2 is {fraction}",
                enc.encounter_id, o.time
            );
            continue;
        }
        out.push((o.time, o.value / fraction));
    }
    out.sort_by_key(|p| p.0);
    out
}

/// Berlin criteria: imaging, oxygenation, timing and (non-cardiac) origin.
pub fn label_ards(enc: &Encounter, findings: &[ImagingFinding]) -> ComplicationLabel {
    let kind = ComplicationKind::Ards;
    if enc.cardiac_edema_prior {
        return ComplicationLabel::absent(kind);
    }
    let Some(imaging) = findings.iter().filter(|f| f.positive()).map(|f| f.report_time).min() else {
        return ComplicationLabel::absent(kind);
    };
    let Some(oxygenation) = compute_pf_series(enc)
        .into_iter()
        .filter(|&(_, pf)| pf <= PF_THRESHOLD + EPS)
        .map(|(t, _)| t)
        .min()
    else {
        return ComplicationLabel::absent(kind);
    };
    let onset = imaging.max(oxygenation);
    if onset > ARDS_ONSET_WINDOW {
        return ComplicationLabel::absent(kind);
    }
    ComplicationLabel::at(kind, onset)
}

/// Labels all seven complications.
pub fn label_encounter(enc: &Encounter, lexicon: &Lexicon) -> EncounterLabels {
    let findings: Vec<ImagingFinding> = first_positive_finding(&enc.reports, lexicon).into_iter().collect();
    EncounterLabels([
        label_threshold(enc, &TROPONIN),
        label_threshold(enc, &DDIMER),
        label_aminotransferases(enc),
        label_threshold(enc, &IL6),
        label_sbi(enc),
        label_aki(enc),
        label_ards(enc, &findings),
    ])
}

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use complication_risk::cohort::{Analyte, Encounter, Observation, Region, Sex};
use complication_risk::labeler::{
    label_aki, label_aminotransferases, label_encounter, label_threshold, ComplicationKind, TROPONIN,
};
use complication_risk::reportnlp::Lexicon;

fn encounter(obs: Vec<Observation>) -> Encounter {
    let mut observations = obs;
    observations.sort_by_key(|o| o.time);
    Encounter {
        encounter_id: "prop".into(),
        patient_id: "prop".into(),
        facility_region: Region::AMiddle,
        admission_time: None,
        age: 60,
        sex: Sex::Male,
        bmi: None,
        pregnant: false,
        cardiac_edema_prior: false,
        comorbidities: BTreeSet::new(),
        symptoms: BTreeSet::new(),
        observations,
        reports: Vec::new(),
        cultures: Vec::new(),
    }
}

fn series(code: Analyte, points: &[(i64, f64)]) -> Vec<Observation> {
    points
        .iter()
        .map(|&(time, value)| Observation { code, value, time })
        .collect()
}

#[test]
fn fixture_labels_match_expectations() {
    let encounters = common::load_fixture_cohort("encounters.jsonl");
    let expected = common::load_expected_labels();
    assert_eq!(encounters.len(), expected.len());
    let lexicon = Lexicon::default();
    for enc in &encounters {
        let labels = label_encounter(enc, &lexicon);
        for kind in ComplicationKind::ALL {
            assert_eq!(
                labels.get(kind).first_time,
                expected[&enc.encounter_id][kind.code()],
                "{} {kind}",
                enc.encounter_id
            );
        }
    }
}

/// Earliest creatinine time meeting either rule, found by checking every pair.
fn aki_oracle(points: &[(i64, f64)]) -> Option<i64> {
    let baseline = points.iter().min_by_key(|p| p.0)?.1;
    points
        .iter()
        .filter(|&&(t, v)| {
            v >= 1.5 * baseline - 1e-9
                || points
                    .iter()
                    .any(|&(tu, u)| tu < t && t - tu <= 2880 && v - u >= 0.3 - 1e-9)
        })
        .map(|p| p.0)
        .min()
}

fn distinct_times(max_len: usize) -> impl Strategy<Value = Vec<(i64, f64)>> {
    prop::collection::btree_map(0i64..20_000, 0.3f64..4.0, 0..max_len)
        .prop_map(|m| m.into_iter().map(|(t, v)| (t, (v * 10.0).round() / 10.0)).collect())
}

proptest! {
    #[test]
    fn aki_matches_pairwise_oracle(points in distinct_times(12)) {
        let enc = encounter(series(Analyte::SerumCreatinine, &points));
        prop_assert_eq!(label_aki(&enc).first_time, aki_oracle(&points));
    }

    #[test]
    fn threshold_onset_is_first_qualifying_reading(points in distinct_times(10)) {
        let scaled: Vec<(i64, f64)> = points.iter().map(|&(t, v)| (t, v * 8.0)).collect();
        let enc = encounter(series(Analyte::TroponinT, &scaled));
        let want = scaled.iter().filter(|p| p.1 >= 14.0).map(|p| p.0).min();
        prop_assert_eq!(label_threshold(&enc, &TROPONIN).first_time, want);
    }

    #[test]
    fn aminotransferases_need_both_high(ast in distinct_times(6), alt in distinct_times(6)) {
        let scale = |p: &[(i64, f64)]| p.iter().map(|&(t, v)| (t, v * 25.0)).collect::<Vec<_>>();
        let (ast, alt) = (scale(&ast), scale(&alt));
        let mut obs = series(Analyte::Ast, &ast);
        obs.extend(series(Analyte::Alt, &alt));
        let got = label_aminotransferases(&encounter(obs)).first_time;
        let latest = |p: &[(i64, f64)], t: i64| p.iter().filter(|q| q.0 <= t).max_by_key(|q| q.0).map(|q| q.1);
        let want = ast
            .iter()
            .chain(&alt)
            .map(|p| p.0)
            .filter(|&t| latest(&ast, t).is_some_and(|v| v >= 40.0) && latest(&alt, t).is_some_and(|v| v >= 40.0))
            .min();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn labels_ignore_input_order(points in distinct_times(10), rot in 0usize..10) {
        let mut obs = series(Analyte::SerumCreatinine, &points);
        obs.extend(series(Analyte::DDimer, &points.iter().map(|&(t, v)| (t, v * 200.0)).collect::<Vec<_>>()));
        let lexicon = Lexicon::default();
        let sorted = label_encounter(&encounter(obs.clone()), &lexicon);
        let n = obs.len().max(1);
        obs.rotate_left(rot % n);
        let mut shuffled = encounter(Vec::new());
        shuffled.observations = obs;
        prop_assert_eq!(label_encounter(&shuffled, &lexicon), sorted);
    }
}

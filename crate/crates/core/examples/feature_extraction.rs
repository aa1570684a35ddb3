//! Extracts the fixed-width feature vector of synthetic encounters and
//! shows how preprocessing fills the gaps.

use complication_risk::cohort::encounter_from_record;
use complication_risk::features::{fit_preprocessor, schema, PreprocessKind, N_FEATURES};
use complication_risk::pipeline::prepare_all;
use complication_risk::reportnlp::Lexicon;
use complication_risk::synth::{generate_synthetic, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        n_encounters: 100,
        ..SyntheticSpec::default()
    };
    let encounters = generate_synthetic(&spec)?
        .into_iter()
        .map(encounter_from_record)
        .collect::<Result<Vec<_>, _>>()?;
    let prepared = prepare_all(&encounters, &Lexicon::default());
    let rows: Vec<_> = prepared.iter().map(|p| p.features.clone()).collect();

    println!("{N_FEATURES} slots; first ten:");
    for (i, name) in schema().names().take(10).enumerate() {
        let present = rows.iter().filter(|r| r.get(i).is_some()).count();
        println!("  {name:<28} present in {present}/{}", rows.len());
    }

    let pre = fit_preprocessor(&rows, PreprocessKind::MedianImputeMinmax)?;
    let out = pre.apply(&rows[0])?;
    println!(
        "row 0 after median imputation and min-max scaling: {} slots, missing left = {}",
        out.len(),
        out.has_missing()
    );
    Ok(())
}

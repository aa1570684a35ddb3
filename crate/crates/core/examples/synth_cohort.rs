//! Generates a small synthetic cohort and prints a summary of it.

use complication_risk::cohort::{apply_cohort_exclusions, encounter_from_record};
use complication_risk::synth::{generate_synthetic, write_jsonl, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        n_encounters: 200,
        seed: 1,
        ..SyntheticSpec::default()
    };
    let records = generate_synthetic(&spec)?;
    let mut head = Vec::new();
    write_jsonl(&mut head, &records[..1])?;
    println!("first record: {}", String::from_utf8(head)?.trim_end());

    let encounters = records
        .into_iter()
        .map(encounter_from_record)
        .collect::<Result<Vec<_>, _>>()?;
    let n_obs: usize = encounters.iter().map(|e| e.observations.len()).sum();
    let filtered = apply_cohort_exclusions(encounters);
    println!(
        "{} kept, {} excluded, {:.1} observations per encounter",
        filtered.kept.len(),
        filtered.excluded.len(),
        n_obs as f64 / (filtered.kept.len() + filtered.excluded.len()) as f64
    );
    Ok(())
}

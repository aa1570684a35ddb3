//! Labels the fixture encounters and prints the onset of each complication.

use std::fs::File;
use std::io::BufReader;

use complication_risk::cohort::parse_encounters;
use complication_risk::labeler::{label_encounter, ComplicationKind};
use complication_risk::reportnlp::Lexicon;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/encounters.jsonl");
    let parsed = parse_encounters(BufReader::new(File::open(path)?))?;
    let lexicon = Lexicon::default();
    for enc in parsed.encounters.iter().take(12) {
        let labels = label_encounter(enc, &lexicon);
        let found: Vec<String> = ComplicationKind::ALL
            .iter()
            .filter_map(|&k| labels.get(k).first_time.map(|t| format!("{k}@{t}min")))
            .collect();
        println!(
            "{:<24} {}",
            enc.encounter_id,
            if found.is_empty() { "-".into() } else { found.join(" ") }
        );
    }
    Ok(())
}

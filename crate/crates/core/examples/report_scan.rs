//! Scans free-text radiology reports for imaging evidence.

use complication_risk::reportnlp::{scan_report, Lexicon};

fn main() {
    let lexicon = Lexicon::default();
    for text in [
        "Bilateral patchy opacities, worse at the bases.",
        "No focal consolidation. Lungs are clear bilaterally.",
        "Findings consistent with ARDS.",
        "No pleural effusion or pneumothorax; there are new diffuse bilateral ground-glass opacities.",
        "Right lower lobe infiltrate.",
    ] {
        let r = scan_report(text, &lexicon);
        println!(
            "positive={:<5} opacity={:<5} bilateral={:<5} ards={:<5} | {text}",
            r.positive(),
            r.opacity,
            r.bilateral,
            r.ards_term
        );
    }
}

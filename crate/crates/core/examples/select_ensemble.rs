//! Runs the cross-validated search for one complication and inspects the
//! calibrated ensemble that comes out of it.

use complication_risk::cohort::encounter_from_record;
use complication_risk::labeler::ComplicationKind;
use complication_risk::learners::Family;
use complication_risk::pipeline::{ensemble_predict, prepare_all, task_rows, train_task, TrainConfig};
use complication_risk::reportnlp::Lexicon;
use complication_risk::synth::{generate_synthetic, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        n_encounters: 800,
        ..SyntheticSpec::default()
    };
    let encounters = generate_synthetic(&spec)?
        .into_iter()
        .map(encounter_from_record)
        .collect::<Result<Vec<_>, _>>()?;
    let prepared = prepare_all(&encounters, &Lexicon::default());
    let task = task_rows(&prepared, ComplicationKind::Aki);
    println!(
        "{} rows, {} positive, {} excluded",
        task.len(),
        task.n_positive(),
        task.excluded.len()
    );

    let cfg = TrainConfig {
        master_seed: 42,
        n_search: 4,
        families: vec![Family::Lr, Family::Knn],
        ..TrainConfig::default()
    };
    let outcome = train_task(&task, &cfg)?;
    for f in &outcome.families {
        println!("  {:<4} mean validation AUROC {:?}", f.family.code(), f.mean_val_auroc);
    }
    let ens = &outcome.selected;
    println!("selected {} with {} members:", ens.family, ens.members.len());
    for m in &ens.members {
        println!("  rank {} fold {} candidate {}", m.hp_rank, m.fold, m.candidate_index);
    }
    let risk = ensemble_predict(ens, &task.rows[0])?;
    println!("risk for {}: {:.3}", task.ids[0], risk.value());
    Ok(())
}

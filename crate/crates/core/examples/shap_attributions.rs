//! Exact tree attributions for a boosting model and their ranking.

use complication_risk::cohort::encounter_from_record;
use complication_risk::features::{fit_preprocessor, schema};
use complication_risk::labeler::ComplicationKind;
use complication_risk::learners::gbm::{train_gbm, GbmParams};
use complication_risk::learners::Family;
use complication_risk::pipeline::{prepare_all, task_rows};
use complication_risk::reportnlp::Lexicon;
use complication_risk::shap::tree_shap;
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
    let task = task_rows(&prepare_all(&encounters, &Lexicon::default()), ComplicationKind::Aki);
    let pre = fit_preprocessor(&task.rows, Family::Gbm.preprocess_kind())?;
    let rows = pre.apply_all(&task.rows)?;
    let model = train_gbm(&rows, &task.outcomes, &GbmParams::new(15, 0.1, 5, 80))?;

    let x = &rows[0];
    let attr = tree_shap(&model, x)?;
    println!(
        "margin {:.4} = base {:.4} + contributions {:.4}",
        model.predict_margin(x)?,
        attr.base_value,
        attr.total() - attr.base_value
    );

    let mut mean_abs = vec![0.0; schema().len()];
    for r in &rows {
        for (m, v) in mean_abs.iter_mut().zip(tree_shap(&model, r)?.values) {
            *m += v.abs() / rows.len() as f64;
        }
    }
    let mut ranked: Vec<(&str, f64)> = schema().names().zip(mean_abs).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (name, v) in ranked.iter().take(5) {
        println!("  {name:<28} mean |shap| {v:.4}");
    }
    Ok(())
}

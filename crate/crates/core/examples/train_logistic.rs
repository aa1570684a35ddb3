//! Fits an L2-regularized logistic regression on the synthetic AKI task.

use complication_risk::cohort::encounter_from_record;
use complication_risk::features::schema;
use complication_risk::features::{fit_preprocessor, FeatureVector};
use complication_risk::labeler::ComplicationKind;
use complication_risk::learners::logistic::{fit_logistic, LrParams};
use complication_risk::learners::Family;
use complication_risk::metrics::auroc;
use complication_risk::pipeline::{prepare_all, task_rows};
use complication_risk::reportnlp::Lexicon;
use complication_risk::synth::{generate_synthetic, SyntheticSpec};

/// Preprocessed train and held-out rows with their outcomes.
type Split = (Vec<FeatureVector>, Vec<bool>, Vec<FeatureVector>, Vec<bool>);

fn aki_split(family: Family) -> Result<Split, Box<dyn std::error::Error>> {
    let spec = SyntheticSpec {
        n_encounters: 900,
        ..SyntheticSpec::default()
    };
    let encounters = generate_synthetic(&spec)?
        .into_iter()
        .map(encounter_from_record)
        .collect::<Result<Vec<_>, _>>()?;
    let task = task_rows(&prepare_all(&encounters, &Lexicon::default()), ComplicationKind::Aki);
    let cut = task.len() * 2 / 3;
    let pre = fit_preprocessor(&task.rows[..cut], family.preprocess_kind())?;
    Ok((
        pre.apply_all(&task.rows[..cut])?,
        task.outcomes[..cut].to_vec(),
        pre.apply_all(&task.rows[cut..])?,
        task.outcomes[cut..].to_vec(),
    ))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (xtr, ytr, xte, yte) = aki_split(Family::Lr)?;
    let fit = fit_logistic(&xtr, &ytr, &LrParams { c: 1.0, max_iter: 100 })?;
    let scores = xte
        .iter()
        .map(|x| fit.model.predict_proba(x))
        .collect::<Result<Vec<_>, _>>()?;
    println!("held-out AUROC {:.3}", auroc(&scores, &yte)?);

    let mut weights: Vec<(&str, f64)> = schema().names().zip(fit.model.weights.iter().copied()).collect();
    weights.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()));
    for (name, w) in weights.iter().take(5) {
        println!("  {name:<28} {w:+.3}");
    }
    Ok(())
}

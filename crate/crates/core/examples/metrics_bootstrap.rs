//! Discrimination and calibration metrics with percentile bootstrap intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use complication_risk::metrics::{
    auprc, auroc, bootstrap_ci, calibration_intercept, calibration_slope, reliability_curve, RELIABILITY_BINS,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..2000 {
        let p: f64 = rng.random_range(0.01..0.6);
        scores.push(p);
        labels.push(rng.random_bool(p));
    }
    for (name, metric) in [
        ("AUROC", auroc as fn(&[f64], &[bool]) -> _),
        ("AUPRC", auprc),
        ("slope", calibration_slope),
        ("intercept", calibration_intercept),
    ] {
        let r = bootstrap_ci(metric, &scores, &labels, 500, 1)?;
        println!("{name:<10} {:.3} [{:.3}, {:.3}]", r.point, r.ci_low, r.ci_high);
    }
    let curve = reliability_curve(&scores, &labels, RELIABILITY_BINS)?;
    for b in &curve.bins {
        println!(
            "  predicted {:.3}  observed {:.3}  n={}",
            b.mean_predicted, b.observed_rate, b.count
        );
    }
    Ok(())
}

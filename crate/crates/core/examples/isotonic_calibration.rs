//! Recalibrates overconfident scores with an isotonic map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use complication_risk::isotonic::fit_isotonic;
use complication_risk::metrics::calibration_slope_intercept;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
    let (mut raw, mut labels) = (Vec::new(), Vec::new());
    for _ in 0..4000 {
        let z: f64 = rng.random_range(-3.0..3.0);
        labels.push(rng.random_bool(sigmoid(z)));
        // twice the true log-odds: too confident
        raw.push(sigmoid(2.0 * z));
    }
    let (fit_raw, fit_lab) = (&raw[..2000], &labels[..2000]);
    let map = fit_isotonic(fit_raw, fit_lab);
    let calibrated: Vec<f64> = raw[2000..].iter().map(|&s| map.apply(s)).collect();

    let (s0, i0) = calibration_slope_intercept(&raw[2000..], &labels[2000..])?;
    let (s1, i1) = calibration_slope_intercept(&calibrated, &labels[2000..])?;
    println!("{} knots", map.knots.len());
    println!("raw:        slope {s0:.3} intercept {i0:+.3}");
    println!("calibrated: slope {s1:.3} intercept {i1:+.3}");
    Ok(())
}

//! Log and linear fits with slope significance, and rank correlation, on planted data.

use dpfair::analysis::{linear_fit, log_fit, pearson, spearman};
use dpfair::randmat::SeededRng;

fn main() -> dpfair::Result<()> {
    let mut rng = SeededRng::new(3);
    let eps: Vec<f64> = (1..=80).map(|i| i as f64 * 0.5).collect();
    // accuracy saturating in ε, with noise
    let acc: Vec<f64> = eps.iter().map(|e| 0.6 + 0.04 * e.ln() + 0.01 * rng.standard_normal()).collect();

    for fit in [log_fit(&eps, &acc)?, linear_fit(&eps, &acc)?] {
        println!(
            "{:<11} slope {:+.5} intercept {:+.5} R2 {:.4} p {:.3e} (n={})",
            fit.model.name(),
            fit.slope,
            fit.intercept,
            fit.r_squared,
            fit.slope_p_value,
            fit.n
        );
    }
    println!("spearman {:+.4}", spearman(&eps, &acc)?);
    println!("pearson  {:+.4}", pearson(&eps, &acc)?);
    Ok(())
}

//! A small logistic ε sweep through the harness, followed by the log/linear analysis.
//!
//! Writes into a temporary directory unless a path is given:
//! `cargo run --example tradeoff_sweep -- out/`

use std::path::PathBuf;

use dpfair::analysis::spearman;
use dpfair::harness::{analyze, run_sweep, EpsilonGrid, ExperimentConfig, Pipeline};

fn main() -> dpfair::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("dpfair_tradeoff"));

    let mut config = ExperimentConfig::new(Pipeline::Logistic);
    config.grid = EpsilonGrid::Range { start: 0.1, stop: 20.0, step: 1.0 };
    config.repetitions = 2;
    config.record_wall_time = false;

    let sweep = run_sweep(&config, &out, false)?;
    let eps: Vec<f64> = sweep.rows.iter().map(|r| r.epsilon).collect();
    let acc: Vec<f64> = sweep.rows.iter().map(|r| r.accuracy).collect();
    let risk: Vec<f64> = sweep.rows.iter().map(|r| r.unequal_risk).collect();
    println!("{} rows in {}", sweep.rows.len(), out.display());
    println!("spearman(eps, accuracy)     {:+.3}", spearman(&eps, &acc)?);
    println!("spearman(eps, unequal risk) {:+.3}", spearman(&eps, &risk)?);

    let metrics = ["accuracy".to_string(), "unequal_risk".to_string()];
    for a in analyze(&out.join("results.csv"), &metrics, &out)? {
        println!(
            "{:<13} log fit: {:+.4} ln(eps) {:+.4}, R2 {:.3}, p {:.2e}",
            a.metric, a.log.slope, a.log.intercept, a.log.r_squared, a.log.slope_p_value
        );
    }
    println!("plots: accuracy.svg, unequal_risk.svg");
    Ok(())
}

//! Recovering the group attribute from ε-private PCA projections.
//!
//! The projection alone is private; the attacker network reading it is not
//! constrained. Compare accuracy with and without a planted group signal.

use dpfair::harness::{attack_single, load_data, EpsilonGrid, ExperimentConfig, FfnConfig, Pipeline};

fn main() -> dpfair::Result<()> {
    for strength in [8.0, 0.0] {
        let mut config = ExperimentConfig::new(Pipeline::PcaFfn);
        config.grid = EpsilonGrid::List(vec![1.0]);
        config.pca_k = 32;
        config.ffn = FfnConfig {
            epochs: 60,
            ..FfnConfig::default()
        };
        if let dpfair::harness::DataSource::Synthetic(s) = &mut config.data {
            s.group_signal_dims = 32;
            s.group_signal_strength = strength;
        }
        let data = load_data(&config)?;
        let row = attack_single(&config, &data, 1.0, 0)?;
        println!(
            "group signal {strength}: attacker {:.4}, majority baseline {:.4}, advantage {:+.4}",
            row.attacker_accuracy,
            row.baseline,
            row.advantage()
        );
    }
    Ok(())
}

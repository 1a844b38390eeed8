//! Private logistic regression on the synthetic corpus at a few ε values.

use dpfair::accountant::{calibrate_sigma_with_orders, DEFAULT_PHI};
use dpfair::datasets::{synth_generate, SynthConfig};
use dpfair::dpsgd::{train_private, DpSgdConfig, ModelSpec, OrderGrid};
use dpfair::fairmetrics::{self, group_stats, RiskField};

fn main() -> dpfair::Result<()> {
    let data = synth_generate(&SynthConfig::default())?;
    let n = data.train.len();
    println!("train {n}, test {}, majority rate {:.3}", data.test.len(), data.test.majority_rate());

    for epsilon in [0.1, 1.0, 10.0] {
        let mut config = DpSgdConfig {
            learning_rate: 0.3,
            batch_size: 8,
            orders: OrderGrid::Extended,
            seed: 7,
            ..DpSgdConfig::default()
        };
        config.noise_multiplier = calibrate_sigma_with_orders(
            epsilon,
            DEFAULT_PHI,
            config.steps(n),
            config.sampling_rate(n),
            &config.orders.orders(),
        )?;
        let trained = train_private(&ModelSpec::Logistic, &data.train, &config, DEFAULT_PHI)?;
        let preds = trained.predict_labels(&data.test);
        let stats = group_stats(&preds, &data.test.labels, &data.test.group_ids, &data.test.group_names)?;
        println!(
            "eps {epsilon:>4}: sigma {:.3}, accounted eps {:.4}, accuracy {:.4}, unequal risk {:.4}",
            trained.privacy.sigma,
            trained.privacy.epsilon,
            fairmetrics::accuracy(&preds, &data.test.labels),
            fairmetrics::unequal_risk(&stats, RiskField::ZeroOne)?
        );
    }
    Ok(())
}

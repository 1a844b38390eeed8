//! DP-SGD on the GroupDRO objective, showing the learned group weights.

use dpfair::accountant::{calibrate_sigma_with_orders, DEFAULT_PHI};
use dpfair::datasets::{synth_generate, SynthConfig};
use dpfair::dpsgd::{train_private, DpSgdConfig, ModelSpec};
use dpfair::fairmetrics::{self, group_stats, RiskField};
use dpfair::models::Loss;

fn main() -> dpfair::Result<()> {
    let data = synth_generate(&SynthConfig::default())?;
    let n = data.train.len();
    let epsilon = 5.0;
    let mut config = DpSgdConfig {
        learning_rate: 1.0,
        batch_size: 32,
        seed: 11,
        ..DpSgdConfig::default()
    };
    config.noise_multiplier = calibrate_sigma_with_orders(
        epsilon,
        DEFAULT_PHI,
        config.steps(n),
        config.sampling_rate(n),
        &config.orders.orders(),
    )?;
    let spec = ModelSpec::GroupDroMlp {
        dims: vec![data.train.dim(), 64, 32, 1],
        loss: Loss::Mse,
        eta: 0.1,
    };
    let trained = train_private(&spec, &data.train, &config, DEFAULT_PHI)?;
    let preds = trained.predict_labels(&data.test);
    let stats = group_stats(&preds, &data.test.labels, &data.test.group_ids, &data.test.group_names)?;

    println!("eps {epsilon}, sigma {:.3}", trained.privacy.sigma);
    for (e, loss) in trained.training_log.iter().enumerate() {
        println!("epoch {:>2} mean loss {loss:.4}", e + 1);
    }
    if let Some(weights) = &trained.group_weights {
        for (name, w) in data.train.group_names.iter().zip(weights) {
            println!("weight {name:<16} {w:.4}");
        }
    }
    println!(
        "accuracy {:.4}, unequal risk {:.4}",
        fairmetrics::accuracy(&preds, &data.test.labels),
        fairmetrics::unequal_risk(&stats, RiskField::ZeroOne)?
    );
    Ok(())
}

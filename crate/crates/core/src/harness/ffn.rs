//! Non-private feed-forward training with AdamW and early stopping.

use crate::error::{Error, Result};
use crate::harness::config::FfnConfig;
use crate::models::{adamw_step, AdamWState, Loss, MlpModel, Model};
use crate::randmat::{Matrix, SeededRng};

/// Trains an MLP on `(x, y)` with MSE loss.
///
/// With a validation set and `patience`, training stops once validation MSE
/// has not improved for `patience` epochs and the best parameters are
/// returned. The last batch of an epoch may be short.
pub fn train_ffn(
    x: &Matrix,
    y: &[f64],
    validation: Option<(&Matrix, &[f64])>,
    config: &FfnConfig,
    rng: &mut SeededRng,
) -> Result<MlpModel> {
    if x.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    if x.rows() != y.len() {
        return Err(Error::arg(format!("{} rows but {} targets", x.rows(), y.len())));
    }
    let mut dims = vec![x.cols()];
    dims.extend(&config.hidden);
    dims.push(1);
    let mut model = MlpModel::init(dims, &mut rng.child(0))?;
    let mut shuffle_rng = rng.child(1);

    let p = model.num_params();
    let mut adam = AdamWState::with_weight_decay(p, config.weight_decay);
    let mut grad = vec![0.0; p];
    let mut sum = vec![0.0; p];
    let mut order: Vec<usize> = (0..x.rows()).collect();

    let mut best = (f64::INFINITY, model.params().to_vec());
    let mut since_best = 0usize;
    for _ in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            sum.iter_mut().for_each(|s| *s = 0.0);
            for &i in batch {
                model.loss_and_grad(x.row(i), y[i], Loss::Mse, &mut grad);
                for (s, g) in sum.iter_mut().zip(&grad) {
                    *s += g;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            sum.iter_mut().for_each(|s| *s *= scale);
            adamw_step(model.params_mut(), &sum, &mut adam, config.learning_rate)?;
        }
        if model.params().iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { step: adam.t as usize });
        }
        if let (Some((vx, vy)), Some(patience)) = (validation, config.patience) {
            let mse = mean_squared_error(&model, vx, vy);
            if mse < best.0 {
                best = (mse, model.params().to_vec());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    if best.0.is_finite() {
        model.params_mut().copy_from_slice(&best.1);
    }
    Ok(model)
}

pub fn mean_squared_error(model: &MlpModel, x: &Matrix, y: &[f64]) -> f64 {
    let total: f64 = (0..x.rows())
        .map(|i| {
            let d = model.predict(x.row(i)) - y[i];
            d * d
        })
        .sum();
    total / x.rows().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_a_separable_rule() {
        let mut rng = SeededRng::new(3);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.standard_normal(), rng.standard_normal()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| f64::from(u8::from(r[0] + r[1] > 0.0))).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let cfg = FfnConfig {
            epochs: 60,
            learning_rate: 1e-2,
            patience: None,
            ..FfnConfig::default()
        };
        let model = train_ffn(&x, &y, None, &cfg, &mut SeededRng::new(0)).unwrap();
        let correct = (0..400).filter(|&i| (model.predict(x.row(i)) >= 0.5) == (y[i] == 1.0)).count();
        assert!(correct >= 380, "{correct}");
    }

    #[test]
    fn early_stopping_keeps_best_validation_loss() {
        let mut rng = SeededRng::new(5);
        let rows: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.standard_normal()]).collect();
        // pure noise targets: validation loss cannot keep improving
        let y: Vec<f64> = (0..100).map(|_| f64::from(u8::from(rng.bernoulli(0.5)))).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let cfg = FfnConfig {
            epochs: 500,
            patience: Some(3),
            ..FfnConfig::default()
        };
        let (vx, vy) = (x.clone(), y.clone());
        let model = train_ffn(&x, &y, Some((&vx, &vy)), &cfg, &mut SeededRng::new(1)).unwrap();
        assert!(mean_squared_error(&model, &vx, &vy) <= 0.3);
    }
}

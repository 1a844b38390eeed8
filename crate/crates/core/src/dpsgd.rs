//! Differentially private SGD: per-sample clipping, Gaussian noise on the
//! summed clipped gradients, and the private training loop.

use crate::accountant::{self, PrivacyReport};
use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::models::{groupdro_update, GroupDroState, LogisticModel, Loss, MlpModel, Model};
use crate::randmat::SeededRng;

/// Rényi order grid used when accounting a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OrderGrid {
    #[default]
    Default,
    Extended,
}

impl OrderGrid {
    pub fn orders(self) -> Vec<f64> {
        match self {
            OrderGrid::Default => accountant::default_orders(),
            OrderGrid::Extended => accountant::extended_orders(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpSgdConfig {
    /// L2 bound `C` applied to every per-sample gradient.
    pub clip_bound: f64,
    /// Noise standard deviation in multiples of `clip_bound`.
    pub noise_multiplier: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub orders: OrderGrid,
}

impl Default for DpSgdConfig {
    fn default() -> Self {
        DpSgdConfig {
            clip_bound: 1.0,
            noise_multiplier: 1.0,
            learning_rate: 0.1,
            batch_size: 256,
            epochs: 10,
            seed: 0,
            orders: OrderGrid::Default,
        }
    }
}

impl DpSgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_bound > 0.0) {
            return Err(Error::arg(format!("clip bound must be positive, got {}", self.clip_bound)));
        }
        if !(self.noise_multiplier >= 0.0) || !self.noise_multiplier.is_finite() {
            return Err(Error::arg(format!(
                "noise multiplier must be finite and >= 0, got {}",
                self.noise_multiplier
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::arg("learning rate must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::arg("batch size and epochs must be at least 1"));
        }
        Ok(())
    }

    /// Batch size actually used on `n` examples.
    pub fn effective_batch(&self, n: usize) -> usize {
        self.batch_size.min(n)
    }

    /// Steps taken on `n` examples: `epochs · ⌊n / B⌋` (short batches dropped).
    pub fn steps(&self, n: usize) -> usize {
        n.checked_div(self.effective_batch(n)).map_or(0, |batches| self.epochs * batches)
    }

    pub fn sampling_rate(&self, n: usize) -> f64 {
        self.effective_batch(n) as f64 / n as f64
    }
}

/// Which learner [`train_private`] fits.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Logistic,
    Mlp {
        dims: Vec<usize>,
        loss: Loss,
    },
    /// MLP trained on the GroupDRO robust objective; reads group ids.
    GroupDroMlp {
        dims: Vec<usize>,
        loss: Loss,
        eta: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Logistic(LogisticModel),
    Mlp(MlpModel),
}

impl Model for AnyModel {
    fn input_dim(&self) -> usize {
        match self {
            AnyModel::Logistic(m) => m.input_dim(),
            AnyModel::Mlp(m) => m.input_dim(),
        }
    }

    fn params(&self) -> &[f64] {
        match self {
            AnyModel::Logistic(m) => m.params(),
            AnyModel::Mlp(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> &mut [f64] {
        match self {
            AnyModel::Logistic(m) => m.params_mut(),
            AnyModel::Mlp(m) => m.params_mut(),
        }
    }

    fn predict(&self, x: &[f64]) -> f64 {
        match self {
            AnyModel::Logistic(m) => m.predict(x),
            AnyModel::Mlp(m) => m.predict(x),
        }
    }

    fn loss_and_grad(&self, x: &[f64], y: f64, loss: Loss, grad: &mut [f64]) -> f64 {
        match self {
            AnyModel::Logistic(m) => m.loss_and_grad(x, y, loss, grad),
            AnyModel::Mlp(m) => m.loss_and_grad(x, y, loss, grad),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub model: AnyModel,
    pub privacy: PrivacyReport,
    /// Mean per-sample loss of each epoch, measured before each update.
    pub training_log: Vec<f64>,
    /// Final GroupDRO weights, when trained on the robust objective.
    pub group_weights: Option<Vec<f64>>,
}

impl TrainedModel {
    pub fn parameters(&self) -> &[f64] {
        self.model.params()
    }

    /// Hard predictions at threshold 0.5.
    pub fn predict_labels(&self, data: &Dataset) -> Vec<bool> {
        predict_labels(&self.model, data)
    }

    /// `epoch,mean_loss` rows.
    pub fn training_log_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (e, l) in self.training_log.iter().enumerate() {
            out.push_str(&format!("{},{}\n", e + 1, l));
        }
        out
    }
}

pub fn predict_labels<M: Model>(model: &M, data: &Dataset) -> Vec<bool> {
    (0..data.len()).map(|i| model.predict(data.x(i)) >= 0.5).collect()
}

/// `g · min(1, C / ‖g‖₂)`.
pub fn clip_gradient(g: &[f64], clip_bound: f64) -> Vec<f64> {
    let factor = clip_factor(g, clip_bound);
    g.iter().map(|v| v * factor).collect()
}

fn clip_factor(g: &[f64], clip_bound: f64) -> f64 {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > clip_bound {
        clip_bound / norm
    } else {
        1.0
    }
}

// sum += clip(scale · g, C)
fn add_clipped(sum: &mut [f64], g: &[f64], scale: f64, clip_bound: f64) {
    let norm = scale.abs() * g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let factor = scale * if norm > clip_bound { clip_bound / norm } else { 1.0 };
    for (s, v) in sum.iter_mut().zip(g) {
        *s += v * factor;
    }
}

fn noisy_mean(mut sum: Vec<f64>, batch: usize, config: &DpSgdConfig, rng: &mut SeededRng) -> Vec<f64> {
    let std = config.noise_multiplier * config.clip_bound;
    let inv_b = 1.0 / batch as f64;
    for s in &mut sum {
        if std > 0.0 {
            *s += std * rng.standard_normal();
        }
        *s *= inv_b;
    }
    sum
}

/// `(Σ clip(g_i, C) + N(0, σ²C² I)) / B` for one batch of per-sample gradients.
pub fn private_step(per_sample_grads: &[Vec<f64>], config: &DpSgdConfig, rng: &mut SeededRng) -> Result<Vec<f64>> {
    let first = per_sample_grads
        .first()
        .ok_or_else(|| Error::arg("private step needs a nonempty batch"))?;
    let dim = first.len();
    if let Some(g) = per_sample_grads.iter().find(|g| g.len() != dim) {
        return Err(Error::arg(format!(
            "gradient dimension mismatch: {} vs {}",
            g.len(),
            dim
        )));
    }
    let mut sum = vec![0.0; dim];
    for g in per_sample_grads {
        add_clipped(&mut sum, g, 1.0, config.clip_bound);
    }
    Ok(noisy_mean(sum, per_sample_grads.len(), config, rng))
}

fn init_model(spec: &ModelSpec, d: usize, rng: &mut SeededRng) -> Result<AnyModel> {
    match spec {
        ModelSpec::Logistic => Ok(AnyModel::Logistic(LogisticModel::zeros(d))),
        ModelSpec::Mlp { dims, .. } | ModelSpec::GroupDroMlp { dims, .. } => {
            if dims.first() != Some(&d) {
                return Err(Error::arg(format!(
                    "network input {:?} does not match feature dimension {d}",
                    dims.first()
                )));
            }
            Ok(AnyModel::Mlp(MlpModel::init(dims.clone(), rng)?))
        }
    }
}

/// DP-SGD training with privacy accounted at rate `B / n` and slack `phi`.
///
/// Each epoch shuffles the data and walks it in full batches of `B`; a final
/// short batch is dropped. Streams: child 0 initializes, child 1 shuffles,
/// child 2 draws noise.
pub fn train_private(spec: &ModelSpec, data: &Dataset, config: &DpSgdConfig, phi: f64) -> Result<TrainedModel> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = data.len();
    let b = config.effective_batch(n);
    let root = SeededRng::new(config.seed);
    let mut model = init_model(spec, data.dim(), &mut root.child(0))?;
    let mut shuffle_rng = root.child(1);
    let mut noise_rng = root.child(2);

    let loss = match spec {
        ModelSpec::Logistic => Loss::LogLoss,
        ModelSpec::Mlp { loss, .. } | ModelSpec::GroupDroMlp { loss, .. } => *loss,
    };
    let mut dro = match spec {
        ModelSpec::GroupDroMlp { eta, .. } => Some(GroupDroState::uniform(data.num_groups(), *eta)),
        _ => None,
    };

    let p = model.num_params();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; p];
    let mut batch_grads: Vec<Vec<f64>> = Vec::new();
    let mut batch_losses: Vec<f64> = Vec::with_capacity(b);
    let mut training_log = Vec::with_capacity(config.epochs);
    let mut step = 0usize;

    for _ in 0..config.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for batch in order.chunks_exact(b) {
            let mut sum = vec![0.0; p];
            batch_losses.clear();
            match dro.as_mut() {
                None => {
                    for &i in batch {
                        let l = model.loss_and_grad(data.x(i), data.y(i), loss, &mut grad);
                        batch_losses.push(l);
                        add_clipped(&mut sum, &grad, 1.0, config.clip_bound);
                    }
                }
                Some(state) => {
                    batch_grads.resize_with(b, || vec![0.0; p]);
                    let groups = state.q.len();
                    let mut group_sum = vec![0.0; groups];
                    let mut group_n = vec![0usize; groups];
                    for (k, &i) in batch.iter().enumerate() {
                        let l = model.loss_and_grad(data.x(i), data.y(i), loss, &mut batch_grads[k]);
                        batch_losses.push(l);
                        let g = data.group_ids[i];
                        group_sum[g] += l;
                        group_n[g] += 1;
                    }
                    let group_losses: Vec<Option<f64>> = (0..groups)
                        .map(|g| (group_n[g] > 0).then(|| group_sum[g] / group_n[g] as f64))
                        .collect();
                    if batch_losses.iter().all(|l| l.is_finite()) {
                        let (next, _) = groupdro_update(state, &group_losses)?;
                        *state = next;
                    }
                    // per-sample weight so that Σ w_i g_i / B is the robust-loss gradient
                    for (k, &i) in batch.iter().enumerate() {
                        let g = data.group_ids[i];
                        let w = state.q[g] * b as f64 / group_n[g] as f64;
                        add_clipped(&mut sum, &batch_grads[k], w, config.clip_bound);
                    }
                }
            }
            if batch_losses.iter().any(|l| !l.is_finite()) {
                return Err(Error::Divergence { step });
            }
            loss_sum += batch_losses.iter().sum::<f64>();
            loss_count += batch_losses.len();

            let update = noisy_mean(sum, b, config, &mut noise_rng);
            for (w, u) in model.params_mut().iter_mut().zip(&update) {
                *w -= config.learning_rate * u;
            }
            if model.params().iter().any(|w| !w.is_finite()) {
                return Err(Error::Divergence { step });
            }
            step += 1;
        }
        training_log.push(loss_sum / loss_count.max(1) as f64);
    }

    let steps = config.steps(n);
    debug_assert_eq!(step, steps);
    let privacy = accountant::account(
        config.noise_multiplier,
        config.sampling_rate(n),
        steps,
        phi,
        &config.orders.orders(),
    )?;
    Ok(TrainedModel {
        model,
        privacy,
        training_log,
        group_weights: dro.map(|s| s.q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn clip_examples() {
        let g = vec![6.0, 8.0];
        let c = clip_gradient(&g, 1.0);
        assert!((norm(&c) - 1.0).abs() < 1e-15);
        assert!((c[0] / c[1] - 0.75).abs() < 1e-15);
        let small = vec![0.3, 0.4];
        assert_eq!(clip_gradient(&small, 1.0), small);
        assert_eq!(clip_gradient(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn noiseless_steps() {
        let cfg = DpSgdConfig {
            noise_multiplier: 0.0,
            ..Default::default()
        };
        let mut rng = SeededRng::new(1);
        let g = vec![0.2, -0.1, 0.5];
        assert_eq!(private_step(std::slice::from_ref(&g), &cfg, &mut rng).unwrap(), g);
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        assert_eq!(private_step(&[g, neg], &cfg, &mut rng).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn private_step_errors() {
        let cfg = DpSgdConfig::default();
        let mut rng = SeededRng::new(1);
        assert!(private_step(&[], &cfg, &mut rng).is_err());
        assert!(private_step(&[vec![1.0], vec![1.0, 2.0]], &cfg, &mut rng).is_err());
    }

    #[test]
    fn steps_drop_short_batch() {
        let cfg = DpSgdConfig {
            batch_size: 32,
            epochs: 3,
            ..Default::default()
        };
        assert_eq!(cfg.steps(100), 9);
        assert_eq!(cfg.steps(10), 3);
        assert_eq!(cfg.sampling_rate(10), 1.0);
    }

    #[test]
    fn invalid_config_rejected() {
        for cfg in [
            DpSgdConfig { clip_bound: 0.0, ..Default::default() },
            DpSgdConfig { batch_size: 0, ..Default::default() },
            DpSgdConfig { epochs: 0, ..Default::default() },
            DpSgdConfig { noise_multiplier: -1.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}

//! Logistic regression, a ReLU feed-forward network with a logistic output,
//! the AdamW optimizer and the GroupDRO group reweighting.

use std::path::Path;

use crate::binfmt::{self, Header};
use crate::error::{Error, Result};
use crate::randmat::SeededRng;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Loss {
    /// `(p - y)²` on the logistic output.
    Mse,
    /// Binary cross-entropy.
    #[default]
    LogLoss,
}

impl Loss {
    /// Loss value and its derivative with respect to the logit `z`.
    fn at_logit(self, z: f64, y: f64) -> (f64, f64) {
        let p = sigmoid(z);
        match self {
            Loss::Mse => ((p - y).powi(2), 2.0 * (p - y) * p * (1.0 - p)),
            Loss::LogLoss => (softplus(z) - y * z, p - y),
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Anything trainable by per-sample gradients over a flat parameter vector.
pub trait Model: Clone + Send + Sync {
    fn input_dim(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Probability of the positive class.
    fn predict(&self, x: &[f64]) -> f64;
    /// Writes the gradient of the loss at `(x, y)` into `grad` and returns the loss.
    fn loss_and_grad(&self, x: &[f64], y: f64, loss: Loss, grad: &mut [f64]) -> f64;

    fn num_params(&self) -> usize {
        self.params().len()
    }

    fn save(&self, path: &Path) -> Result<()> {
        let count = self.num_params() as u64;
        binfmt::write_file(path, Header::Params { count }, self.params())
    }

    /// Replaces the parameters with those stored at `path`.
    fn load_params(&mut self, path: &Path) -> Result<()> {
        let (header, payload) = binfmt::read_file(path)?;
        match header {
            Header::Params { count } if count as usize == self.num_params() => {
                self.params_mut().copy_from_slice(&payload);
                Ok(())
            }
            _ => Err(Error::arg(format!(
                "{} does not hold {} model parameters",
                path.display(),
                self.num_params()
            ))),
        }
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::arg(format!(
            "input has dimension {}, model expects {expected}",
            x.len()
        )));
    }
    Ok(())
}

/// `p = sigmoid(wᵀx + b)`. Parameters are stored as `[w; b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    params: Vec<f64>,
}

impl LogisticModel {
    pub fn zeros(d: usize) -> Self {
        LogisticModel {
            params: vec![0.0; d + 1],
        }
    }

    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        let mut params = weights;
        params.push(bias);
        LogisticModel { params }
    }

    pub fn weights(&self) -> &[f64] {
        &self.params[..self.params.len() - 1]
    }

    pub fn bias(&self) -> f64 {
        self.params[self.params.len() - 1]
    }

    fn logit(&self, x: &[f64]) -> f64 {
        dot(self.weights(), x) + self.bias()
    }
}

pub fn logistic_predict(model: &LogisticModel, x: &[f64]) -> Result<f64> {
    check_dim(model.input_dim(), x)?;
    Ok(model.predict(x))
}

/// Log-loss gradient `(p - y) [x; 1]`.
pub fn logistic_per_sample_grad(model: &LogisticModel, x: &[f64], y: f64) -> Result<Vec<f64>> {
    check_dim(model.input_dim(), x)?;
    let mut g = vec![0.0; model.num_params()];
    model.loss_and_grad(x, y, Loss::LogLoss, &mut g);
    Ok(g)
}

impl Model for LogisticModel {
    fn input_dim(&self) -> usize {
        self.params.len() - 1
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn predict(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    fn loss_and_grad(&self, x: &[f64], y: f64, loss: Loss, grad: &mut [f64]) -> f64 {
        let (value, dz) = loss.at_logit(self.logit(x), y);
        let (gw, gb) = grad.split_at_mut(x.len());
        for (g, xi) in gw.iter_mut().zip(x) {
            *g = dz * xi;
        }
        gb[0] = dz;
        value
    }
}

/// Feed-forward network: ReLU hidden layers, one logistic output unit.
///
/// Each layer stores its `out x in` weights row-major followed by its biases.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    params: Vec<f64>,
}

impl MlpModel {
    /// Default shape `input_dim → 64 → 32 → 1`.
    pub fn default_dims(input_dim: usize) -> Vec<usize> {
        vec![input_dim, 64, 32, 1]
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        Self::validate_dims(&dims)?;
        let n = Self::count_params(&dims);
        Ok(MlpModel {
            dims,
            params: vec![0.0; n],
        })
    }

    /// Uniform(-1/√fan_in, 1/√fan_in) initialization of weights and biases.
    pub fn init(dims: Vec<usize>, rng: &mut SeededRng) -> Result<Self> {
        let mut model = Self::zeros(dims)?;
        let mut offset = 0;
        for w in model.dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut model.params[offset..offset + fan_out * (fan_in + 1)] {
                *p = rng.uniform(-bound, bound);
            }
            offset += fan_out * (fan_in + 1);
        }
        Ok(model)
    }

    pub fn from_params(dims: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        Self::validate_dims(&dims)?;
        if params.len() != Self::count_params(&dims) {
            return Err(Error::arg(format!(
                "{} parameters given, architecture {:?} needs {}",
                params.len(),
                dims,
                Self::count_params(&dims)
            )));
        }
        Ok(MlpModel { dims, params })
    }

    fn validate_dims(dims: &[usize]) -> Result<()> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::arg(format!("invalid layer dims {dims:?}")));
        }
        if dims[dims.len() - 1] != 1 {
            return Err(Error::arg("the output layer must have exactly one unit"));
        }
        Ok(())
    }

    fn count_params(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    // Activations of every layer; the last entry holds the output logit.
    fn forward_all(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n_layers = self.dims.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut offset = 0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let w = &self.params[offset..offset + fan_out * fan_in];
            let b = &self.params[offset + fan_out * fan_in..offset + fan_out * (fan_in + 1)];
            let input = &acts[l];
            let out: Vec<f64> = (0..fan_out)
                .map(|j| {
                    let z = dot(&w[j * fan_in..(j + 1) * fan_in], input) + b[j];
                    if l + 1 < n_layers {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
            acts.push(out);
            offset += fan_out * (fan_in + 1);
        }
        acts
    }

    /// Activations of the last hidden layer (the penultimate embedding).
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        let mut acts = self.forward_all(x);
        acts.pop();
        acts.pop().unwrap_or_default()
    }
}

pub fn mlp_forward(model: &MlpModel, x: &[f64]) -> Result<f64> {
    check_dim(model.input_dim(), x)?;
    Ok(model.predict(x))
}

pub fn mlp_per_sample_grad(model: &MlpModel, x: &[f64], y: f64, loss: Loss) -> Result<Vec<f64>> {
    check_dim(model.input_dim(), x)?;
    let mut g = vec![0.0; model.num_params()];
    model.loss_and_grad(x, y, loss, &mut g);
    Ok(g)
}

impl Model for MlpModel {
    fn input_dim(&self) -> usize {
        self.dims[0]
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let acts = self.forward_all(x);
        sigmoid(acts[acts.len() - 1][0])
    }

    fn loss_and_grad(&self, x: &[f64], y: f64, loss: Loss, grad: &mut [f64]) -> f64 {
        let acts = self.forward_all(x);
        let n_layers = self.dims.len() - 1;
        let (value, dz) = loss.at_logit(acts[n_layers][0], y);

        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.dims.windows(2) {
            offsets.push(offset);
            offset += w[1] * (w[0] + 1);
        }

        // delta holds dL/d(pre-activation) of layer l's outputs
        let mut delta = vec![dz];
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            for j in 0..fan_out {
                let row = &mut grad[off + j * fan_in..off + (j + 1) * fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g = delta[j] * a;
                }
                grad[off + fan_out * fan_in + j] = delta[j];
            }
            if l > 0 {
                let w = &self.params[off..off + fan_out * fan_in];
                delta = (0..fan_in)
                    .map(|i| {
                        if input[i] > 0.0 {
                            (0..fan_out).map(|j| w[j * fan_in + i] * delta[j]).sum()
                        } else {
                            0.0
                        }
                    })
                    .collect();
            }
        }
        value
    }
}

/// AdamW optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamWState {
    pub fn new(n: usize) -> Self {
        Self::with_weight_decay(n, 0.01)
    }

    pub fn with_weight_decay(n: usize, weight_decay: f64) -> Self {
        AdamWState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
        }
    }
}

/// One AdamW step with decoupled weight decay:
/// `θ ← θ (1 - lr·wd) - lr · m̂ / (√v̂ + eps)`.
pub fn adamw_step(params: &mut [f64], grads: &[f64], state: &mut AdamWState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::arg(format!(
            "AdamW dimension mismatch: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let decay = 1.0 - lr * state.weight_decay;
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] = params[i] * decay - lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Online GroupDRO group weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupDroState {
    pub q: Vec<f64>,
    pub eta: f64,
}

impl GroupDroState {
    /// Uniform weights over `groups` groups.
    pub fn uniform(groups: usize, eta: f64) -> Self {
        GroupDroState {
            q: vec![1.0 / groups as f64; groups],
            eta,
        }
    }
}

/// Exponentiated-gradient reweighting `q'_g ∝ q_g exp(η ℓ_g)`.
///
/// `None` marks a group absent from the batch: its weight is kept and the
/// present groups share the remaining mass. Returns the new state and the
/// robust loss `Σ q'_g ℓ_g` over present groups.
pub fn groupdro_update(state: &GroupDroState, group_losses: &[Option<f64>]) -> Result<(GroupDroState, f64)> {
    if group_losses.len() != state.q.len() {
        return Err(Error::arg(format!(
            "{} group losses for {} groups",
            group_losses.len(),
            state.q.len()
        )));
    }
    let present: Vec<usize> = (0..group_losses.len())
        .filter(|&g| group_losses[g].is_some())
        .collect();
    if present.is_empty() {
        return Err(Error::arg("no group is present in the batch"));
    }
    if let Some(&g) = present.iter().find(|&&g| !group_losses[g].unwrap().is_finite()) {
        return Err(Error::arg(format!("loss of group {g} is not finite")));
    }

    let mass: f64 = present.iter().map(|&g| state.q[g]).sum();
    let logits: Vec<f64> = present
        .iter()
        .map(|&g| state.q[g].ln() + state.eta * group_losses[g].unwrap())
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut q = state.q.clone();
    if max == f64::NEG_INFINITY {
        // every present group has zero weight; nothing to redistribute
        let robust = 0.0;
        return Ok((GroupDroState { q, eta: state.eta }, robust));
    }
    let weights: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for (&g, w) in present.iter().zip(&weights) {
        q[g] = mass * w / total;
    }
    let robust = present.iter().map(|&g| q[g] * group_losses[g].unwrap()).sum();
    Ok((GroupDroState { q, eta: state.eta }, robust))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_examples() {
        let m = LogisticModel::zeros(3);
        assert_eq!(logistic_predict(&m, &[1.0, -2.0, 5.0]).unwrap(), 0.5);
        let m = LogisticModel::new(vec![0.0], 800.0);
        assert_eq!(logistic_predict(&m, &[1.0]).unwrap(), 1.0);
        let m = LogisticModel::new(vec![1.0, 0.0], 0.0);
        let p = logistic_predict(&m, &[3f64.ln(), 7.0]).unwrap();
        assert!((p - 0.75).abs() < 1e-15);
        assert!(logistic_predict(&m, &[1.0]).is_err());
    }

    #[test]
    fn logistic_grad_examples() {
        let x = [0.5, -1.5, 2.0];
        let g = logistic_per_sample_grad(&LogisticModel::zeros(3), &x, 1.0).unwrap();
        assert_eq!(g, vec![-0.25, 0.75, -1.0, -0.5]);
        let saturated = LogisticModel::new(vec![0.0; 3], 50.0);
        let g = logistic_per_sample_grad(&saturated, &x, 1.0).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn mlp_zero_model_is_half() {
        let m = MlpModel::zeros(vec![4, 3, 2, 1]).unwrap();
        assert_eq!(mlp_forward(&m, &[1.0, 2.0, 3.0, 4.0]).unwrap(), 0.5);
    }

    #[test]
    fn mlp_without_hidden_is_logistic() {
        let params = vec![0.3, -0.7, 1.1, 0.2];
        let mlp = MlpModel::from_params(vec![3, 1], params.clone()).unwrap();
        let lr = LogisticModel::new(params[..3].to_vec(), params[3]);
        let x = [0.4, 1.3, -0.8];
        assert_eq!(mlp_forward(&mlp, &x).unwrap(), logistic_predict(&lr, &x).unwrap());
    }

    #[test]
    fn mlp_finite_on_large_inputs() {
        let m = MlpModel::init(MlpModel::default_dims(16), &mut SeededRng::new(4)).unwrap();
        let x: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 250.0 } else { -250.0 }).collect();
        assert!(mlp_forward(&m, &x).unwrap().is_finite());
    }

    #[test]
    fn mse_zero_at_target() {
        let mlp = MlpModel::zeros(vec![2, 3, 1]).unwrap();
        let g = mlp_per_sample_grad(&mlp, &[1.0, 1.0], 0.5, Loss::Mse).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_relu_has_zero_incoming_grad() {
        // hidden unit 0 has a large negative bias and never fires
        let mut mlp = MlpModel::init(vec![3, 2, 1], &mut SeededRng::new(1)).unwrap();
        let p = mlp.params_mut();
        p[6] = -100.0; // bias of hidden unit 0 (after 2x3 weights)
        let g = mlp_per_sample_grad(&mlp, &[0.5, -0.3, 0.9], 1.0, Loss::Mse).unwrap();
        assert_eq!(&g[0..3], &[0.0, 0.0, 0.0]);
        assert_eq!(g[6], 0.0);
    }

    #[test]
    fn mlp_rejects_bad_dims() {
        assert!(MlpModel::zeros(vec![3]).is_err());
        assert!(MlpModel::zeros(vec![3, 0, 1]).is_err());
        assert!(MlpModel::zeros(vec![3, 4, 2]).is_err());
    }

    #[test]
    fn adamw_examples() {
        let mut p = vec![1.0, -2.0];
        let mut s = AdamWState::with_weight_decay(2, 0.0);
        adamw_step(&mut p, &[0.0, 0.0], &mut s, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);

        let mut p = vec![0.0, 0.0];
        let mut s = AdamWState::with_weight_decay(2, 0.0);
        adamw_step(&mut p, &[0.3, -5.0], &mut s, 0.01).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-6);
        assert!((p[1] - 0.01).abs() < 1e-6);

        let mut p = vec![2.0, -4.0];
        let mut s = AdamWState::with_weight_decay(2, 0.5);
        adamw_step(&mut p, &[0.0, 0.0], &mut s, 0.1).unwrap();
        assert!((p[0] - 2.0 * 0.95).abs() < 1e-15);
        assert!((p[1] + 4.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn groupdro_examples() {
        let s = GroupDroState::uniform(3, 0.7);
        let (n, _) = groupdro_update(&s, &[Some(0.4), Some(0.4), Some(0.4)]).unwrap();
        for (a, b) in n.q.iter().zip(&s.q) {
            assert!((a - b).abs() < 1e-15);
        }

        let s = GroupDroState {
            q: vec![0.5, 0.5],
            eta: 2f64.ln(),
        };
        let (n, robust) = groupdro_update(&s, &[Some(1.0), Some(0.0)]).unwrap();
        assert!((n.q[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((n.q[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((robust - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn groupdro_absent_groups_keep_weight() {
        let s = GroupDroState {
            q: vec![0.2, 0.3, 0.5],
            eta: 1.0,
        };
        let (n, _) = groupdro_update(&s, &[Some(1.0), None, Some(0.1)]).unwrap();
        assert_eq!(n.q[1], 0.3);
        assert!((n.q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(groupdro_update(&s, &[None, None, None]).is_err());
    }

    #[test]
    fn groupdro_large_step_picks_worst_group() {
        let s = GroupDroState::uniform(4, 50.0);
        let losses = [Some(0.3), Some(0.9), Some(0.5), Some(0.1)];
        let (n, robust) = groupdro_update(&s, &losses).unwrap();
        assert!(n.q[1] > 1.0 - 1e-6);
        assert!((robust - 0.9).abs() < 1e-6);
    }

    #[test]
    fn params_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let m = MlpModel::init(vec![5, 4, 1], &mut SeededRng::new(2)).unwrap();
        m.save(&path).unwrap();
        let mut back = MlpModel::zeros(vec![5, 4, 1]).unwrap();
        back.load_params(&path).unwrap();
        assert_eq!(back, m);
        let mut wrong = LogisticModel::zeros(3);
        assert!(wrong.load_params(&path).is_err());
    }
}

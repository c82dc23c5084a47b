//! Three-layer sigmoid network trained on one-hot author targets.
//!
//! Training is full-batch. The default update rule is iRPROP- (per-weight
//! step sizes driven by the sign of the gradient); plain gradient descent is
//! available as an alternative. After every epoch the validation RMSE is
//! measured and the best weights seen so far are kept.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classifier::{argmax, Classifier};
use crate::dataset::{FeatureMatrix, NUM_CLASSES};
use crate::error::{Error, Result};

pub const HIDDEN_RANGE: std::ops::RangeInclusive<usize> = 5..=50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Training {
    Rprop,
    Backprop { learning_rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlpConfig {
    pub n_hidden: usize,
    pub max_epochs: usize,
    /// Stop as soon as validation RMSE reaches this value.
    pub desired_validation_error: f64,
    pub seed: u64,
    pub training: Training,
}

impl MlpConfig {
    pub fn new(n_hidden: usize, seed: u64) -> Self {
        MlpConfig {
            n_hidden,
            max_epochs: 500,
            desired_validation_error: 0.001,
            seed,
            training: Training::Rprop,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_hidden == 0 {
            return Err(Error::InvalidParameter("hidden layer needs at least one neuron".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::InvalidParameter("max_epochs must be positive".into()));
        }
        if let Training::Backprop { learning_rate } = self.training {
            if !(learning_rate > 0.0 && learning_rate.is_finite()) {
                return Err(Error::InvalidParameter(format!("learning rate {learning_rate}")));
            }
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights are stored flat: for each hidden unit its input weights followed by
/// its bias, then for each output unit its hidden weights followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    n_inputs: usize,
    n_hidden: usize,
    n_outputs: usize,
    weights: Vec<f64>,
}

impl MlpModel {
    /// Network with weights drawn uniformly from [-0.5, 0.5].
    pub fn random(n_inputs: usize, n_hidden: usize, n_outputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = n_hidden * (n_inputs + 1) + n_outputs * (n_hidden + 1);
        MlpModel {
            n_inputs,
            n_hidden,
            n_outputs,
            weights: (0..len).map(|_| rng.random_range(-0.5..=0.5)).collect(),
        }
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn output_offset(&self) -> usize {
        self.n_hidden * (self.n_inputs + 1)
    }

    fn forward(&self, x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
        let stride = self.n_inputs + 1;
        for (j, h) in hidden.iter_mut().enumerate() {
            let w = &self.weights[j * stride..(j + 1) * stride];
            let net: f64 = w[..self.n_inputs].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[self.n_inputs];
            *h = sigmoid(net);
        }
        let base = self.output_offset();
        let stride = self.n_hidden + 1;
        for (k, o) in out.iter_mut().enumerate() {
            let w = &self.weights[base + k * stride..base + (k + 1) * stride];
            let net: f64 = w[..self.n_hidden].iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>()
                + w[self.n_hidden];
            *o = sigmoid(net);
        }
    }

    pub fn outputs(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_inputs {
            return Err(Error::Dimension { expected: self.n_inputs, actual: x.len() });
        }
        let mut hidden = vec![0.0; self.n_hidden];
        let mut out = vec![0.0; self.n_outputs];
        self.forward(x, &mut hidden, &mut out);
        Ok(out)
    }

    /// Half the summed squared error over `examples` and its gradient.
    pub fn loss_and_gradient(&self, examples: &[(Vec<f64>, Vec<f64>)]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.weights.len()];
        let mut hidden = vec![0.0; self.n_hidden];
        let mut out = vec![0.0; self.n_outputs];
        let mut delta_out = vec![0.0; self.n_outputs];
        let mut loss = 0.0;
        let in_stride = self.n_inputs + 1;
        let hid_stride = self.n_hidden + 1;
        let base = self.output_offset();
        for (x, target) in examples {
            self.forward(x, &mut hidden, &mut out);
            for k in 0..self.n_outputs {
                let diff = out[k] - target[k];
                loss += 0.5 * diff * diff;
                delta_out[k] = diff * out[k] * (1.0 - out[k]);
                let g = &mut grad[base + k * hid_stride..base + (k + 1) * hid_stride];
                for j in 0..self.n_hidden {
                    g[j] += delta_out[k] * hidden[j];
                }
                g[self.n_hidden] += delta_out[k];
            }
            for j in 0..self.n_hidden {
                let back: f64 = (0..self.n_outputs)
                    .map(|k| delta_out[k] * self.weights[base + k * hid_stride + j])
                    .sum();
                let delta = back * hidden[j] * (1.0 - hidden[j]);
                let g = &mut grad[j * in_stride..(j + 1) * in_stride];
                for i in 0..self.n_inputs {
                    g[i] += delta * x[i];
                }
                g[self.n_inputs] += delta;
            }
        }
        (loss, grad)
    }

    /// Root mean squared deviation over all outputs of all examples.
    pub fn rmse(&self, examples: &[(Vec<f64>, Vec<f64>)]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let mut hidden = vec![0.0; self.n_hidden];
        let mut out = vec![0.0; self.n_outputs];
        let mut sum = 0.0;
        for (x, t) in examples {
            self.forward(x, &mut hidden, &mut out);
            sum += out.iter().zip(t).map(|(o, t)| (o - t) * (o - t)).sum::<f64>();
        }
        (sum / (examples.len() * self.n_outputs) as f64).sqrt()
    }
}

impl Classifier for MlpModel {
    fn n_features(&self) -> usize {
        self.n_inputs
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(self.outputs(x)?))
    }
}

pub fn one_hot_examples(data: &FeatureMatrix) -> Vec<(Vec<f64>, Vec<f64>)> {
    data.rows
        .iter()
        .map(|r| {
            let mut t = vec![0.0; NUM_CLASSES];
            t[r.label] = 1.0;
            (r.features.clone(), t)
        })
        .collect()
}

/// Per-epoch RMSE trace of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub train_rmse: Vec<f64>,
    pub validation_rmse: Vec<f64>,
    /// Epoch whose weights were returned; 0 means the initial weights.
    pub best_epoch: usize,
}

const RPROP_INCREASE: f64 = 1.2;
const RPROP_DECREASE: f64 = 0.5;
const RPROP_DELTA_MAX: f64 = 50.0;
const RPROP_DELTA_MIN: f64 = 0.0;
const RPROP_DELTA_ZERO: f64 = 0.1;

pub fn mlp_train(train: &FeatureMatrix, validation: &FeatureMatrix, cfg: &MlpConfig) -> Result<MlpModel> {
    mlp_train_logged(train, validation, cfg).map(|(m, _)| m)
}

pub fn mlp_train_logged(
    train: &FeatureMatrix,
    validation: &FeatureMatrix,
    cfg: &MlpConfig,
) -> Result<(MlpModel, TrainingLog)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    if !validation.is_empty() && validation.n_features != train.n_features {
        return Err(Error::Dimension { expected: train.n_features, actual: validation.n_features });
    }
    let model = MlpModel::random(train.n_features, cfg.n_hidden, NUM_CLASSES, cfg.seed);
    train_from(model, &one_hot_examples(train), &one_hot_examples(validation), cfg)
}

fn train_from(
    mut model: MlpModel,
    train_ex: &[(Vec<f64>, Vec<f64>)],
    val_ex: &[(Vec<f64>, Vec<f64>)],
    cfg: &MlpConfig,
) -> Result<(MlpModel, TrainingLog)> {
    let n = model.weights.len();
    let mut log = TrainingLog::default();

    let select = |m: &MlpModel, train_rmse: f64| if val_ex.is_empty() { train_rmse } else { m.rmse(val_ex) };
    let mut best = model.clone();
    let mut best_score = select(&model, model.rmse(train_ex));

    let mut step = vec![RPROP_DELTA_ZERO; n];
    let mut previous = vec![0.0; n];
    for epoch in 1..=cfg.max_epochs {
        let (loss, grad) = model.loss_and_gradient(train_ex);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        match cfg.training {
            Training::Rprop => {
                for i in 0..n {
                    let g = grad[i];
                    let sign = g * previous[i];
                    if sign > 0.0 {
                        step[i] = (step[i] * RPROP_INCREASE).min(RPROP_DELTA_MAX);
                    } else if sign < 0.0 {
                        step[i] = (step[i] * RPROP_DECREASE).max(RPROP_DELTA_MIN);
                        previous[i] = 0.0;
                        continue;
                    }
                    if g != 0.0 {
                        model.weights[i] -= g.signum() * step[i];
                    }
                    previous[i] = g;
                }
            }
            Training::Backprop { learning_rate } => {
                let scale = learning_rate / train_ex.len() as f64;
                for (w, g) in model.weights.iter_mut().zip(&grad) {
                    *w -= scale * g;
                }
            }
        }
        let train_rmse = model.rmse(train_ex);
        if !train_rmse.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        let score = select(&model, train_rmse);
        log.train_rmse.push(train_rmse);
        if !val_ex.is_empty() {
            log.validation_rmse.push(score);
        }
        if score < best_score {
            best_score = score;
            best = model.clone();
            log.best_epoch = epoch;
        }
        if score <= cfg.desired_validation_error {
            break;
        }
    }
    Ok((best, log))
}

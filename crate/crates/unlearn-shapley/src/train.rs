//! Deterministic mini-batch training with decoupled-weight-decay Adam
//! updates. Produces the pre-trained and coalition models used everywhere
//! else.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Result, ValuationError};
use crate::model::{
    cross_entropy_and_grad, evaluate_accuracy, init_params, Batch, ModelSpec, ParamVector,
};
use crate::rng::rng_for;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 32,
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(ValuationError::Invalid("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ValuationError::Invalid("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || self.beta1 == 0.0 {
            return Err(ValuationError::Invalid("beta1 must be in (0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.beta2) || self.beta2 == 0.0 {
            return Err(ValuationError::Invalid("beta2 must be in (0, 1)".into()));
        }
        if self.eps <= 0.0 {
            return Err(ValuationError::Invalid("eps must be > 0".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(ValuationError::Invalid("weight_decay must be >= 0".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(ValuationError::Invalid("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Adam moment buffers plus the step counter for bias correction.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl OptimizerState {
    pub fn new(num_params: usize) -> Self {
        Self {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step_count: 0,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
    pub final_train_accuracy: f64,
    pub wall_seconds: f64,
}

/// One decoupled-weight-decay Adam update:
/// `theta' = theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * theta`.
pub fn adamw_step(
    params: &ParamVector,
    state: &OptimizerState,
    grad: &ParamVector,
    config: &TrainConfig,
) -> Result<(ParamVector, OptimizerState)> {
    if params.len() != grad.len() || params.len() != state.first_moment.len() {
        return Err(ValuationError::Contract("optimizer length mismatch".into()));
    }
    let t = state.step_count + 1;
    let bc1 = 1.0 - config.beta1.powi(t as i32);
    let bc2 = 1.0 - config.beta2.powi(t as i32);
    let mut m = state.first_moment.clone();
    let mut v = state.second_moment.clone();
    let mut updated = params.values().to_vec();
    for i in 0..updated.len() {
        let g = grad.values()[i];
        m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
        v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        updated[i] -= config.learning_rate * (m_hat / (v_hat.sqrt() + config.eps))
            + config.learning_rate * config.weight_decay * updated[i];
    }
    Ok((
        params.with_values(updated),
        OptimizerState { first_moment: m, second_moment: v, step_count: t },
    ))
}

/// Full deterministic training loop: init from `config.seed`, reshuffle each
/// epoch with a derived seed, fixed-size mini-batches with the last partial
/// batch kept.
pub fn train(spec: &ModelSpec, dataset: &Dataset, config: &TrainConfig) -> Result<(ParamVector, TrainLog)> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(ValuationError::Invalid("cannot train on an empty dataset".into()));
    }
    if dataset.num_features() != spec.input_dim || dataset.num_classes() != spec.num_classes {
        return Err(ValuationError::Contract("dataset does not match model spec".into()));
    }
    let start = Instant::now();
    let mut params = init_params(spec, config.seed);
    let mut state = OptimizerState::new(params.len());
    let n = dataset.len();
    let mut epoch_loss = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng_for(config.seed, 0x6570_0000 + epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch = Batch::from_dataset(dataset, chunk)?;
            let (loss, grad) = cross_entropy_and_grad(&params, spec, &batch)?;
            let (next, next_state) = adamw_step(&params, &state, &grad, config)?;
            params = next;
            state = next_state;
            loss_sum += loss;
            batches += 1;
        }
        epoch_loss.push(loss_sum / batches as f64);
    }
    params.assert_finite()?;
    let final_train_accuracy = evaluate_accuracy(&params, spec, dataset)?;
    let log = TrainLog {
        epoch_loss,
        final_train_accuracy,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((params, log))
}

/// Classification accuracy of a model on a test set; the single Perf metric.
pub fn perf(params: &ParamVector, spec: &ModelSpec, testset: &Dataset) -> Result<f64> {
    if testset.is_empty() {
        return Err(ValuationError::Invalid("empty test set".into()));
    }
    evaluate_accuracy(params, spec, testset)
}

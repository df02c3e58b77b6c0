//! Approximate machine unlearning: gradient ascent on the forget set with
//! two stability regularizers (parameter distance to the pre-trained model
//! and logit KL on the test set), plus a perfect-unlearning oracle that
//! retrains on the complement.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{Result, ValuationError};
use crate::model::{
    cross_entropy_and_grad, forward_logits, init_params, kl_grad, param_axpy, param_l2_sq, Batch,
    ModelSpec, ParamVector,
};
use crate::rng::rng_for;
use crate::train::{adamw_step, train, OptimizerState, TrainConfig, TrainLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnlearnOptimizer {
    Sgd,
    AdamW,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct UnlearnConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub optimizer: UnlearnOptimizer,
    pub seed: u64,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            batch_size: 32,
            learning_rate: 2e-5,
            lambda1: 1.0,
            lambda2: 1.0,
            optimizer: UnlearnOptimizer::Sgd,
            seed: 0,
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(ValuationError::Invalid("batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(ValuationError::Invalid("learning_rate must be > 0".into()));
        }
        if self.lambda1 < 0.0 || self.lambda2 < 0.0 {
            return Err(ValuationError::Invalid("lambda weights must be >= 0".into()));
        }
        Ok(())
    }
}

/// Total unlearning loss and its gradient w.r.t. `theta`:
/// `-CE(unlearn_batch) + lambda1 * ||theta - theta_full||^2
///  + lambda2 * KL(f_theta(test) || f_theta_full(test))`,
/// with the pre-trained model's logits held constant.
pub fn unlearn_loss_and_grad(
    theta: &ParamVector,
    theta_full: &ParamVector,
    spec: &ModelSpec,
    unlearn_batch: &Batch,
    test_batch: &Batch,
    lambda1: f64,
    lambda2: f64,
) -> Result<(f64, ParamVector)> {
    theta.check_bound(spec)?;
    theta_full.check_bound(spec)?;
    let (ce_loss, ce_grad) = cross_entropy_and_grad(theta, spec, unlearn_batch)?;
    let l2 = param_l2_sq(theta, theta_full)?;
    let ref_logits = forward_logits(theta_full, spec, test_batch)?;
    let (kl, kl_g) = kl_grad(theta, spec, test_batch, &ref_logits)?;

    let loss = -ce_loss + lambda1 * l2 + lambda2 * kl;
    // grad = -ce_grad + 2*lambda1*(theta - theta_full) + lambda2 * kl_grad
    let mut grad = vec![0.0; theta.len()];
    for i in 0..theta.len() {
        grad[i] = -ce_grad.values()[i]
            + 2.0 * lambda1 * (theta.values()[i] - theta_full.values()[i])
            + lambda2 * kl_g.values()[i];
    }
    Ok((loss, theta.with_values(grad)))
}

/// Cycling mini-batch sampler: shuffled order per pass, reshuffled with a
/// derived seed when exhausted.
struct BatchCycler {
    n: usize,
    batch_size: usize,
    seed: u64,
    stream: u64,
    order: Vec<usize>,
    cursor: usize,
    pass: u64,
}

impl BatchCycler {
    fn new(n: usize, batch_size: usize, seed: u64, stream: u64) -> Self {
        let mut s = Self {
            n,
            batch_size: batch_size.min(n),
            seed,
            stream,
            order: Vec::new(),
            cursor: 0,
            pass: 0,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.n).collect();
        let mut rng = rng_for(self.seed, self.stream.wrapping_add(self.pass));
        self.order.shuffle(&mut rng);
        self.cursor = 0;
        self.pass += 1;
    }

    fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor + self.batch_size > self.n {
            self.reshuffle();
        }
        let out = self.order[self.cursor..self.cursor + self.batch_size].to_vec();
        self.cursor += self.batch_size;
        out
    }
}

/// Run `config.steps` first-order steps on the unlearning loss starting
/// from `model_full` (never mutated).
pub fn unlearn(
    model_full: &ParamVector,
    spec: &ModelSpec,
    unlearn_set: &Dataset,
    test_set: &Dataset,
    config: &UnlearnConfig,
) -> Result<(ParamVector, TrainLog)> {
    config.validate()?;
    if unlearn_set.is_empty() {
        return Err(ValuationError::Invalid("empty unlearn set".into()));
    }
    if test_set.is_empty() {
        return Err(ValuationError::Invalid("empty test set".into()));
    }
    model_full.check_bound(spec)?;
    let start = Instant::now();
    let mut theta = model_full.clone();
    let mut forget_batches = BatchCycler::new(unlearn_set.len(), config.batch_size, config.seed, 0x756e_0000);
    let mut test_batches = BatchCycler::new(test_set.len(), config.batch_size, config.seed, 0x7465_0000);
    let mut adam_state = OptimizerState::new(theta.len());
    let adam_cfg = TrainConfig {
        learning_rate: config.learning_rate,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let mut step_losses = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let forget = Batch::from_dataset(unlearn_set, &forget_batches.next_batch())?;
        let test = Batch::from_dataset(test_set, &test_batches.next_batch())?;
        let (loss, grad) = unlearn_loss_and_grad(
            &theta,
            model_full,
            spec,
            &forget,
            &test,
            config.lambda1,
            config.lambda2,
        )?;
        theta = match config.optimizer {
            UnlearnOptimizer::Sgd => param_axpy(&theta, -config.learning_rate, &grad)?,
            UnlearnOptimizer::AdamW => {
                let (next, next_state) = adamw_step(&theta, &adam_state, &grad, &adam_cfg)?;
                adam_state = next_state;
                next
            }
        };
        step_losses.push(loss);
    }
    theta.assert_finite()?;
    let final_train_accuracy = if config.steps > 0 {
        crate::train::perf(&theta, spec, unlearn_set)?
    } else {
        crate::train::perf(model_full, spec, unlearn_set)?
    };
    let log = TrainLog {
        epoch_loss: step_losses,
        final_train_accuracy,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((theta, log))
}

/// Perfect-unlearning oracle: retrain on the complement of the coalition.
/// Unlearning everything returns the freshly initialized model.
pub fn oracle_unlearn(
    full_dataset: &Dataset,
    coalition_ids: &[u64],
    spec: &ModelSpec,
    train_config: &TrainConfig,
) -> Result<ParamVector> {
    let indices = full_dataset.indices_of_ids(coalition_ids)?;
    let complement = full_dataset.complement_indices(&indices);
    if complement.is_empty() {
        return Ok(init_params(spec, train_config.seed));
    }
    let remain = full_dataset.select(&complement)?;
    let (params, _) = train(spec, &remain, train_config)?;
    Ok(params)
}

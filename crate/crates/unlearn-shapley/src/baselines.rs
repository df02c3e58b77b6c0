//! Comparison valuators: exact nearest-neighbor Shapley via its closed-form
//! recursion, Beta-weighted semivalue estimation on the shared permutation
//! stream, and Hessian-free influence scores.

use crate::data::Dataset;
use crate::error::{Result, ValuationError};
use crate::model::{cross_entropy_and_grad, Batch, ModelSpec, ParamVector};
use crate::shapley::{permutation_estimate, ConvergenceCriterion, Utility, ValuationResult};

/// Per-training-point gradient-alignment score.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InfluenceScore {
    pub scores: Vec<f64>,
}

/// Beta distribution parameters for cardinality weighting.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha <= 0.0 || beta <= 0.0 {
            return Err(ValuationError::Invalid("alpha and beta must be > 0".into()));
        }
        Ok(Self { alpha, beta })
    }

    pub fn is_uniform(&self) -> bool {
        self.alpha == 1.0 && self.beta == 1.0
    }
}

/// Exact per-point values for the k-nearest-neighbor utility, computed with
/// the backward recursion from the farthest training point toward the
/// nearest, averaged over test points. Fully deterministic.
pub fn knn_shapley(train: &Dataset, test: &Dataset, k: usize) -> Result<Vec<f64>> {
    let n = train.len();
    if n == 0 || test.is_empty() {
        return Err(ValuationError::Invalid("empty train or test set".into()));
    }
    if k == 0 || k > n {
        return Err(ValuationError::Invalid(format!("k must be in [1, {n}]")));
    }
    if train.num_features() != test.num_features() {
        return Err(ValuationError::Contract("feature dimension mismatch".into()));
    }
    let mut values = vec![0.0; n];
    for t in 0..test.len() {
        let target = test.row(t);
        let label = test.label(t);
        // ascending distance, ties by ascending id
        let mut order: Vec<usize> = (0..n).collect();
        let dist: Vec<f64> = (0..n)
            .map(|i| {
                train
                    .row(i)
                    .iter()
                    .zip(target)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .collect();
        order.sort_by(|&a, &b| {
            dist[a]
                .partial_cmp(&dist[b])
                .unwrap()
                .then(train.ids()[a].cmp(&train.ids()[b]))
        });

        let matches = |i: usize| f64::from(u8::from(train.label(i) == label));
        // base case at the farthest point, then walk toward the nearest
        let mut s = matches(order[n - 1]) / n as f64;
        values[order[n - 1]] += s;
        for pos in (0..n - 1).rev() {
            let j = pos + 1; // 1-based rank of the current point
            let current = order[pos];
            let next = order[pos + 1];
            s += (matches(current) - matches(next)) / k as f64
                * (k.min(j) as f64 / j as f64);
            values[current] += s;
        }
    }
    for v in &mut values {
        *v /= test.len() as f64;
    }
    Ok(values)
}

/// Unnormalized-to-normalized cardinality distribution for a Beta-weighted
/// semivalue over prefix positions `1..=n`. Built by an exact ratio
/// recurrence so the uniform case yields weights of exactly one.
pub fn beta_position_weights(n: usize, params: &BetaParams) -> Vec<f64> {
    // u(j+1)/u(j) = (n-j)/j * (j+beta-1)/(n-j+alpha-1)
    let mut u = vec![1.0; n];
    for j in 1..n {
        let jf = j as f64;
        let nf = n as f64;
        let ratio = (nf - jf) / jf * (jf + params.beta - 1.0) / (nf - jf + params.alpha - 1.0);
        u[j] = u[j - 1] * ratio;
    }
    let total: f64 = u.iter().sum();
    // per-permutation credit weight = n * p(j)
    u.iter().map(|&x| x * n as f64 / total).collect()
}

/// Beta-weighted semivalue estimate on the same permutation stream as
/// `mc_shapley`; Beta(1, 1) reduces to it bit for bit.
pub fn beta_shapley(
    utility: &Utility,
    num_players: usize,
    params: &BetaParams,
    num_samples: usize,
    seed: u64,
) -> Result<ValuationResult> {
    let weights = beta_position_weights(num_players, params);
    permutation_estimate(
        utility,
        num_players,
        &ConvergenceCriterion::fixed(num_samples),
        seed,
        Some(&weights),
    )
}

/// Hessian-free influence: `score(i) = mean over test points of the inner
/// product of per-point loss gradients`.
pub fn influence_scores(
    model: &ParamVector,
    spec: &ModelSpec,
    train: &Dataset,
    test: &Dataset,
) -> Result<InfluenceScore> {
    if train.is_empty() || test.is_empty() {
        return Err(ValuationError::Invalid("empty train or test set".into()));
    }
    // gradient average over the test set is linear, so accumulate it once
    let mut test_grad = vec![0.0; model.len()];
    for t in 0..test.len() {
        let batch = Batch::from_dataset(test, &[t])?;
        let (_, grad) = cross_entropy_and_grad(model, spec, &batch)?;
        for (acc, g) in test_grad.iter_mut().zip(grad.values()) {
            *acc += g;
        }
    }
    for g in &mut test_grad {
        *g /= test.len() as f64;
    }

    let mut scores = Vec::with_capacity(train.len());
    for i in 0..train.len() {
        let batch = Batch::from_dataset(train, &[i])?;
        let (_, grad) = cross_entropy_and_grad(model, spec, &batch)?;
        let dot: f64 = grad.values().iter().zip(&test_grad).map(|(a, b)| a * b).sum();
        scores.push(dot);
    }
    Ok(InfluenceScore { scores })
}

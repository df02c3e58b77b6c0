//! The valuation core: utility-function abstraction with memoization,
//! exact Shapley by subset enumeration, permutation Monte Carlo with a
//! windowed convergence criterion, the unlearning utility in approximate
//! and oracle modes, and partial valuation from a pre-trained model.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;

use crate::data::{Dataset, Partition};
use crate::error::{Result, ValuationError};
use crate::model::{init_params, ModelSpec, ParamVector};
use crate::rng::rng_for;
use crate::train::{perf, train, TrainConfig};
use crate::unlearn::{unlearn, UnlearnConfig};

/// Hard cap for exact enumeration; 2^n utility calls beyond this are not
/// worth supporting.
pub const EXACT_PLAYER_LIMIT: usize = 12;

/// A coalition -> payoff evaluator with a memo cache keyed by the canonical
/// (sorted, deduplicated) coalition encoding.
pub struct Utility {
    num_players: usize,
    eval: Box<dyn Fn(&[usize]) -> Result<f64> + Send + Sync>,
    cache: Mutex<HashMap<Vec<usize>, f64>>,
    cache_enabled: bool,
}

impl Utility {
    pub fn new<F>(num_players: usize, eval: F) -> Self
    where
        F: Fn(&[usize]) -> Result<f64> + Send + Sync + 'static,
    {
        Self {
            num_players,
            eval: Box::new(eval),
            cache: Mutex::new(HashMap::new()),
            cache_enabled: true,
        }
    }

    pub fn with_cache(mut self, enabled: bool) -> Self {
        self.cache_enabled = enabled;
        self
    }

    pub fn num_players(&self) -> usize {
        self.num_players
    }

    /// Evaluate a coalition of player indices. Order and duplicates are
    /// irrelevant; results are memoized when the cache is enabled.
    pub fn value(&self, coalition: &[usize]) -> Result<f64> {
        let mut key: Vec<usize> = coalition.to_vec();
        key.sort_unstable();
        key.dedup();
        if let Some(&p) = key.iter().find(|&&p| p >= self.num_players) {
            return Err(ValuationError::Invalid(format!(
                "player index {p} out of range [0, {})",
                self.num_players
            )));
        }
        if self.cache_enabled {
            if let Some(&v) = self.cache.lock().unwrap().get(&key) {
                return Ok(v);
            }
        }
        let v = (self.eval)(&key)?;
        if self.cache_enabled {
            self.cache.lock().unwrap().insert(key, v);
        }
        Ok(v)
    }
}

/// Per-player value estimates with sampling bookkeeping.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ValuationResult {
    pub values: Vec<f64>,
    pub sample_counts: Vec<u64>,
    pub running_variances: Vec<f64>,
    pub converged: bool,
    pub permutations_used: usize,
}

/// Stopping rule for permutation sampling: stop once the mean absolute
/// change of all value estimates over the last `window` permutations falls
/// below the threshold, or at `max_permutations`.
///
/// With `relative` set the threshold is scaled by the range of utility
/// values observed so far.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConvergenceCriterion {
    pub max_permutations: usize,
    pub window: usize,
    pub mean_abs_change_threshold: f64,
    pub relative: bool,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        Self {
            max_permutations: 1000,
            window: 50,
            mean_abs_change_threshold: 0.005,
            relative: true,
        }
    }
}

impl ConvergenceCriterion {
    pub fn validate(&self) -> Result<()> {
        if self.max_permutations == 0 || self.window == 0 {
            return Err(ValuationError::Invalid(
                "max_permutations and window must be >= 1".into(),
            ));
        }
        if self.mean_abs_change_threshold <= 0.0 {
            return Err(ValuationError::Invalid("threshold must be > 0".into()));
        }
        Ok(())
    }

    /// Run exactly `samples` permutations with no early stop.
    pub fn fixed(samples: usize) -> Self {
        Self {
            max_permutations: samples,
            window: usize::MAX,
            mean_abs_change_threshold: f64::MIN_POSITIVE,
            relative: false,
        }
    }
}

/// Retrain utility `v(S) = Perf(model trained on the union of S)`, with
/// `v(empty) = Perf(initialized model)`. Coalitions are canonicalized to
/// ascending point id before training.
pub fn make_retrain_utility(
    dataset: &Dataset,
    partition: &Partition,
    spec: &ModelSpec,
    train_config: &TrainConfig,
    test_set: &Dataset,
) -> Result<Utility> {
    if test_set.is_empty() {
        return Err(ValuationError::Invalid("empty test set".into()));
    }
    check_partition(dataset, partition)?;
    let dataset = dataset.clone();
    let partition = partition.clone();
    let spec = spec.clone();
    let config = train_config.clone();
    let test_set = test_set.clone();
    let num_players = partition.num_players();
    Ok(Utility::new(num_players, move |coalition| {
        if coalition.is_empty() {
            return perf(&init_params(&spec, config.seed), &spec, &test_set);
        }
        let indices = canonical_indices(&dataset, &partition, coalition);
        let subset = dataset.select(&indices)?;
        let (params, _) = train(&spec, &subset, &config)?;
        perf(&params, &spec, &test_set)
    }))
}

/// How the unlearning utility obtains the unlearned model.
#[derive(Debug, Clone)]
pub enum UnlearnMode {
    /// Gradient-ascent unlearning from the pre-trained model.
    Approx,
    /// Retrain on the complement of the coalition (the ideal condition).
    Oracle(TrainConfig),
}

/// Unlearning utility `v_hat(S) = Perf(model_full) - Perf(model after
/// unlearning the union of S)`, with `v_hat(empty) = 0` exactly.
pub fn make_unlearn_utility(
    model_full: &ParamVector,
    dataset: &Dataset,
    partition: &Partition,
    spec: &ModelSpec,
    unlearn_config: &UnlearnConfig,
    test_set: &Dataset,
    mode: UnlearnMode,
) -> Result<Utility> {
    if test_set.is_empty() {
        return Err(ValuationError::Invalid("empty test set".into()));
    }
    check_partition(dataset, partition)?;
    model_full.check_bound(spec)?;
    let perf_full = perf(model_full, spec, test_set)?;
    let model_full = model_full.clone();
    let dataset = dataset.clone();
    let partition = partition.clone();
    let spec = spec.clone();
    let config = unlearn_config.clone();
    let test_set = test_set.clone();
    let num_players = partition.num_players();
    Ok(Utility::new(num_players, move |coalition| {
        if coalition.is_empty() {
            return Ok(0.0);
        }
        let indices = canonical_indices(&dataset, &partition, coalition);
        let unlearned = match &mode {
            UnlearnMode::Approx => {
                let forget = dataset.select(&indices)?;
                let (params, _) = unlearn(&model_full, &spec, &forget, &test_set, &config)?;
                params
            }
            UnlearnMode::Oracle(train_config) => {
                let ids: Vec<u64> = indices.iter().map(|&i| dataset.ids()[i]).collect();
                crate::unlearn::oracle_unlearn(&dataset, &ids, &spec, train_config)?
            }
        };
        Ok(perf_full - perf(&unlearned, &spec, &test_set)?)
    }))
}

fn check_partition(dataset: &Dataset, partition: &Partition) -> Result<()> {
    for player in partition.players() {
        if player.is_empty() {
            return Err(ValuationError::Invalid("empty player in partition".into()));
        }
        if player.iter().any(|&i| i >= dataset.len()) {
            return Err(ValuationError::Invalid("partition index out of range".into()));
        }
    }
    Ok(())
}

/// Union of player index sets, sorted ascending by point id.
fn canonical_indices(dataset: &Dataset, partition: &Partition, coalition: &[usize]) -> Vec<usize> {
    let mut indices = partition.coalition_indices(coalition);
    indices.sort_by_key(|&i| dataset.ids()[i]);
    indices
}

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for i in 1..=n {
        f[i] = f[i - 1] * i as f64;
    }
    f
}

/// Exact combinatorial Shapley value by subset enumeration.
pub fn exact_shapley(utility: &Utility, num_players: usize) -> Result<ValuationResult> {
    if num_players == 0 {
        return Err(ValuationError::Invalid("need at least one player".into()));
    }
    if num_players > EXACT_PLAYER_LIMIT {
        return Err(ValuationError::Capability(format!(
            "exact enumeration supports up to {EXACT_PLAYER_LIMIT} players \
             (got {num_players}); use mc_shapley instead"
        )));
    }
    let n = num_players;
    // Evaluate each coalition at most once.
    let mut table = vec![0.0; 1 << n];
    let mut members = Vec::with_capacity(n);
    for mask in 0..(1usize << n) {
        members.clear();
        for p in 0..n {
            if mask & (1 << p) != 0 {
                members.push(p);
            }
        }
        table[mask] = utility.value(&members)?;
    }
    let fact = factorials(n);
    let mut values = vec![0.0; n];
    for i in 0..n {
        let bit = 1usize << i;
        for mask in 0..(1usize << n) {
            if mask & bit != 0 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let weight = fact[s] * fact[n - s - 1] / fact[n];
            values[i] += weight * (table[mask | bit] - table[mask]);
        }
    }
    Ok(ValuationResult {
        values,
        sample_counts: vec![1u64 << (n - 1); n],
        running_variances: vec![0.0; n],
        converged: true,
        permutations_used: 0,
    })
}

/// Shared permutation-sampling engine. `cardinality_weights[j]` reweights
/// the marginal of the player at position j+1 of a permutation; `None`
/// means plain Shapley (all weights one).
pub(crate) fn permutation_estimate(
    utility: &Utility,
    num_players: usize,
    criterion: &ConvergenceCriterion,
    seed: u64,
    cardinality_weights: Option<&[f64]>,
) -> Result<ValuationResult> {
    criterion.validate()?;
    if num_players == 0 {
        return Err(ValuationError::Invalid("need at least one player".into()));
    }
    if let Some(w) = cardinality_weights {
        if w.len() != num_players {
            return Err(ValuationError::Contract(
                "cardinality weight vector length mismatch".into(),
            ));
        }
    }
    let n = num_players;
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    let mut counts = vec![0u64; n];
    let mut v_min = f64::INFINITY;
    let mut v_max = f64::NEG_INFINITY;
    let mut history: std::collections::VecDeque<Vec<f64>> = std::collections::VecDeque::new();
    let mut converged = false;
    let mut used = 0;

    let mut players: Vec<usize> = (0..n).collect();
    for t in 0..criterion.max_permutations {
        let mut rng = rng_for(seed, t as u64);
        players.shuffle(&mut rng);
        let mut prefix: Vec<usize> = Vec::with_capacity(n);
        let mut prev = utility.value(&prefix)?;
        v_min = v_min.min(prev);
        v_max = v_max.max(prev);
        for (pos, &player) in players.iter().enumerate() {
            prefix.push(player);
            let current = utility.value(&prefix)?;
            v_min = v_min.min(current);
            v_max = v_max.max(current);
            let mut delta = current - prev;
            if let Some(w) = cardinality_weights {
                delta *= w[pos];
            }
            counts[player] += 1;
            let c = counts[player] as f64;
            let d1 = delta - mean[player];
            mean[player] += d1 / c;
            m2[player] += d1 * (delta - mean[player]);
            prev = current;
        }
        used = t + 1;

        if criterion.window != usize::MAX {
            history.push_back(mean.clone());
            if history.len() > criterion.window + 1 {
                history.pop_front();
            }
            if history.len() == criterion.window + 1 {
                let old = history.front().unwrap();
                let change: f64 =
                    mean.iter().zip(old).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
                let range = v_max - v_min;
                let threshold = if criterion.relative && range > 0.0 {
                    criterion.mean_abs_change_threshold * range
                } else {
                    criterion.mean_abs_change_threshold
                };
                if change < threshold {
                    converged = true;
                    break;
                }
            }
        }
    }

    let running_variances = counts
        .iter()
        .zip(&m2)
        .map(|(&c, &s)| if c > 1 { s / (c - 1) as f64 } else { 0.0 })
        .collect();
    Ok(ValuationResult {
        values: mean,
        sample_counts: counts,
        running_variances,
        converged,
        permutations_used: used,
    })
}

/// Permutation Monte Carlo Shapley estimate with windowed convergence.
pub fn mc_shapley(
    utility: &Utility,
    num_players: usize,
    criterion: &ConvergenceCriterion,
    seed: u64,
) -> Result<ValuationResult> {
    permutation_estimate(utility, num_players, criterion, seed, None)
}

/// The three utility components of a partial valuation, kept for audit.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PartialComponents {
    pub v_tgt: f64,
    pub v_remain: f64,
    pub v_full: f64,
    pub perf_full: f64,
    pub perf_unlearned: f64,
    pub perf_tgt_model: f64,
    pub perf_random: f64,
}

/// Partial valuation: the Shapley value of `d_tgt` in the two-player game
/// `{d_tgt, remainder}` computed from the pre-trained model alone.
///
/// `v_hat(d_tgt)` comes from unlearning the target, `v_hat(remainder)` from
/// training a fresh model on the target only, and `v_hat(everything)` from
/// the initialized model.
pub fn partial_value(
    model_full: &ParamVector,
    spec: &ModelSpec,
    d_tgt: &Dataset,
    test_set: &Dataset,
    train_config: &TrainConfig,
    unlearn_config: &UnlearnConfig,
) -> Result<(f64, PartialComponents)> {
    if d_tgt.is_empty() {
        return Err(ValuationError::Invalid("empty target dataset".into()));
    }
    let perf_full = perf(model_full, spec, test_set)?;
    let (unlearned, _) = unlearn(model_full, spec, d_tgt, test_set, unlearn_config)?;
    let perf_unlearned = perf(&unlearned, spec, test_set)?;
    let (tgt_model, _) = train(spec, d_tgt, train_config)?;
    let perf_tgt_model = perf(&tgt_model, spec, test_set)?;
    let perf_random = perf(&init_params(spec, train_config.seed), spec, test_set)?;

    let components = PartialComponents {
        v_tgt: perf_full - perf_unlearned,
        v_remain: perf_full - perf_tgt_model,
        v_full: perf_full - perf_random,
        perf_full,
        perf_unlearned,
        perf_tgt_model,
        perf_random,
    };
    let phi = 0.5 * (components.v_tgt + components.v_full - components.v_remain);
    Ok((phi, components))
}

/// Partial valuation under the perfect-unlearning oracle; needs the full
/// dataset, so it is an evaluation-only variant.
pub fn partial_value_oracle(
    full_dataset: &Dataset,
    d_tgt_ids: &[u64],
    spec: &ModelSpec,
    test_set: &Dataset,
    train_config: &TrainConfig,
) -> Result<(f64, PartialComponents)> {
    let (model_full, _) = train(spec, full_dataset, train_config)?;
    let perf_full = perf(&model_full, spec, test_set)?;
    let unlearned = crate::unlearn::oracle_unlearn(full_dataset, d_tgt_ids, spec, train_config)?;
    let perf_unlearned = perf(&unlearned, spec, test_set)?;
    let tgt_indices = full_dataset.indices_of_ids(d_tgt_ids)?;
    let d_tgt = full_dataset.select(&tgt_indices)?;
    let perf_tgt_model = if d_tgt.is_empty() {
        perf(&init_params(spec, train_config.seed), spec, test_set)?
    } else {
        let (m, _) = train(spec, &d_tgt, train_config)?;
        perf(&m, spec, test_set)?
    };
    let perf_random = perf(&init_params(spec, train_config.seed), spec, test_set)?;

    let components = PartialComponents {
        v_tgt: perf_full - perf_unlearned,
        v_remain: perf_full - perf_tgt_model,
        v_full: perf_full - perf_random,
        perf_full,
        perf_unlearned,
        perf_tgt_model,
        perf_random,
    };
    let phi = 0.5 * (components.v_tgt + components.v_full - components.v_remain);
    Ok((phi, components))
}

/// Exact two-player reference value using the retrain utility, as the
/// evaluation baseline: `0.5 * (v(tgt) + v(full) - v(remain))`, optionally
/// subtracting `0.5 * v(empty)` to recover the strict two-player expansion.
pub fn exact_partial_reference(
    dataset: &Dataset,
    d_tgt_ids: &[u64],
    spec: &ModelSpec,
    train_config: &TrainConfig,
    test_set: &Dataset,
    subtract_empty: bool,
) -> Result<f64> {
    let tgt_indices = dataset.indices_of_ids(d_tgt_ids)?;
    let remain_indices = dataset.complement_indices(&tgt_indices);
    let perf_empty = perf(&init_params(spec, train_config.seed), spec, test_set)?;

    let perf_of = |indices: &[usize]| -> Result<f64> {
        if indices.is_empty() {
            return Ok(perf_empty);
        }
        let mut sorted = indices.to_vec();
        sorted.sort_by_key(|&i| dataset.ids()[i]);
        let subset = dataset.select(&sorted)?;
        let (params, _) = train(spec, &subset, train_config)?;
        perf(&params, spec, test_set)
    };

    let v_tgt = perf_of(&tgt_indices)?;
    let all: Vec<usize> = (0..dataset.len()).collect();
    let v_full = perf_of(&all)?;
    let v_remain = perf_of(&remain_indices)?;
    let mut phi = 0.5 * (v_tgt + v_full - v_remain);
    if subtract_empty {
        phi -= 0.5 * perf_empty;
    }
    Ok(phi)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::data::{generate_synthetic, partition, Granularity};
    use crate::model::Activation;
    use approx::assert_abs_diff_eq;
    use itertools::Itertools;
    use rand::Rng;

    /// Additive game: v(S) = sum of per-player weights.
    fn additive(weights: &'static [f64]) -> Utility {
        Utility::new(weights.len(), move |s| Ok(s.iter().map(|&i| weights[i]).sum()))
    }

    /// Random deterministic game as a bitmask table.
    pub(crate) fn random_game(n: usize, seed: u64) -> Utility {
        let mut rng = rng_for(seed, 0x67616d65);
        let table: Vec<f64> = (0..(1usize << n)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Utility::new(n, move |s| {
            let mask: usize = s.iter().map(|&i| 1usize << i).sum();
            Ok(table[mask])
        })
    }

    /// Permutation-form oracle: average marginal over all n! orders.
    pub(crate) fn permutation_enumeration(utility: &Utility, n: usize) -> Vec<f64> {
        let mut phi = vec![0.0; n];
        let mut count = 0usize;
        for perm in (0..n).permutations(n) {
            count += 1;
            let mut prefix = Vec::new();
            let mut prev = utility.value(&prefix).unwrap();
            for &p in &perm {
                prefix.push(p);
                let current = utility.value(&prefix).unwrap();
                phi[p] += current - prev;
                prev = current;
            }
        }
        for v in &mut phi {
            *v /= count as f64;
        }
        phi
    }

    #[test]
    fn additive_game_recovers_weights() {
        let u = additive(&[0.1, 0.2, 0.3]);
        let r = exact_shapley(&u, 3).unwrap();
        assert_abs_diff_eq!(r.values[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(r.values[1], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(r.values[2], 0.3, epsilon = 1e-12);
        assert!(r.converged);
    }

    #[test]
    fn unanimity_game_splits_evenly() {
        let u = Utility::new(3, |s| Ok(if s.len() == 3 { 1.0 } else { 0.0 }));
        let r = exact_shapley(&u, 3).unwrap();
        for v in &r.values {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_matches_permutation_enumeration() {
        let u = random_game(4, 3);
        let exact = exact_shapley(&u, 4).unwrap();
        let oracle = permutation_enumeration(&u, 4);
        for (a, b) in exact.values.iter().zip(&oracle) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn exact_rejects_large_games() {
        let u = Utility::new(13, |_| Ok(0.0));
        assert!(matches!(
            exact_shapley(&u, 13),
            Err(ValuationError::Capability(_))
        ));
    }

    #[test]
    fn efficiency_symmetry_dummy_on_random_games() {
        for seed in 0..5u64 {
            let n = 6;
            let u = random_game(n, seed);
            let r = exact_shapley(&u, n).unwrap();
            let v_n = u.value(&(0..n).collect::<Vec<_>>()).unwrap();
            let v_0 = u.value(&[]).unwrap();
            assert_abs_diff_eq!(r.values.iter().sum::<f64>(), v_n - v_0, epsilon = 1e-9);
        }
        // dummy player: v ignores player 2
        let u = Utility::new(3, |s| {
            Ok(s.iter().filter(|&&p| p != 2).map(|&p| (p + 1) as f64).sum())
        });
        let r = exact_shapley(&u, 3).unwrap();
        assert_abs_diff_eq!(r.values[2], 0.0, epsilon = 1e-12);
        // symmetric players get equal values
        let u = Utility::new(3, |s| Ok((s.len() * s.len()) as f64));
        let r = exact_shapley(&u, 3).unwrap();
        assert_abs_diff_eq!(r.values[0], r.values[1], epsilon = 1e-12);
        assert_abs_diff_eq!(r.values[1], r.values[2], epsilon = 1e-12);
    }

    #[test]
    fn linearity_of_exact_values() {
        for seed in 0..3u64 {
            let n = 5;
            let u1 = random_game(n, 100 + seed);
            let u2 = random_game(n, 200 + seed);
            let r1 = exact_shapley(&u1, n).unwrap();
            let r2 = exact_shapley(&u2, n).unwrap();
            let sum_utility = Utility::new(n, move |s| Ok(u1.value(s)? + u2.value(s)?));
            let rs = exact_shapley(&sum_utility, n).unwrap();
            for i in 0..n {
                assert_abs_diff_eq!(rs.values[i], r1.values[i] + r2.values[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn mc_single_player() {
        let u = Utility::new(1, |s| Ok(if s.is_empty() { 0.25 } else { 0.75 }));
        let r = mc_shapley(&u, 1, &ConvergenceCriterion::fixed(1), 0).unwrap();
        assert_abs_diff_eq!(r.values[0], 0.5, epsilon = 1e-12);
        assert_eq!(r.permutations_used, 1);
    }

    #[test]
    fn mc_additive_game_is_exact_per_permutation() {
        let u = additive(&[0.1, 0.2, 0.3, 0.4, 0.5]);
        let r = mc_shapley(&u, 5, &ConvergenceCriterion::fixed(500), 7).unwrap();
        for (i, w) in [0.1, 0.2, 0.3, 0.4, 0.5].iter().enumerate() {
            assert_abs_diff_eq!(r.values[i], *w, epsilon = 1e-12);
            assert_abs_diff_eq!(r.running_variances[i], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mc_converges_to_exact_on_random_game() {
        let n = 8;
        let u = random_game(n, 12);
        let exact = exact_shapley(&u, n).unwrap();
        let mc = mc_shapley(&u, n, &ConvergenceCriterion::fixed(2000), 5).unwrap();
        let mut v_min = f64::INFINITY;
        let mut v_max = f64::NEG_INFINITY;
        for mask in 0..(1usize << n) {
            let members: Vec<usize> = (0..n).filter(|&p| mask & (1 << p) != 0).collect();
            let v = u.value(&members).unwrap();
            v_min = v_min.min(v);
            v_max = v_max.max(v);
        }
        let tolerance = 0.02 * (v_max - v_min);
        for i in 0..n {
            assert!(
                (mc.values[i] - exact.values[i]).abs() < tolerance,
                "player {i}: mc {} exact {}",
                mc.values[i],
                exact.values[i]
            );
        }
    }

    #[test]
    fn mc_early_stop_reports_convergence() {
        let u = additive(&[0.5, 0.1, 0.9]);
        let criterion = ConvergenceCriterion {
            max_permutations: 1000,
            window: 5,
            mean_abs_change_threshold: 1e-6,
            relative: false,
        };
        let r = mc_shapley(&u, 3, &criterion, 1).unwrap();
        assert!(r.converged);
        assert!(r.permutations_used < 1000);
    }

    #[test]
    fn cache_toggle_is_transparent() {
        let n = 5;
        let with = random_game(n, 44);
        let without = random_game(n, 44).with_cache(false);
        let a = mc_shapley(&with, n, &ConvergenceCriterion::fixed(50), 3).unwrap();
        let b = mc_shapley(&without, n, &ConvergenceCriterion::fixed(50), 3).unwrap();
        assert_eq!(a.values, b.values);
        let ea = exact_shapley(&with, n).unwrap();
        let eb = exact_shapley(&without, n).unwrap();
        assert_eq!(ea.values, eb.values);
    }

    #[test]
    fn retrain_utility_basics() {
        let spec = ModelSpec::new(4, vec![], 2, Activation::Relu).unwrap();
        let data = generate_synthetic(40, 4, 2, 4.0, 1).unwrap();
        let test = generate_synthetic(60, 4, 2, 4.0, 2).unwrap();
        let part = partition(&data, Granularity::Subset, 4, 9).unwrap();
        let cfg = TrainConfig { epochs: 5, learning_rate: 0.05, seed: 3, ..TrainConfig::default() };
        let u = make_retrain_utility(&data, &part, &spec, &cfg, &test).unwrap();
        // full coalition equals training on the whole data
        let (full_model, _) = train(&spec, &data, &cfg).unwrap();
        let expected = perf(&full_model, &spec, &test).unwrap();
        assert_abs_diff_eq!(u.value(&[0, 1, 2, 3]).unwrap(), expected, epsilon = 1e-12);
        // order independence
        assert_eq!(u.value(&[2, 0]).unwrap(), u.value(&[0, 2]).unwrap());
        // empty coalition is near chance on a balanced test set
        let v0 = u.value(&[]).unwrap();
        assert!((v0 - 0.5).abs() <= 0.2, "v(empty) = {v0}");
    }

    #[test]
    fn unlearn_utility_empty_is_zero_and_full_oracle_hits_random() {
        let spec = ModelSpec::new(4, vec![], 2, Activation::Relu).unwrap();
        let data = generate_synthetic(40, 4, 2, 4.0, 1).unwrap();
        let test = generate_synthetic(60, 4, 2, 4.0, 2).unwrap();
        let part = partition(&data, Granularity::Subset, 3, 9).unwrap();
        let cfg = TrainConfig { epochs: 5, learning_rate: 0.05, seed: 3, ..TrainConfig::default() };
        let (model, _) = train(&spec, &data, &cfg).unwrap();
        let u = make_unlearn_utility(
            &model,
            &data,
            &part,
            &spec,
            &UnlearnConfig::default(),
            &test,
            UnlearnMode::Oracle(cfg.clone()),
        )
        .unwrap();
        assert_eq!(u.value(&[]).unwrap(), 0.0);
        let expected = perf(&model, &spec, &test).unwrap()
            - perf(&init_params(&spec, cfg.seed), &spec, &test).unwrap();
        assert_abs_diff_eq!(u.value(&[0, 1, 2]).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn oracle_equivalence_small_game() {
        // The central equivalence: exact Shapley over the oracle unlearning
        // utility equals exact Shapley over the retrain utility.
        let spec = ModelSpec::new(4, vec![], 2, Activation::Relu).unwrap();
        let data = generate_synthetic(60, 4, 2, 3.0, 21).unwrap();
        let test = generate_synthetic(80, 4, 2, 3.0, 22).unwrap();
        let part = partition(&data, Granularity::Subset, 4, 5).unwrap();
        let cfg = TrainConfig { epochs: 4, learning_rate: 0.05, seed: 8, ..TrainConfig::default() };
        let (model, _) = train(&spec, &data, &cfg).unwrap();

        let retrain = make_retrain_utility(&data, &part, &spec, &cfg, &test).unwrap();
        let unlearning = make_unlearn_utility(
            &model,
            &data,
            &part,
            &spec,
            &UnlearnConfig::default(),
            &test,
            UnlearnMode::Oracle(cfg.clone()),
        )
        .unwrap();
        let a = exact_shapley(&retrain, 4).unwrap();
        let b = exact_shapley(&unlearning, 4).unwrap();
        for i in 0..4 {
            assert_abs_diff_eq!(a.values[i], b.values[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn partial_value_arithmetic() {
        // synthetic component check straight from the two-player formula
        let components = PartialComponents {
            v_tgt: 0.2,
            v_remain: 0.5,
            v_full: 0.8,
            perf_full: 0.9,
            perf_unlearned: 0.7,
            perf_tgt_model: 0.4,
            perf_random: 0.1,
        };
        let phi = 0.5 * (components.v_tgt + components.v_full - components.v_remain);
        assert_abs_diff_eq!(phi, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn partial_value_oracle_matches_two_player_exact_shapley() {
        let spec = ModelSpec::new(4, vec![], 2, Activation::Relu).unwrap();
        let data = generate_synthetic(60, 4, 2, 3.0, 31).unwrap();
        let test = generate_synthetic(80, 4, 2, 3.0, 32).unwrap();
        let cfg = TrainConfig { epochs: 4, learning_rate: 0.05, seed: 2, ..TrainConfig::default() };
        let tgt_ids: Vec<u64> = (0..20).collect();

        let (phi, _) = partial_value_oracle(&data, &tgt_ids, &spec, &test, &cfg).unwrap();

        // two-player game {tgt, remain} with the oracle unlearning utility
        let tgt_indices = data.indices_of_ids(&tgt_ids).unwrap();
        let remain_indices = data.complement_indices(&tgt_indices);
        let part = Partition::from_players(vec![tgt_indices.clone(), remain_indices]);
        let (model, _) = train(&spec, &data, &cfg).unwrap();
        let u = make_unlearn_utility(
            &model,
            &data,
            &part,
            &spec,
            &UnlearnConfig::default(),
            &test,
            UnlearnMode::Oracle(cfg.clone()),
        )
        .unwrap();
        let r = exact_shapley(&u, 2).unwrap();
        assert_abs_diff_eq!(phi, r.values[0], epsilon = 1e-9);
    }

    #[test]
    fn exact_partial_reference_cases() {
        let spec = ModelSpec::new(4, vec![], 2, Activation::Relu).unwrap();
        let data = generate_synthetic(40, 4, 2, 3.0, 41).unwrap();
        let test = generate_synthetic(60, 4, 2, 3.0, 42).unwrap();
        let cfg = TrainConfig { epochs: 4, learning_rate: 0.05, seed: 2, ..TrainConfig::default() };
        // empty target with the strict expansion -> 0
        let phi = exact_partial_reference(&data, &[], &spec, &cfg, &test, true).unwrap();
        assert_abs_diff_eq!(phi, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_partial_reference_symmetry() {
        let spec = ModelSpec::new(4, vec![], 2, Activation::Relu).unwrap();
        let mut diffs = Vec::new();
        for seed in 0..3u64 {
            let data = generate_synthetic(200, 4, 2, 3.0, 50 + seed).unwrap();
            let test = generate_synthetic(200, 4, 2, 3.0, 80 + seed).unwrap();
            let cfg = TrainConfig {
                epochs: 5,
                learning_rate: 0.05,
                seed,
                ..TrainConfig::default()
            };
            let half_a: Vec<u64> = (0..100).collect();
            let half_b: Vec<u64> = (100..200).collect();
            let pa = exact_partial_reference(&data, &half_a, &spec, &cfg, &test, false).unwrap();
            let pb = exact_partial_reference(&data, &half_b, &spec, &cfg, &test, false).unwrap();
            diffs.push((pa - pb).abs());
        }
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        assert!(mean <= 0.05, "diffs {diffs:?}");
    }
}

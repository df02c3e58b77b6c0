//! Evaluation procedures: noisy-data detection curves, value-guided data
//! removal curves, partial-valuation correlation studies, and timing
//! comparisons between training and unlearning.

use std::time::Instant;

use rayon::prelude::*;

use crate::audit::spearman;
use crate::data::{partition, Dataset, Granularity, NoiseMask, Partition};
use crate::error::{Result, ValuationError};
use crate::model::ModelSpec;
use crate::rng::mix_seed;
use crate::shapley::{exact_partial_reference, partial_value, PartialComponents};
use crate::train::{perf, train, TrainConfig};
use crate::unlearn::UnlearnConfig;

/// Cumulative fraction of noisy players found per inspected bin.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DetectionCurve {
    pub bins_inspected_fraction: Vec<f64>,
    pub noisy_found_fraction: Vec<f64>,
}

/// Test accuracy after removing an increasing fraction of players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalDirection {
    HighestFirst,
    LowestFirst,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RemovalCurve {
    pub removal_fraction: Vec<f64>,
    pub test_accuracy: Vec<f64>,
    pub direction: RemovalDirection,
    /// Fractions skipped because nothing would remain to train on.
    pub skipped_fractions: Vec<f64>,
}

/// Inspect players from the low-value end in bins of `round(bin_fraction*n)`
/// and count the noisy players discovered so far.
pub fn noisy_detection_curve(
    values: &[f64],
    mask: &[bool],
    bin_fraction: f64,
) -> Result<DetectionCurve> {
    if values.len() != mask.len() || values.is_empty() {
        return Err(ValuationError::Contract("values and mask must align".into()));
    }
    if !(0.0 < bin_fraction && bin_fraction <= 1.0) {
        return Err(ValuationError::Invalid("bin_fraction must be in (0, 1]".into()));
    }
    let n = values.len();
    let bin_size = ((bin_fraction * n as f64).round() as usize).max(1);
    let total_noisy = mask.iter().filter(|&&m| m).count();
    // ascending by value; noisy data is expected at the low end
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));

    let mut bins_inspected_fraction = Vec::new();
    let mut noisy_found_fraction = Vec::new();
    let mut found = 0usize;
    let mut inspected = 0usize;
    while inspected < n {
        let next = (inspected + bin_size).min(n);
        for &i in &order[inspected..next] {
            if mask[i] {
                found += 1;
            }
        }
        inspected = next;
        bins_inspected_fraction.push(inspected as f64 / n as f64);
        noisy_found_fraction.push(if total_noisy == 0 {
            1.0
        } else {
            found as f64 / total_noisy as f64
        });
    }
    Ok(DetectionCurve { bins_inspected_fraction, noisy_found_fraction })
}

/// Remove the top (or bottom) `round(f * num_players)` players by value for
/// each fraction, retrain on the rest, and record test accuracy.
pub fn removal_curve(
    dataset: &Dataset,
    partition: &Partition,
    values: &[f64],
    direction: RemovalDirection,
    fractions: &[f64],
    spec: &ModelSpec,
    train_config: &TrainConfig,
    test_set: &Dataset,
) -> Result<RemovalCurve> {
    let p = partition.num_players();
    if values.len() != p {
        return Err(ValuationError::Contract("one value per player required".into()));
    }
    if fractions.iter().any(|&f| !(0.0..=0.95).contains(&f)) {
        return Err(ValuationError::Invalid("fractions must lie in [0, 0.95]".into()));
    }
    let mut order: Vec<usize> = (0..p).collect();
    match direction {
        RemovalDirection::HighestFirst => {
            order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)))
        }
        RemovalDirection::LowestFirst => {
            order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)))
        }
    }

    let points: Vec<Option<(f64, f64)>> = fractions
        .par_iter()
        .map(|&fraction| -> Result<Option<(f64, f64)>> {
            let remove = (fraction * p as f64).round() as usize;
            let keep: Vec<usize> = order[remove..].to_vec();
            let mut indices = partition.coalition_indices(&keep);
            if indices.is_empty() {
                return Ok(None);
            }
            indices.sort_unstable();
            let subset = dataset.select(&indices)?;
            let (params, _) = train(spec, &subset, train_config)?;
            Ok(Some((fraction, perf(&params, spec, test_set)?)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut curve = RemovalCurve {
        removal_fraction: Vec::new(),
        test_accuracy: Vec::new(),
        direction,
        skipped_fractions: Vec::new(),
    };
    for (i, point) in points.into_iter().enumerate() {
        match point {
            Some((f, acc)) => {
                curve.removal_fraction.push(f);
                curve.test_accuracy.push(acc);
            }
            None => curve.skipped_fractions.push(fractions[i]),
        }
    }
    Ok(curve)
}

/// One row of a partial-valuation study.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PartialStudyRow {
    pub subset: usize,
    pub phi_unlearn: f64,
    pub phi_exact: f64,
    pub retrain_perf: f64,
    pub components: PartialComponents,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PartialStudy {
    pub spc_vs_retrain_perf: f64,
    pub spc_vs_exact: f64,
    pub rows: Vec<PartialStudyRow>,
}

/// Partition the data into subsets; for each subset compute the partial
/// value from the pre-trained model, the exact two-player reference, and
/// the accuracy of a model retrained without the subset; then rank-correlate.
pub fn partial_study(
    dataset: &Dataset,
    num_subsets: usize,
    spec: &ModelSpec,
    train_config: &TrainConfig,
    unlearn_config: &UnlearnConfig,
    test_set: &Dataset,
    seed: u64,
) -> Result<PartialStudy> {
    if num_subsets < 4 {
        return Err(ValuationError::Invalid(
            "rank correlation needs at least 4 subsets".into(),
        ));
    }
    let part = partition(dataset, Granularity::Subset, num_subsets, seed)?;
    let (model_full, _) = train(spec, dataset, train_config)?;

    let rows: Vec<PartialStudyRow> = (0..num_subsets)
        .into_par_iter()
        .map(|s| -> Result<PartialStudyRow> {
            let tgt_indices = &part.players()[s];
            let d_tgt = dataset.select(tgt_indices)?;
            let tgt_ids: Vec<u64> = tgt_indices.iter().map(|&i| dataset.ids()[i]).collect();
            let ucfg = UnlearnConfig { seed: mix_seed(seed, s as u64), ..unlearn_config.clone() };
            let (phi_unlearn, components) =
                partial_value(&model_full, spec, &d_tgt, test_set, train_config, &ucfg)?;
            let phi_exact = exact_partial_reference(
                dataset,
                &tgt_ids,
                spec,
                train_config,
                test_set,
                false,
            )?;
            let remain = dataset.select(&dataset.complement_indices(tgt_indices))?;
            let (retrained, _) = train(spec, &remain, train_config)?;
            let retrain_perf = perf(&retrained, spec, test_set)?;
            Ok(PartialStudyRow { subset: s, phi_unlearn, phi_exact, retrain_perf, components })
        })
        .collect::<Result<Vec<_>>>()?;

    let phi_u: Vec<f64> = rows.iter().map(|r| r.phi_unlearn).collect();
    let phi_e: Vec<f64> = rows.iter().map(|r| r.phi_exact).collect();
    let perfs: Vec<f64> = rows.iter().map(|r| r.retrain_perf).collect();
    Ok(PartialStudy {
        spc_vs_retrain_perf: spearman(&phi_u, &perfs)?,
        spc_vs_exact: spearman(&phi_u, &phi_e)?,
        rows,
    })
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct TimingReport {
    pub train_seconds_mean: f64,
    pub train_seconds_sd: f64,
    pub unlearn_seconds_mean: f64,
    pub unlearn_seconds_sd: f64,
    pub speedup: f64,
}

fn mean_sd(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Wall-clock comparison of training to budget vs the unlearning procedure
/// on identical data, warm caches, same process.
pub fn bench_timing(
    dataset: &Dataset,
    spec: &ModelSpec,
    train_config: &TrainConfig,
    unlearn_config: &UnlearnConfig,
    repeats: usize,
) -> Result<TimingReport> {
    if repeats < 3 {
        return Err(ValuationError::Invalid("repeats must be >= 3".into()));
    }
    // warm-up pass; also provides the pre-trained model to unlearn from
    let (model_full, _) = train(spec, dataset, train_config)?;

    let mut train_times = Vec::with_capacity(repeats);
    let mut unlearn_times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let _ = train(spec, dataset, train_config)?;
        train_times.push(start.elapsed().as_secs_f64());

        let start = Instant::now();
        let _ = crate::unlearn::unlearn(&model_full, spec, dataset, dataset, unlearn_config)?;
        unlearn_times.push(start.elapsed().as_secs_f64());
    }
    let (train_seconds_mean, train_seconds_sd) = mean_sd(&train_times);
    let (unlearn_seconds_mean, unlearn_seconds_sd) = mean_sd(&unlearn_times);
    Ok(TimingReport {
        train_seconds_mean,
        train_seconds_sd,
        unlearn_seconds_mean,
        unlearn_seconds_sd,
        speedup: train_seconds_mean / unlearn_seconds_mean,
    })
}

/// Convenience: player-level noise mask from a point-level one.
pub fn player_noise_mask(mask: &NoiseMask, partition: &Partition) -> Vec<bool> {
    mask.player_mask(partition)
}

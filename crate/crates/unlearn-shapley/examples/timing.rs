//! Wall-clock case for unlearning-based valuation: one bounded unlearning
//! run is several times cheaper than retraining to the same budget.

use unlearn_shapley::data::generate_synthetic;
use unlearn_shapley::harness::bench_timing;
use unlearn_shapley::model::{Activation, ModelSpec};
use unlearn_shapley::train::TrainConfig;
use unlearn_shapley::unlearn::UnlearnConfig;

fn main() -> unlearn_shapley::Result<()> {
    let spec = ModelSpec::new(10, vec![], 2, Activation::Relu)?;
    let data = generate_synthetic(3000, 10, 2, 2.0, 101)?;

    let timing = bench_timing(
        &data,
        &spec,
        &TrainConfig { seed: 1, ..TrainConfig::default() },
        &UnlearnConfig::default(),
        5,
    )?;

    println!("training (10 epochs):   {:.4}s +- {:.4}", timing.train_seconds_mean, timing.train_seconds_sd);
    println!("unlearning (100 steps): {:.4}s +- {:.4}", timing.unlearn_seconds_mean, timing.unlearn_seconds_sd);
    println!("speedup:                {:.1}x", timing.speedup);
    Ok(())
}

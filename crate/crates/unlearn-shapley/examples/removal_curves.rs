//! Remove players in value order and retrain: dropping the most valuable
//! data first degrades accuracy quickly, dropping the least valuable first
//! barely hurts (and helps when the data is noisy).

use unlearn_shapley::data::{flip_player_labels, generate_synthetic, partition, Granularity};
use unlearn_shapley::harness::{removal_curve, RemovalDirection};
use unlearn_shapley::model::{Activation, ModelSpec};
use unlearn_shapley::shapley::{make_unlearn_utility, mc_shapley, ConvergenceCriterion, UnlearnMode};
use unlearn_shapley::train::{train, TrainConfig};
use unlearn_shapley::unlearn::UnlearnConfig;

fn main() -> unlearn_shapley::Result<()> {
    let clean = generate_synthetic(240, 6, 2, 3.0, 71)?;
    let test = generate_synthetic(160, 6, 2, 3.0, 72)?;
    let spec = ModelSpec::new(6, vec![], 2, Activation::Relu)?;
    let part = partition(&clean, Granularity::Subset, 20, 73)?;
    // corrupt a quarter of the players so values genuinely differ
    let (data, _) = flip_player_labels(&clean, &part, 0.25, 74)?;

    let tcfg = TrainConfig { epochs: 5, learning_rate: 0.01, seed: 4, ..TrainConfig::default() };
    let (model_full, _) = train(&spec, &data, &tcfg)?;
    let ucfg = UnlearnConfig {
        steps: 30,
        learning_rate: 0.02,
        lambda1: 0.01,
        lambda2: 0.3,
        seed: 5,
        ..UnlearnConfig::default()
    };
    let utility =
        make_unlearn_utility(&model_full, &data, &part, &spec, &ucfg, &test, UnlearnMode::Approx)?;
    let values = mc_shapley(&utility, 20, &ConvergenceCriterion::fixed(10), 75)?.values;

    let fractions: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
    let high = removal_curve(
        &data, &part, &values, RemovalDirection::HighestFirst, &fractions, &spec, &tcfg, &test,
    )?;
    let low = removal_curve(
        &data, &part, &values, RemovalDirection::LowestFirst, &fractions, &spec, &tcfg, &test,
    )?;

    println!("removed  acc(best first)  acc(worst first)");
    for i in 0..fractions.len() {
        println!(
            "{:>6.0}%  {:>15.3}  {:>16.3}",
            fractions[i] * 100.0,
            high.test_accuracy[i],
            low.test_accuracy[i]
        );
    }
    Ok(())
}

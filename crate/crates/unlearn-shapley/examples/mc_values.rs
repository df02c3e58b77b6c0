//! Monte Carlo permutation sampling with the windowed convergence rule,
//! on a dataset far too large for exact enumeration.

use unlearn_shapley::data::{generate_synthetic, partition, Granularity};
use unlearn_shapley::model::{Activation, ModelSpec};
use unlearn_shapley::shapley::{make_retrain_utility, mc_shapley, ConvergenceCriterion};
use unlearn_shapley::train::TrainConfig;

fn main() -> unlearn_shapley::Result<()> {
    let data = generate_synthetic(120, 5, 2, 3.0, 3)?;
    let test = generate_synthetic(80, 5, 2, 3.0, 4)?;
    let spec = ModelSpec::new(5, vec![], 2, Activation::Relu)?;
    // ten subsets as players keeps each permutation cheap
    let part = partition(&data, Granularity::Subset, 10, 5)?;
    let tcfg = TrainConfig { epochs: 3, learning_rate: 0.02, seed: 11, ..TrainConfig::default() };

    let utility = make_retrain_utility(&data, &part, &spec, &tcfg, &test)?;
    let criterion = ConvergenceCriterion {
        max_permutations: 300,
        window: 25,
        mean_abs_change_threshold: 0.01,
        relative: true,
    };
    let result = mc_shapley(&utility, part.num_players(), &criterion, 42)?;

    println!(
        "converged: {} after {} permutations",
        result.converged, result.permutations_used
    );
    println!("\nplayer  points  value     variance");
    for i in 0..part.num_players() {
        println!(
            "{i:>6}  {:>6}  {:+.4}  {:.6}",
            part.players()[i].len(),
            result.values[i],
            result.running_variances[i]
        );
    }
    Ok(())
}

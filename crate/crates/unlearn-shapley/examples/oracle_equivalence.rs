//! With a perfect unlearner (retrain on the complement), the unlearning
//! utility yields the same Shapley values as retraining on each coalition,
//! even though the two utilities evaluate different models.

use unlearn_shapley::data::{generate_synthetic, partition, Granularity};
use unlearn_shapley::model::{Activation, ModelSpec};
use unlearn_shapley::shapley::{
    exact_shapley, make_retrain_utility, make_unlearn_utility, UnlearnMode,
};
use unlearn_shapley::train::{train, TrainConfig};
use unlearn_shapley::unlearn::UnlearnConfig;

fn main() -> unlearn_shapley::Result<()> {
    let data = generate_synthetic(150, 5, 2, 3.0, 21)?;
    let test = generate_synthetic(100, 5, 2, 3.0, 22)?;
    let spec = ModelSpec::new(5, vec![], 2, Activation::Relu)?;
    let part = partition(&data, Granularity::Subset, 4, 23)?;
    let tcfg = TrainConfig { epochs: 3, learning_rate: 0.01, seed: 6, ..TrainConfig::default() };

    let retrain = make_retrain_utility(&data, &part, &spec, &tcfg, &test)?;
    let phi_retrain = exact_shapley(&retrain, 4)?.values;

    let (model_full, _) = train(&spec, &data, &tcfg)?;
    let oracle = make_unlearn_utility(
        &model_full,
        &data,
        &part,
        &spec,
        &UnlearnConfig::default(),
        &test,
        UnlearnMode::Oracle(tcfg),
    )?;
    let phi_oracle = exact_shapley(&oracle, 4)?.values;

    println!("player  retrain     oracle-unlearn  |diff|");
    for i in 0..4 {
        println!(
            "{i:>6}  {:+.7}  {:+.7}      {:.2e}",
            phi_retrain[i],
            phi_oracle[i],
            (phi_retrain[i] - phi_oracle[i]).abs()
        );
    }
    Ok(())
}

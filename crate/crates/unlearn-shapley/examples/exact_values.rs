//! Exact Shapley values for a handful of training points, using the
//! retrain-from-scratch utility. Small enough to enumerate every coalition.

use unlearn_shapley::data::{generate_synthetic, partition, Granularity};
use unlearn_shapley::model::{Activation, ModelSpec};
use unlearn_shapley::shapley::{exact_shapley, make_retrain_utility};
use unlearn_shapley::train::TrainConfig;

fn main() -> unlearn_shapley::Result<()> {
    let data = generate_synthetic(8, 4, 2, 3.0, 1)?;
    let test = generate_synthetic(60, 4, 2, 3.0, 2)?;
    let spec = ModelSpec::new(4, vec![], 2, Activation::Relu)?;
    let part = partition(&data, Granularity::Point, data.len(), 0)?;
    let tcfg = TrainConfig { epochs: 5, learning_rate: 0.05, seed: 7, ..TrainConfig::default() };

    let utility = make_retrain_utility(&data, &part, &spec, &tcfg, &test)?;
    let result = exact_shapley(&utility, part.num_players())?;

    println!("point  label  value");
    for (i, v) in result.values.iter().enumerate() {
        println!("{i:>5}  {:>5}  {v:+.4}", data.label(i));
    }
    let sum: f64 = result.values.iter().sum();
    let v_full = utility.value(&(0..8).collect::<Vec<_>>())?;
    let v_empty = utility.value(&[])?;
    println!("\nsum of values      {sum:+.6}");
    println!("v(full) - v(empty) {:+.6}", v_full - v_empty);
    Ok(())
}

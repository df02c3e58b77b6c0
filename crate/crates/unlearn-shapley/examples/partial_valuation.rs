//! Value one subset without valuing everything: a two-player game between
//! the target subset and the rest, computed from a single pre-trained model
//! via unlearning. No full retrains over coalitions required.

use unlearn_shapley::data::{flip_labels, generate_synthetic, partition, Granularity};
use unlearn_shapley::model::{Activation, ModelSpec};
use unlearn_shapley::shapley::{exact_partial_reference, partial_value};
use unlearn_shapley::train::{train, TrainConfig};
use unlearn_shapley::unlearn::UnlearnConfig;

fn main() -> unlearn_shapley::Result<()> {
    let clean = generate_synthetic(200, 6, 2, 3.0, 81)?;
    let (data, _) = flip_labels(&clean, 0.3, 82)?;
    let test = generate_synthetic(150, 6, 2, 3.0, 83)?;
    let spec = ModelSpec::new(6, vec![], 2, Activation::Relu)?;
    let tcfg = TrainConfig { epochs: 5, learning_rate: 0.01, seed: 8, ..TrainConfig::default() };
    let ucfg = UnlearnConfig {
        steps: 30,
        learning_rate: 0.02,
        lambda1: 0.01,
        lambda2: 0.3,
        seed: 9,
        ..UnlearnConfig::default()
    };

    let (model_full, _) = train(&spec, &data, &tcfg)?;
    let part = partition(&data, Granularity::Subset, 10, 84)?;

    println!("subset  phi(unlearn)  phi(exact 2-player)");
    for s in 0..4 {
        let tgt_indices = &part.players()[s];
        let d_tgt = data.select(tgt_indices)?;
        let (phi, components) =
            partial_value(&model_full, &spec, &d_tgt, &test, &tcfg, &ucfg)?;
        let tgt_ids: Vec<u64> = tgt_indices.iter().map(|&i| data.ids()[i]).collect();
        let reference = exact_partial_reference(&data, &tgt_ids, &spec, &tcfg, &test, false)?;
        println!("{s:>6}  {phi:+.4}       {reference:+.4}");
        if s == 0 {
            println!(
                "        components: v(tgt) {:+.4}, v(remain) {:+.4}, v(full) {:+.4}",
                components.v_tgt, components.v_remain, components.v_full
            );
        }
    }
    Ok(())
}

//! The non-unlearning valuation baselines side by side: KNN Shapley,
//! Beta Shapley, and gradient-alignment influence scores, with their rank
//! agreement against exact retrain Shapley.

use unlearn_shapley::audit::spearman;
use unlearn_shapley::baselines::{beta_shapley, influence_scores, knn_shapley, BetaParams};
use unlearn_shapley::data::{generate_synthetic, partition, Granularity};
use unlearn_shapley::model::{Activation, ModelSpec};
use unlearn_shapley::shapley::{exact_shapley, make_retrain_utility};
use unlearn_shapley::train::{train, TrainConfig};

fn main() -> unlearn_shapley::Result<()> {
    let n = 10;
    let data = generate_synthetic(n, 4, 2, 2.5, 43)?;
    let test = generate_synthetic(80, 4, 2, 2.5, 42)?;
    let spec = ModelSpec::new(4, vec![], 2, Activation::Relu)?;
    let part = partition(&data, Granularity::Point, n, 0)?;
    let tcfg = TrainConfig { epochs: 5, learning_rate: 0.05, seed: 2, ..TrainConfig::default() };

    let utility = make_retrain_utility(&data, &part, &spec, &tcfg, &test)?;
    let exact = exact_shapley(&utility, n)?.values;

    let knn = knn_shapley(&data, &test, 3)?;
    let beta = beta_shapley(&utility, n, &BetaParams::new(16.0, 1.0)?, 400, 9)?.values;
    let (model, _) = train(&spec, &data, &tcfg)?;
    let influence = influence_scores(&model, &spec, &data, &test)?.scores;

    println!("point  exact     knn       beta(16,1)  influence");
    for i in 0..n {
        println!(
            "{i:>5}  {:+.4}  {:+.4}  {:+.4}    {:+.4}",
            exact[i], knn[i], beta[i], influence[i]
        );
    }
    println!("\nrank correlation with exact retrain Shapley:");
    println!("  knn        {:+.3}", spearman(&knn, &exact)?);
    println!("  beta(16,1) {:+.3}", spearman(&beta, &exact)?);
    println!("  influence  {:+.3}", spearman(&influence, &exact)?);
    Ok(())
}

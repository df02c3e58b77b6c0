//! How close is approximate unlearning to the retrained-from-scratch
//! model it imitates? Logit divergence, logit MSE, and the knowledge
//! retention ratio on the forgotten data.
//!
//! Retention near 1.0 for a randomly chosen forget set is expected: the
//! remaining data covers the same regions, so both the unlearned and the
//! retrained model still classify the forgotten points correctly. Contrast
//! with `unlearning_demo`, which forgets an entire class.

use unlearn_shapley::audit::{kr, lkd, lmse};
use unlearn_shapley::data::{generate_synthetic, partition, Granularity};
use unlearn_shapley::model::{init_params, Activation, ModelSpec};
use unlearn_shapley::train::{train, TrainConfig};
use unlearn_shapley::unlearn::{oracle_unlearn, unlearn, UnlearnConfig};

fn main() -> unlearn_shapley::Result<()> {
    let spec = ModelSpec::new(6, vec![], 2, Activation::Relu)?;
    let data = generate_synthetic(240, 6, 2, 3.0, 91)?;
    let test = generate_synthetic(160, 6, 2, 3.0, 92)?;
    let tcfg = TrainConfig { learning_rate: 0.01, seed: 10, ..TrainConfig::default() };

    let part = partition(&data, Granularity::Subset, 8, 93)?;
    let forget_indices = &part.players()[0];
    let forget = data.select(forget_indices)?;
    let remain = data.select(&data.complement_indices(forget_indices))?;
    let forget_ids: Vec<u64> = forget_indices.iter().map(|&i| data.ids()[i]).collect();

    let (model_full, _) = train(&spec, &data, &tcfg)?;
    let ucfg = UnlearnConfig {
        steps: 50,
        learning_rate: 0.02,
        lambda1: 0.01,
        lambda2: 0.3,
        seed: 11,
        ..UnlearnConfig::default()
    };
    let (m_unlearn, _) = unlearn(&model_full, &spec, &forget, &test, &ucfg)?;
    let m_retrain = oracle_unlearn(&data, &forget_ids, &spec, &tcfg)?;
    let m_random = init_params(&spec, tcfg.seed);

    println!("forgetting {} of {} points\n", forget.len(), data.len());
    println!("lkd  (mean logit KL vs retrained)  {:.6}", lkd(&m_unlearn, &m_retrain, &spec, &remain)?);
    println!("lmse (mean logit MSE vs retrained) {:.6}", lmse(&m_unlearn, &m_retrain, &spec, &remain)?);
    let retention = kr(&m_unlearn, &model_full, &m_random, &spec, &forget)?;
    println!("kr   (knowledge retention)         {:.3} (raw {:+.3})", retention.clipped, retention.raw);
    Ok(())
}

//! Forget one class from a trained model by gradient ascent and watch
//! per-class accuracy: the forgotten class collapses, the rest survives.

use unlearn_shapley::data::generate_synthetic;
use unlearn_shapley::model::{evaluate_accuracy, Activation, ModelSpec};
use unlearn_shapley::train::{train, TrainConfig};
use unlearn_shapley::unlearn::{unlearn, UnlearnConfig};

fn main() -> unlearn_shapley::Result<()> {
    let spec = ModelSpec::new(6, vec![], 2, Activation::Relu)?;
    let data = generate_synthetic(300, 6, 2, 3.0, 31)?;
    let test = generate_synthetic(200, 6, 2, 3.0, 32)?;

    let tcfg = TrainConfig { learning_rate: 0.01, seed: 1, ..TrainConfig::default() };
    let (model, log) = train(&spec, &data, &tcfg)?;
    println!("trained {} epochs, final train accuracy {:.3}", log.epoch_loss.len(), log.final_train_accuracy);

    let class0: Vec<usize> = (0..data.len()).filter(|&i| data.label(i) == 0).collect();
    let forget = data.select(&class0)?;
    let ucfg = UnlearnConfig {
        learning_rate: 0.02,
        lambda1: 0.01,
        lambda2: 0.3,
        seed: 1,
        ..UnlearnConfig::default()
    };
    let (unlearned, _) = unlearn(&model, &spec, &forget, &test, &ucfg)?;

    for class in 0..2 {
        let idx: Vec<usize> = (0..test.len()).filter(|&i| test.label(i) == class).collect();
        let subset = test.select(&idx)?;
        let before = evaluate_accuracy(&model, &spec, &subset)?;
        let after = evaluate_accuracy(&unlearned, &spec, &subset)?;
        let tag = if class == 0 { "(forgotten)" } else { "(kept)     " };
        println!("class {class} {tag} accuracy {before:.3} -> {after:.3}");
    }
    Ok(())
}

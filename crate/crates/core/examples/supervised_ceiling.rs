//! Train the same MLP on gold labels with BCE. On planted-truth data this is
//! the ceiling an unsupervised verifier can be measured against.

use latent_verifier::synthetic::{generate, oracle_supervised_ceiling, split_holdout, verifier_metrics, SyntheticSpec};
use latent_verifier::*;

fn main() -> Result<()> {
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        max_steps: 500,
        hidden1: 32,
        hidden2: 16,
        ..TrainConfig::default()
    };
    for noise in [0.25, 0.5, 1.0, 2.0] {
        let data = generate(&SyntheticSpec {
            questions: 500,
            dim: 32,
            noise_std: noise,
            ..SyntheticSpec::default()
        })?;
        let (train_set, holdout) = split_holdout(&data, 150);
        let ceiling = oracle_supervised_ceiling(&train_set, &holdout, &cfg)?;
        let unsup = verifier_metrics(&train(&train_set, &cfg)?.verifier, &holdout, Strategy::Sum)?.accuracy;
        println!("noise {noise:.2}: supervised {ceiling:.3}  unsupervised {unsup:.3}");
    }
    Ok(())
}

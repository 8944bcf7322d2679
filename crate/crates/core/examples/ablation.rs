//! Drop one consistency term at a time and see what the verifier loses.
//!
//! Without the inter-group term nothing ties "true" to the gold answer, so the
//! learned direction can come out flipped depending on the seed.

use latent_verifier::synthetic::{generate, split_holdout, verifier_metrics, SyntheticSpec};
use latent_verifier::*;

fn main() -> Result<()> {
    let data = generate(&SyntheticSpec {
        questions: 500,
        dim: 32,
        ..SyntheticSpec::default()
    })?;
    let (train_set, holdout) = split_holdout(&data, 150);
    let base = TrainConfig {
        learning_rate: 1e-3,
        max_steps: 500,
        hidden1: 32,
        hidden2: 16,
        ..TrainConfig::default()
    };
    let variants = [
        ("full", base.clone()),
        ("w/o nega", TrainConfig { w_nega: 0.0, ..base.clone() }),
        ("w/o intra", TrainConfig { w_intra: 0.0, ..base.clone() }),
        ("w/o inter", TrainConfig { w_inter: 0.0, ..base.clone() }),
    ];
    for (name, cfg) in variants {
        let accs: Vec<String> = (0..3)
            .map(|seed| {
                let report = train(&train_set, &TrainConfig { rng_seed: seed, ..cfg.clone() })?;
                Ok(format!("{:.3}", verifier_metrics(&report.verifier, &holdout, Strategy::Sum)?.accuracy))
            })
            .collect::<Result<_>>()?;
        println!("{name:<10} sum accuracy by seed: {}", accs.join(" "));
    }
    Ok(())
}

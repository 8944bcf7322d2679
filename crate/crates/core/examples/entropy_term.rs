//! The inter-group "sum to one" term alone is satisfied by spreading belief
//! evenly over the groups. Adding the entropy term makes the verifier commit.

use latent_verifier::synthetic::{generate, mean_normalized_group_entropy, split_holdout, SyntheticSpec};
use latent_verifier::*;

fn main() -> Result<()> {
    let data = generate(&SyntheticSpec {
        questions: 400,
        dim: 32,
        ..SyntheticSpec::default()
    })?;
    let (train_set, holdout) = split_holdout(&data, 100);
    for entropy in [false, true] {
        let report = train(
            &train_set,
            &TrainConfig {
                learning_rate: 1e-4,
                max_steps: 1000,
                hidden1: 32,
                hidden2: 16,
                w_nega: 0.0,
                w_intra: 0.0,
                inter_entropy: entropy,
                ..TrainConfig::default()
            },
        )?;
        // 1.0 means uniform over groups, 0.0 means all mass on one group.
        let h = mean_normalized_group_entropy(&report.verifier, &holdout)?;
        println!("entropy term {entropy}: normalized group entropy {h:.3}");
    }
    Ok(())
}

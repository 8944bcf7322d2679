//! Every positive assertion shares the "true" template and every negative one
//! the "false" template, so raw activations carry a large constant offset
//! between the two. Centering each template separately removes it.

use latent_verifier::synthetic::{generate, split_holdout, verifier_metrics, SyntheticSpec};
use latent_verifier::*;

fn main() -> Result<()> {
    let data = generate(&SyntheticSpec {
        questions: 500,
        dim: 32,
        template_offset_norm: 20.0,
        ..SyntheticSpec::default()
    })?;
    let (train_set, holdout) = split_holdout(&data, 150);
    for mode in [NormalizationMode::None, NormalizationMode::PerTemplateCenterScale] {
        let report = train(
            &train_set,
            &TrainConfig {
                learning_rate: 1e-3,
                max_steps: 500,
                hidden1: 32,
                hidden2: 16,
                normalization: mode,
                ..TrainConfig::default()
            },
        )?;
        let scores: Vec<PathScore> = holdout.iter().map(|q| report.verifier.score(q)).collect::<Result<Vec<_>>>()?.concat();
        let mean = |f: fn(&PathScore) -> f64| scores.iter().map(f).sum::<f64>() / scores.len() as f64;
        println!(
            "{mode:?}: mean p+ {:.3}  mean p- {:.3}  sum accuracy {:.3}",
            mean(|s| s.p_pos),
            mean(|s| s.p_neg),
            verifier_metrics(&report.verifier, &holdout, Strategy::Sum)?.accuracy
        );
    }
    Ok(())
}

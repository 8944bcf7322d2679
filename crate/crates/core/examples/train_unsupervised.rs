//! Train the verifier without labels and compare it to majority voting on
//! held-out questions.

use latent_verifier::synthetic::{generate, split_holdout, verifier_metrics, SyntheticSpec};
use latent_verifier::*;

fn main() -> Result<()> {
    let data = generate(&SyntheticSpec {
        questions: 600,
        dim: 32,
        minority_correct_rate: 0.4,
        ..SyntheticSpec::default()
    })?;
    let (train_set, holdout) = split_holdout(&data, 200);

    let cfg = TrainConfig {
        learning_rate: 1e-3,
        max_steps: 600,
        hidden1: 32,
        hidden2: 16,
        ..TrainConfig::default()
    };
    let report = train(&train_set, &cfg)?;
    for l in report.losses.iter().step_by(100) {
        println!("step {:>4}  total {:.4}  nega {:.4}  intra {:.4}  inter {:.4}", l.step, l.total, l.nega, l.intra, l.inter);
    }
    println!("trained in {:.1}s", report.wall_clock_secs);

    let voting: Vec<_> = holdout.iter().map(|q| (majority_vote(q), q.gold_answer().unwrap().to_string())).collect();
    println!("voting        {:.3}", evaluate(&voting).accuracy);
    for s in [Strategy::Max, Strategy::Sum] {
        println!("verifier {:<4} {:.3}", format!("{s:?}").to_lowercase(), verifier_metrics(&report.verifier, &holdout, s)?.accuracy);
    }
    Ok(())
}

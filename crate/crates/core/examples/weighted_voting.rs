//! When the right answer is often held by a minority of paths, plain voting is
//! capped. Verifier-weighted voting (sum of path scores per group) can recover
//! those questions.

use latent_verifier::synthetic::{generate, split_holdout, verifier_metrics, SyntheticSpec};
use latent_verifier::inference::is_correct;
use latent_verifier::*;

fn main() -> Result<()> {
    let data = generate(&SyntheticSpec {
        questions: 800,
        dim: 32,
        minority_correct_rate: 0.5,
        ..SyntheticSpec::default()
    })?;
    let (train_set, holdout) = split_holdout(&data, 300);
    let report = train(
        &train_set,
        &TrainConfig {
            learning_rate: 1e-3,
            max_steps: 800,
            hidden1: 32,
            hidden2: 16,
            ..TrainConfig::default()
        },
    )?;

    let mut minority = (0, 0, 0);
    for q in &holdout {
        let gold = q.gold_answer().unwrap();
        let vote = majority_vote(q);
        if is_correct(&vote, gold) {
            continue;
        }
        minority.0 += 1;
        let weighted = select_answer(&report.verifier.score(q)?, q, Strategy::Sum)?;
        if is_correct(&weighted, gold) {
            minority.1 += 1;
        }
        if weighted.chosen_answer != vote.chosen_answer {
            minority.2 += 1;
        }
    }
    let voting: Vec<_> = holdout.iter().map(|q| (majority_vote(q), q.gold_answer().unwrap().to_string())).collect();
    println!("voting accuracy          {:.3}", evaluate(&voting).accuracy);
    println!("weighted voting accuracy {:.3}", verifier_metrics(&report.verifier, &holdout, Strategy::Sum)?.accuracy);
    println!("questions voting gets wrong: {}, weighted voting fixes {}", minority.0, minority.1);
    Ok(())
}

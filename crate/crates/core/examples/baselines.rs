//! The label-free selection baselines side by side: majority voting, greedy
//! (first path) and CoT-decoding confidence with max and sum aggregation.

use latent_verifier::synthetic::{generate, SyntheticSpec};
use latent_verifier::*;

fn main() -> Result<()> {
    for signal in [0.0, 0.2, 0.6] {
        let data = generate(&SyntheticSpec {
            questions: 500,
            dim: 8,
            confidence_signal: signal,
            minority_correct_rate: 0.4,
            ..SyntheticSpec::default()
        })?;
        let score = |pick: &dyn Fn(&QuestionInstance) -> Result<SelectionResult>| -> Result<f64> {
            let rows = data
                .iter()
                .map(|q| Ok((pick(q)?, q.gold_answer().unwrap().to_string())))
                .collect::<Result<Vec<_>>>()?;
            Ok(evaluate(&rows).accuracy)
        };
        println!(
            "confidence signal {signal:.1}: voting {:.3}  greedy {:.3}  cot_max {:.3}  cot_sum {:.3}",
            score(&|q| Ok(majority_vote(q)))?,
            score(&|q| Ok(greedy_select(q)))?,
            score(&|q| cot_decoding_select(q, Strategy::Max))?,
            score(&|q| cot_decoding_select(q, Strategy::Sum))?,
        );
    }
    Ok(())
}

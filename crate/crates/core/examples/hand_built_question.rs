//! Build one question by hand, group its paths by answer and pick an answer
//! with a (randomly initialized) verifier, majority voting and CoT-decoding.

use latent_verifier::*;

fn features(values: &[f32]) -> FeatureVector {
    FeatureVector::new(values.to_vec()).unwrap()
}

fn main() -> Result<()> {
    // Five sampled paths. Raw answers are normalized, so "1,200." and "1200"
    // land in the same group and an empty answer becomes NO_ANSWER.
    let raw = [
        ("1200", [0.9, 0.1, 0.0], 0.62),
        ("1,200.", [0.8, 0.2, 0.1], 0.55),
        ("1100", [0.1, 0.7, 0.3], 0.20),
        ("", [0.0, 0.0, 0.9], 0.05),
        ("1100", [0.2, 0.8, 0.2], 0.31),
    ];
    let mut pairs = Vec::new();
    for (i, (answer, x, conf)) in raw.iter().enumerate() {
        let neg: Vec<f32> = x.iter().map(|v| -v).collect();
        let pair = AssertionPair::new("q-demo", i, features(x), features(&neg), normalize_answer(answer))?
            .with_confidence(*conf)?;
        pairs.push(pair);
    }
    let question = group_by_answer(pairs)?.with_gold_answer("1200");

    println!("{} paths in {} groups:", question.num_paths(), question.num_groups());
    for g in question.groups() {
        println!("  {:<10} paths {:?}", g.answer.to_string(), g.members);
    }

    let model = VerifierModel::init(3, 8, 4, 7)?;
    let scores = score_paths(&model, &question)?;
    for s in &scores {
        println!("path {}  p+ {:.3}  p- {:.3}  score {:.3}", s.path_index, s.p_pos, s.p_neg, s.score);
    }

    let picks = [
        select_answer(&scores, &question, Strategy::Max)?,
        select_answer(&scores, &question, Strategy::Sum)?,
        majority_vote(&question),
        cot_decoding_select(&question, Strategy::Sum)?,
        greedy_select(&question),
    ];
    for r in &picks {
        println!("{:<13} -> {}", r.method.name(), r.chosen_answer);
    }
    Ok(())
}

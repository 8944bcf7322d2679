//! Why negation consistency needs both of its parts. Gradient descent on free
//! pair probabilities under each term alone:
//!
//! - the sum-to-one term is met anywhere on p+ + p- = 1, including the
//!   uninformative (0.5, 0.5) that a symmetric pair slides to;
//! - the confidence term drives both probabilities of a pair to zero;
//! - together they push each pair to (1, 0) or (0, 1).

use latent_verifier::losses::*;
use latent_verifier::*;

fn descend(start: &[(f64, f64)], loss: fn(&QuestionProbs) -> LossValue) -> Result<Vec<(f64, f64)>> {
    let (mut pos, mut neg): (Vec<f64>, Vec<f64>) = start.iter().copied().unzip();
    let n = pos.len();
    for _ in 0..20_000 {
        let probs = QuestionProbs::new(pos.clone(), neg.clone(), vec![(0..n).collect()], vec![0])?;
        let l = loss(&probs);
        for i in 0..n {
            pos[i] = (pos[i] - 0.01 * l.d_pos[i]).clamp(1e-9, 1.0 - 1e-9);
            neg[i] = (neg[i] - 0.01 * l.d_neg[i]).clamp(1e-9, 1.0 - 1e-9);
        }
    }
    Ok(pos.into_iter().zip(neg).collect())
}

fn main() -> Result<()> {
    let start = [(0.9, 0.9), (0.3, 0.1), (0.6, 0.55), (0.2, 0.7)];
    for (name, loss) in [
        ("sum only", loss_sum as fn(&QuestionProbs) -> LossValue),
        ("diff only", loss_diff),
        ("nega", loss_nega),
    ] {
        let end = descend(&start, loss)?;
        let shown: Vec<String> = end.iter().map(|(p, q)| format!("({p:.3}, {q:.3})")).collect();
        println!("{name:<10} {}", shown.join(" "));
    }
    Ok(())
}

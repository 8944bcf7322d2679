//! Evaluate each consistency loss on a tiny hand-written question and print
//! the values and gradients with respect to the path probabilities.

use latent_verifier::losses::*;
use latent_verifier::*;

fn show(name: &str, l: &LossValue) {
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:+.3}")).collect::<Vec<_>>().join(" ");
    println!("{name:<12} {:.4}   dL/dp+ [{}]   dL/dp- [{}]", l.value, fmt(&l.d_pos), fmt(&l.d_neg));
}

fn main() -> Result<()> {
    // Four paths: paths 0 and 1 share an answer, 2 and 3 are singletons.
    let pos = vec![0.8, 0.6, 0.3, 0.4];
    let neg = vec![0.1, 0.5, 0.6, 0.7];
    let groups = vec![vec![0, 1], vec![2], vec![3]];
    let probs = QuestionProbs::new(pos, neg, groups, vec![0, 2, 3])?;

    show("sum", &loss_sum(&probs));
    show("diff", &loss_diff(&probs));
    show("nega", &loss_nega(&probs));
    show("intra", &loss_intra(&probs));
    show("inter_sum", &loss_inter_sum(&probs));
    show("inter_ent", &loss_inter_entropy(&probs)?);
    show("inter_soft", &loss_inter_soft(&probs)?);
    show("inter_tnorm", &loss_inter_tnorm(&probs));
    show("bce", &loss_supervised_bce(&probs, &[true, true, false, false])?);

    let total = total_loss(&probs, &TrainConfig::default())?;
    println!("weighted total {:.4}", total.total.value);
    Ok(())
}

//! Consistency objectives over the verifier probabilities of one question.
//!
//! Every loss returns its scalar value together with `dL/dp` for each
//! positive and negative assertion probability. Chaining these through
//! [`VerifierModel::accumulate_grad`](crate::model::VerifierModel::accumulate_grad)
//! gives parameter gradients.

use rand::Rng;

use crate::error::{Error, Result};
use crate::types::{InterVariant, QuestionInstance, TrainConfig};

/// Probabilities entering a logarithm or the entropy are clamped to
/// `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-7;

/// Verifier outputs for the N paths of one question.
#[derive(Clone, Debug, PartialEq)]
pub struct QuestionProbs {
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
    pub groups: Vec<Vec<usize>>,
    /// One path index per group, `representatives[k]` in `groups[k]`.
    pub representatives: Vec<usize>,
}

impl QuestionProbs {
    /// Build from explicit parts, checking the invariants.
    pub fn new(pos: Vec<f64>, neg: Vec<f64>, groups: Vec<Vec<usize>>, representatives: Vec<usize>) -> Result<Self> {
        let n = pos.len();
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if neg.len() != n {
            return bad(format!("{} positive vs {} negative probabilities", n, neg.len()));
        }
        if pos.iter().chain(&neg).any(|p| !(*p > 0.0 && *p < 1.0)) {
            return bad("probabilities must lie strictly inside (0, 1)".into());
        }
        if representatives.len() != groups.len() {
            return bad("one representative per group required".into());
        }
        let mut seen = vec![false; n];
        for (g, &r) in groups.iter().zip(&representatives) {
            if g.is_empty() || !g.contains(&r) {
                return bad(format!("representative {r} is not in its group"));
            }
            for &i in g {
                if i >= n || seen[i] {
                    return bad("groups must partition the paths".into());
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("groups must partition the paths".into());
        }
        Ok(QuestionProbs {
            pos,
            neg,
            groups,
            representatives,
        })
    }

    /// Groups of `instance` with the first member of each group as
    /// representative.
    pub fn from_instance(instance: &QuestionInstance, pos: Vec<f64>, neg: Vec<f64>) -> Result<Self> {
        let groups: Vec<Vec<usize>> = instance.groups().iter().map(|g| g.members.clone()).collect();
        let reps = groups.iter().map(|g| g[0]).collect();
        Self::new(pos, neg, groups, reps)
    }

    /// Redraw one representative per group uniformly at random.
    pub fn resample_representatives<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (g, r) in self.groups.iter().zip(self.representatives.iter_mut()) {
            *r = g[rng.random_range(0..g.len())];
        }
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    fn representative_probs(&self) -> Vec<f64> {
        self.representatives.iter().map(|&a| self.pos[a]).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
}

impl LossValue {
    fn zero(n: usize) -> Self {
        LossValue {
            value: 0.0,
            d_pos: vec![0.0; n],
            d_neg: vec![0.0; n],
        }
    }

    fn add_scaled(&mut self, other: &LossValue, w: f64) {
        self.value += w * other.value;
        for (a, b) in self.d_pos.iter_mut().zip(&other.d_pos) {
            *a += w * b;
        }
        for (a, b) in self.d_neg.iter_mut().zip(&other.d_neg) {
            *a += w * b;
        }
    }
}

fn clamp_prob(p: f64) -> (f64, f64) {
    if p < PROB_FLOOR {
        (PROB_FLOOR, 0.0)
    } else if p > 1.0 - PROB_FLOOR {
        (1.0 - PROB_FLOOR, 0.0)
    } else {
        (p, 1.0)
    }
}

/// Sum-to-one part of negation consistency: `sum_i (p_i+ + p_i- - 1)^2`.
pub fn loss_sum(probs: &QuestionProbs) -> LossValue {
    let mut out = LossValue::zero(probs.len());
    for i in 0..probs.len() {
        let r = probs.pos[i] + probs.neg[i] - 1.0;
        out.value += r * r;
        out.d_pos[i] = 2.0 * r;
        out.d_neg[i] = 2.0 * r;
    }
    out
}

/// Excluded-middle part: `sum_i min(p_i+, p_i-)^2`. On a tie the gradient
/// goes to the positive term.
pub fn loss_diff(probs: &QuestionProbs) -> LossValue {
    let mut out = LossValue::zero(probs.len());
    for i in 0..probs.len() {
        let (p, q) = (probs.pos[i], probs.neg[i]);
        if p <= q {
            out.value += p * p;
            out.d_pos[i] = 2.0 * p;
        } else {
            out.value += q * q;
            out.d_neg[i] = 2.0 * q;
        }
    }
    out
}

pub fn loss_nega(probs: &QuestionProbs) -> LossValue {
    let mut out = loss_sum(probs);
    out.add_scaled(&loss_diff(probs), 1.0);
    out
}

/// Squared disagreement over all ordered pairs inside each answer group,
/// for positive and negative probabilities separately.
pub fn loss_intra(probs: &QuestionProbs) -> LossValue {
    let mut out = LossValue::zero(probs.len());
    for g in &probs.groups {
        let n = g.len() as f64;
        for (values, grads) in [(&probs.pos, &mut out.d_pos), (&probs.neg, &mut out.d_neg)] {
            // sum_{i,j} (p_i - p_j)^2 = 2n sum_i (p_i - mean)^2
            let mean = g.iter().map(|&i| values[i]).sum::<f64>() / n;
            for &i in g {
                let c = values[i] - mean;
                out.value += 2.0 * n * c * c;
                grads[i] = 4.0 * n * c;
            }
        }
    }
    out
}

/// `(sum_k q_k - 1)^2` over representative probabilities `q_k`.
pub fn loss_inter_sum(probs: &QuestionProbs) -> LossValue {
    let mut out = LossValue::zero(probs.len());
    let r = probs.representative_probs().iter().sum::<f64>() - 1.0;
    out.value = r * r;
    for &a in &probs.representatives {
        out.d_pos[a] += 2.0 * r;
    }
    out
}

/// Shannon entropy (nats) of `q_k / sum_j q_j` over representatives.
pub fn loss_inter_entropy(probs: &QuestionProbs) -> Result<LossValue> {
    let mut out = LossValue::zero(probs.len());
    let clamped: Vec<(f64, f64)> = probs.representative_probs().into_iter().map(clamp_prob).collect();
    let total: f64 = clamped.iter().map(|c| c.0).sum();
    if !(total >= PROB_FLOOR) {
        return Err(Error::DegenerateDistribution(total));
    }
    let logs: Vec<f64> = clamped.iter().map(|(q, _)| (q / total).ln()).collect();
    let entropy: f64 = -clamped.iter().zip(&logs).map(|((q, _), l)| q / total * l).sum::<f64>();
    out.value = entropy;
    // dH/dq_k = -(ln phat_k + H) / S
    for ((&a, (_, pass)), l) in probs.representatives.iter().zip(&clamped).zip(&logs) {
        out.d_pos[a] += -(l + entropy) / total * pass;
    }
    Ok(out)
}

pub fn loss_inter_soft(probs: &QuestionProbs) -> Result<LossValue> {
    let mut out = loss_inter_sum(probs);
    out.add_scaled(&loss_inter_entropy(probs)?, 1.0);
    Ok(out)
}

/// Product t-norm relaxation of "exactly one representative is true":
/// `1 - truth(OR_k (z_k AND NOT z_j for j != k))`.
pub fn loss_inter_tnorm(probs: &QuestionProbs) -> LossValue {
    let mut out = LossValue::zero(probs.len());
    let q = probs.representative_probs();
    let m = q.len();
    let prod_except = |skip: &[usize]| -> f64 {
        (0..m).filter(|j| !skip.contains(j)).map(|j| 1.0 - q[j]).product()
    };
    let disjuncts: Vec<f64> = (0..m).map(|k| q[k] * prod_except(&[k])).collect();
    let truth = disjuncts.iter().fold(0.0, |acc, &d| acc + d - acc * d);
    out.value = 1.0 - truth;

    // truth = 1 - prod_k (1 - d_k), so d truth / d d_k = prod_{l != k} (1 - d_l).
    let d_truth: Vec<f64> = (0..m)
        .map(|k| (0..m).filter(|&l| l != k).map(|l| 1.0 - disjuncts[l]).product())
        .collect();
    for j in 0..m {
        let mut dq = 0.0;
        for k in 0..m {
            let dd = if k == j { prod_except(&[k]) } else { -q[k] * prod_except(&[k, j]) };
            dq += d_truth[k] * dd;
        }
        out.d_pos[probs.representatives[j]] -= dq;
    }
    out
}

/// Supervised baseline: BCE on positive assertions with label `y`, on
/// negative assertions with label `1 - y`.
pub fn loss_supervised_bce(probs: &QuestionProbs, labels: &[bool]) -> Result<LossValue> {
    if labels.len() != probs.len() {
        return Err(Error::MissingLabels(format!(
            "{} labels for {} paths",
            labels.len(),
            probs.len()
        )));
    }
    let mut out = LossValue::zero(probs.len());
    let term = |p: f64, y: bool| -> (f64, f64) {
        let (c, pass) = clamp_prob(p);
        if y {
            (-c.ln(), -pass / c)
        } else {
            (-(1.0 - c).ln(), pass / (1.0 - c))
        }
    };
    for (i, &y) in labels.iter().enumerate() {
        let (lp, gp) = term(probs.pos[i], y);
        let (ln, gn) = term(probs.neg[i], !y);
        out.value += lp + ln;
        out.d_pos[i] = gp;
        out.d_neg[i] = gn;
    }
    Ok(out)
}

/// Weighted objective with its components (unweighted) for logging.
#[derive(Clone, Debug, PartialEq)]
pub struct TotalLoss {
    pub total: LossValue,
    pub nega: f64,
    pub intra: f64,
    pub inter: f64,
}

/// `w_nega * L_nega + w_intra * L_intra + w_inter * L_inter`. Terms with a
/// zero weight are not evaluated at all.
pub fn total_loss(probs: &QuestionProbs, config: &TrainConfig) -> Result<TotalLoss> {
    let mut total = LossValue::zero(probs.len());
    let (mut nega, mut intra, mut inter) = (0.0, 0.0, 0.0);
    if config.w_nega != 0.0 {
        let l = loss_nega(probs);
        nega = l.value;
        total.add_scaled(&l, config.w_nega);
    }
    if config.w_intra != 0.0 {
        let l = loss_intra(probs);
        intra = l.value;
        total.add_scaled(&l, config.w_intra);
    }
    if config.w_inter != 0.0 {
        let l = match (config.inter_variant, config.inter_entropy) {
            (InterVariant::SoftProb, true) => loss_inter_soft(probs)?,
            (InterVariant::SoftProb, false) => loss_inter_sum(probs),
            (InterVariant::TNorm, _) => loss_inter_tnorm(probs),
        };
        inter = l.value;
        total.add_scaled(&l, config.w_inter);
    }
    Ok(TotalLoss {
        total,
        nega,
        intra,
        inter,
    })
}

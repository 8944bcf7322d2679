//! Synthetic activation datasets with a planted truth direction.
//!
//! Path `i` with truth bit `y` (1 iff it belongs to the gold group) gets
//!
//! ```text
//! pos = offset + (2y - 1) v + noise
//! neg = -offset - (2y - 1) v + noise'
//! ```
//!
//! where `v` is a fixed random direction of norm `truth_direction_norm` and
//! `offset` is a fixed random direction of norm `template_offset_norm`
//! standing in for the constant contribution of the template tokens.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::answer::AnswerKey;
use crate::error::{Error, Result};
use crate::inference::{evaluate, select_answer, Metrics, Strategy};
use crate::trainer::{train_supervised, TrainedVerifier};
use crate::types::{group_by_answer, AssertionPair, FeatureVector, QuestionInstance, TrainConfig};

/// How paths of one question split into answer groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupLayout {
    pub min_groups: usize,
    pub max_groups: usize,
    /// Equal-as-possible group sizes with a uniformly chosen gold group.
    /// Otherwise sizes are random and `minority_correct_rate` decides whether
    /// the gold group is the (unique) largest one.
    pub balanced: bool,
}

impl Default for GroupLayout {
    fn default() -> Self {
        GroupLayout {
            min_groups: 2,
            max_groups: 5,
            balanced: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub dim: usize,
    pub questions: usize,
    pub paths: usize,
    pub truth_direction_norm: f64,
    pub noise_std: f64,
    pub template_offset_norm: f64,
    pub groups: GroupLayout,
    /// Fraction of questions whose gold group is not the largest group.
    pub minority_correct_rate: f64,
    /// Mean gap between CoT-decoding confidences of correct and incorrect
    /// paths.
    pub confidence_signal: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            dim: 64,
            questions: 1000,
            paths: 10,
            truth_direction_norm: 1.0,
            noise_std: 0.5,
            template_offset_norm: 4.0,
            groups: GroupLayout::default(),
            minority_correct_rate: 0.3,
            confidence_signal: 0.2,
            rng_seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSpec(msg.to_string()));
        if self.dim < 2 {
            return bad("dim must be >= 2");
        }
        if self.paths < 2 {
            return bad("paths must be >= 2");
        }
        if self.questions == 0 {
            return bad("questions must be >= 1");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be finite and >= 0");
        }
        if !(self.truth_direction_norm >= 0.0 && self.truth_direction_norm.is_finite()) {
            return bad("truth_direction_norm must be finite and >= 0");
        }
        if !(self.template_offset_norm >= 0.0 && self.template_offset_norm.is_finite()) {
            return bad("template_offset_norm must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.minority_correct_rate) {
            return bad("minority_correct_rate must lie in [0, 1]");
        }
        if !(self.confidence_signal >= 0.0 && self.confidence_signal <= 1.0) {
            return bad("confidence_signal must lie in [0, 1]");
        }
        let g = &self.groups;
        if g.min_groups < 1 || g.min_groups > g.max_groups || g.max_groups > self.paths {
            return bad("group counts must satisfy 1 <= min_groups <= max_groups <= paths");
        }
        if !g.balanced && self.minority_correct_rate > 0.0 && (g.max_groups < 2 || self.paths < 3) {
            return bad("a minority gold group needs at least two groups and three paths");
        }
        if !g.balanced && g.min_groups >= 2 && g.min_groups >= self.paths {
            return bad("a unique majority needs min_groups < paths");
        }
        Ok(())
    }
}

fn random_direction(rng: &mut ChaCha8Rng, dim: usize, norm: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / len * norm).collect()
}

/// Group sizes and gold group index for one question.
fn draw_layout(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> (Vec<usize>, usize) {
    let n = spec.paths;
    let g = &spec.groups;
    let minority = rng.random::<f64>() < spec.minority_correct_rate;
    let lo = if !g.balanced && minority { g.min_groups.max(2) } else { g.min_groups };
    // A unique largest group needs at least one spare path.
    let hi = if g.balanced { g.max_groups } else { g.max_groups.min(n - 1).max(lo) };
    let m = rng.random_range(lo..=hi);

    if g.balanced {
        let sizes: Vec<usize> = (0..m).map(|k| n / m + usize::from(k < n % m)).collect();
        return (sizes, rng.random_range(0..m));
    }
    if m == 1 {
        return (vec![n], 0);
    }
    loop {
        let mut sizes = vec![1; m];
        for _ in 0..n - m {
            sizes[rng.random_range(0..m)] += 1;
        }
        let largest = *sizes.iter().max().expect("m >= 2");
        let top: Vec<usize> = (0..m).filter(|&k| sizes[k] == largest).collect();
        if top.len() != 1 {
            continue;
        }
        if !minority {
            return (sizes, top[0]);
        }
        let smaller: Vec<usize> = (0..m).filter(|&k| sizes[k] < largest).collect();
        return (sizes, smaller[rng.random_range(0..smaller.len())]);
    }
}

/// Generate a labeled dataset. Every question has a nonempty gold group.
pub fn generate(spec: &SyntheticSpec) -> Result<Vec<QuestionInstance>> {
    spec.validate()?;
    let mut root = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let truth = random_direction(&mut root, spec.dim, spec.truth_direction_norm);
    let offset = random_direction(&mut root, spec.dim, spec.template_offset_norm);
    let width = spec.questions.to_string().len();

    (0..spec.questions)
        .map(|qi| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed ^ (qi as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            rng.set_stream(qi as u64 + 1);
            let (sizes, gold) = draw_layout(spec, &mut rng);

            // Distinct numeric answers; shuffled so key order says nothing
            // about which group is gold.
            let mut answers: Vec<u32> = Vec::with_capacity(sizes.len());
            while answers.len() < sizes.len() {
                let a = rng.random_range(0..1000);
                if !answers.contains(&a) {
                    answers.push(a);
                }
            }
            let mut assignment: Vec<usize> = sizes.iter().enumerate().flat_map(|(k, &s)| vec![k; s]).collect();
            assignment.shuffle(&mut rng);

            let question_id = format!("q{qi:0width$}");
            let pairs = assignment
                .iter()
                .enumerate()
                .map(|(i, &k)| {
                    let y = k == gold;
                    let sign = if y { 1.0 } else { -1.0 };
                    let mut feature = |flip: f64| -> Result<FeatureVector> {
                        let values = (0..spec.dim)
                            .map(|j| {
                                let e: f64 = rng.sample(StandardNormal);
                                (flip * (offset[j] + sign * truth[j]) + spec.noise_std * e) as f32
                            })
                            .collect();
                        FeatureVector::new(values)
                    };
                    let pos = feature(1.0)?;
                    let neg = feature(-1.0)?;
                    let noise: f64 = rng.sample(StandardNormal);
                    let conf = (0.5 + sign * spec.confidence_signal / 2.0 + 0.15 * noise).clamp(0.0, 1.0);
                    Ok(
                        AssertionPair::new(&question_id, i, pos, neg, AnswerKey::Answer(answers[k].to_string()))?
                            .with_confidence(conf)?
                            .with_gold_label(y),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(group_by_answer(pairs)?.with_gold_answer(answers[gold].to_string()))
        })
        .collect()
}

/// Split off the last `holdout` questions.
pub fn split_holdout(dataset: &[QuestionInstance], holdout: usize) -> (Vec<QuestionInstance>, Vec<QuestionInstance>) {
    let cut = dataset.len().saturating_sub(holdout);
    (dataset[..cut].to_vec(), dataset[cut..].to_vec())
}

/// Selection accuracy of a trained verifier on labeled questions.
pub fn verifier_metrics(verifier: &TrainedVerifier, dataset: &[QuestionInstance], strategy: Strategy) -> Result<Metrics> {
    let results = dataset
        .iter()
        .map(|q| {
            let scores = verifier.score(q)?;
            let gold = q
                .gold_answer()
                .ok_or_else(|| Error::MissingLabels(q.question_id().to_string()))?;
            Ok((select_answer(&scores, q, strategy)?, gold.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(evaluate(&results))
}

/// Mean over questions with at least two groups of `H(p̂) / ln M`, where
/// `p̂` normalizes the group-mean `p_pos` across the question's groups.
/// Ranges from 0 (one group takes all mass) to 1 (uniform).
pub fn mean_normalized_group_entropy(verifier: &TrainedVerifier, dataset: &[QuestionInstance]) -> Result<f64> {
    let mut total = 0.0;
    let mut counted = 0usize;
    for q in dataset {
        if q.num_groups() < 2 {
            continue;
        }
        let scores = verifier.score(q)?;
        let mass: Vec<f64> = q
            .groups()
            .iter()
            .map(|g| g.members.iter().map(|&i| scores[i].p_pos).sum::<f64>() / g.members.len() as f64)
            .collect();
        let z: f64 = mass.iter().sum();
        if !(z > 0.0) {
            return Err(Error::DegenerateDistribution(z));
        }
        let h: f64 = mass
            .iter()
            .map(|&m| m / z)
            .filter(|&p| p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        total += h / (q.num_groups() as f64).ln();
        counted += 1;
    }
    if counted == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(total / counted as f64)
}

/// Supervised ceiling: BCE-trained verifier on `train`, sum-strategy
/// accuracy on `holdout`.
pub fn oracle_supervised_ceiling(
    train: &[QuestionInstance],
    holdout: &[QuestionInstance],
    config: &TrainConfig,
) -> Result<f64> {
    let report = train_supervised(train, config)?;
    Ok(verifier_metrics(&report.verifier, holdout, Strategy::Sum)?.accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::majority_vote;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            dim: 8,
            questions: 50,
            paths: 6,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn same_seed_same_data() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = SyntheticSpec {
            rng_seed: 1,
            ..small()
        };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn gold_group_is_labeled_and_nonempty() {
        for q in generate(&small()).unwrap() {
            let gold = q.gold_answer().unwrap();
            let group = q.groups().iter().find(|g| g.answer.as_str() == Some(gold)).unwrap();
            assert!(!group.members.is_empty());
            for (i, p) in q.pairs().iter().enumerate() {
                assert_eq!(p.gold_label, Some(group.members.contains(&i)));
            }
            assert!((2..=5).contains(&q.num_groups()));
        }
    }

    #[test]
    fn noiseless_features_are_separable() {
        let spec = SyntheticSpec {
            noise_std: 0.0,
            minority_correct_rate: 0.0,
            ..small()
        };
        let data = generate(&spec).unwrap();
        // The pos/neg difference of a true path equals +2(offset + v), of a
        // false path 2(offset - v); projecting on their difference separates.
        let (t, f): (Vec<_>, Vec<_>) = data.iter().flat_map(|q| q.pairs()).partition(|p| p.gold_label == Some(true));
        let diff = |p: &AssertionPair| -> Vec<f64> {
            p.pos.values().iter().zip(p.neg.values()).map(|(a, b)| f64::from(a - b)).collect()
        };
        let w: Vec<f64> = diff(t[0]).iter().zip(diff(f[0])).map(|(a, b)| a - b).collect();
        let proj = |p: &AssertionPair| diff(p).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let min_true = t.iter().map(|p| proj(p)).fold(f64::INFINITY, f64::min);
        let max_false = f.iter().map(|p| proj(p)).fold(f64::NEG_INFINITY, f64::max);
        assert!(min_true > max_false);
    }

    #[test]
    fn voting_accuracy_tracks_minority_rate() {
        let spec = SyntheticSpec {
            dim: 2,
            questions: 2000,
            paths: 10,
            minority_correct_rate: 0.4,
            ..SyntheticSpec::default()
        };
        let data = generate(&spec).unwrap();
        // Counting oracle: gold group is strictly the largest in (1 - rate).
        let largest_is_gold = data
            .iter()
            .filter(|q| {
                let gold = q.gold_answer().unwrap();
                let max = q.groups().iter().map(|g| g.members.len()).max().unwrap();
                q.groups()
                    .iter()
                    .any(|g| g.answer.as_str() == Some(gold) && g.members.len() == max)
            })
            .count() as f64
            / data.len() as f64;
        let results: Vec<_> = data
            .iter()
            .map(|q| (majority_vote(q), q.gold_answer().unwrap().to_string()))
            .collect();
        let acc = evaluate(&results).accuracy;
        assert_eq!(acc, largest_is_gold);
        // 3 standard errors at n = 2000.
        assert!((acc - 0.6).abs() < 3.0 * (0.24f64 / 2000.0).sqrt(), "{acc}");
    }

    #[test]
    fn balanced_layout_is_even() {
        let spec = SyntheticSpec {
            paths: 10,
            groups: GroupLayout {
                min_groups: 5,
                max_groups: 5,
                balanced: true,
            },
            ..small()
        };
        for q in generate(&spec).unwrap() {
            assert!(q.groups().iter().all(|g| g.members.len() == 2));
        }
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            SyntheticSpec { noise_std: -1.0, ..small() },
            SyntheticSpec { dim: 1, ..small() },
            SyntheticSpec { paths: 1, ..small() },
            SyntheticSpec { minority_correct_rate: 1.5, ..small() },
            SyntheticSpec {
                groups: GroupLayout { min_groups: 3, max_groups: 9, balanced: false },
                ..small()
            },
        ];
        for s in bad {
            assert!(matches!(generate(&s), Err(Error::InvalidSpec(_))), "{s:?}");
        }
    }
}

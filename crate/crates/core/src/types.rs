//! Domain types shared by every stage: feature vectors, contrastive assertion
//! pairs, answer groups, normalization, and the training configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::answer::AnswerKey;
use crate::error::{Error, Result};

/// Activation vector of one assertion. Entries are always finite.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector(Vec<f32>);

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DimMismatch {
                expected: 1,
                actual: 0,
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature { index });
        }
        Ok(FeatureVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }
}

/// The positive and negative assertion features of one reasoning path.
#[derive(Clone, Debug, PartialEq)]
pub struct AssertionPair {
    pub question_id: String,
    pub path_index: usize,
    pub pos: FeatureVector,
    pub neg: FeatureVector,
    pub answer: AnswerKey,
    /// CoT-decoding confidence (top-1 minus top-2 token probability over the
    /// answer span).
    pub answer_confidence: Option<f64>,
    pub gold_label: Option<bool>,
}

impl AssertionPair {
    pub fn new(
        question_id: impl Into<String>,
        path_index: usize,
        pos: FeatureVector,
        neg: FeatureVector,
        answer: AnswerKey,
    ) -> Result<Self> {
        if pos.dim() != neg.dim() {
            return Err(Error::DimMismatch {
                expected: pos.dim(),
                actual: neg.dim(),
            });
        }
        Ok(AssertionPair {
            question_id: question_id.into(),
            path_index,
            pos,
            neg,
            answer,
            answer_confidence: None,
            gold_label: None,
        })
    }

    pub fn with_confidence(mut self, confidence: f64) -> Result<Self> {
        if !confidence.is_finite() || confidence < 0.0 {
            return Err(Error::BadConfidence(confidence));
        }
        self.answer_confidence = Some(confidence);
        Ok(self)
    }

    pub fn with_gold_label(mut self, label: bool) -> Self {
        self.gold_label = Some(label);
        self
    }

    pub fn dim(&self) -> usize {
        self.pos.dim()
    }
}

/// Paths sharing one final answer. `members` are path indices in ascending
/// order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AnswerGroup {
    pub answer: AnswerKey,
    pub members: Vec<usize>,
}

/// All N paths of one question, partitioned into M answer groups.
///
/// `pairs[i].path_index == i` always holds. Groups are ordered by answer key
/// with `NoAnswer` singletons last, in path-index order.
#[derive(Clone, Debug, PartialEq)]
pub struct QuestionInstance {
    question_id: String,
    pairs: Vec<AssertionPair>,
    groups: Vec<AnswerGroup>,
    gold_answer: Option<String>,
}

impl QuestionInstance {
    pub fn question_id(&self) -> &str {
        &self.question_id
    }

    pub fn pairs(&self) -> &[AssertionPair] {
        &self.pairs
    }

    pub fn groups(&self) -> &[AnswerGroup] {
        &self.groups
    }

    pub fn gold_answer(&self) -> Option<&str> {
        self.gold_answer.as_deref()
    }

    pub fn num_paths(&self) -> usize {
        self.pairs.len()
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn dim(&self) -> usize {
        self.pairs[0].dim()
    }

    pub fn with_gold_answer(mut self, gold: impl Into<String>) -> Self {
        self.gold_answer = Some(gold.into());
        self
    }

    /// Gold labels of every path, or `MissingLabels` if any is absent.
    pub fn labels(&self) -> Result<Vec<bool>> {
        self.pairs
            .iter()
            .map(|p| p.gold_label)
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::MissingLabels(self.question_id.clone()))
    }

    /// Same instance with every feature vector replaced by `f(old)`.
    pub(crate) fn map_features(&self, mut f: impl FnMut(&FeatureVector, bool) -> FeatureVector) -> Self {
        let pairs = self
            .pairs
            .iter()
            .map(|p| AssertionPair {
                pos: f(&p.pos, true),
                neg: f(&p.neg, false),
                ..p.clone()
            })
            .collect();
        QuestionInstance {
            pairs,
            ..self.clone()
        }
    }
}

/// Build a question instance from its pairs, grouping paths by answer key.
///
/// Pairs may arrive in any order; they are reordered by `path_index`, which
/// must cover `0..N` exactly.
pub fn group_by_answer(pairs: Vec<AssertionPair>) -> Result<QuestionInstance> {
    let first = pairs.first().ok_or(Error::EmptyDataset)?;
    let question_id = first.question_id.clone();
    let dim = first.dim();
    for p in &pairs {
        if p.question_id != question_id {
            return Err(Error::MixedQuestion {
                first: question_id,
                other: p.question_id.clone(),
            });
        }
        if p.pos.dim() != dim || p.neg.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: if p.pos.dim() != dim { p.pos.dim() } else { p.neg.dim() },
            });
        }
    }

    let n = pairs.len();
    let mut slots: Vec<Option<AssertionPair>> = vec![None; n];
    for p in pairs {
        let i = p.path_index;
        if i >= n || slots[i].is_some() {
            return Err(Error::BadPathIndex { question_id, n });
        }
        slots[i] = Some(p);
    }
    let pairs: Vec<AssertionPair> = slots.into_iter().map(|p| p.expect("all slots filled")).collect();

    let mut by_answer: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut unanswered = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        match &p.answer {
            AnswerKey::Answer(a) => by_answer.entry(a.as_str()).or_default().push(i),
            AnswerKey::NoAnswer => unanswered.push(i),
        }
    }
    let mut groups: Vec<AnswerGroup> = by_answer
        .into_iter()
        .map(|(a, members)| AnswerGroup {
            answer: AnswerKey::Answer(a.to_string()),
            members,
        })
        .collect();
    groups.extend(unanswered.into_iter().map(|i| AnswerGroup {
        answer: AnswerKey::NoAnswer,
        members: vec![i],
    }));

    Ok(QuestionInstance {
        question_id,
        pairs,
        groups,
        gold_answer: None,
    })
}

/// Check that every instance shares one feature dimension and return it.
pub fn dataset_dim(dataset: &[QuestionInstance]) -> Result<usize> {
    let first = dataset.first().ok_or(Error::EmptyDataset)?;
    let dim = first.dim();
    for q in dataset {
        if q.dim() != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                actual: q.dim(),
            });
        }
    }
    Ok(dim)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationMode {
    None,
    #[default]
    PerTemplateCenterScale,
}

/// Statistics of a fitted normalization, reusable on held-out data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mode: NormalizationMode,
    pub pos_mean: Vec<f64>,
    pub neg_mean: Vec<f64>,
    /// Pooled per-dimension standard deviation, already floored.
    pub scale: Vec<f64>,
}

pub const STD_FLOOR: f64 = 1e-6;

impl NormalizationStats {
    pub fn identity() -> Self {
        NormalizationStats {
            mode: NormalizationMode::None,
            pos_mean: Vec::new(),
            neg_mean: Vec::new(),
            scale: Vec::new(),
        }
    }

    pub fn fit(dataset: &[QuestionInstance], mode: NormalizationMode) -> Result<Self> {
        let dim = dataset_dim(dataset)?;
        if mode == NormalizationMode::None {
            return Ok(Self::identity());
        }
        let mut pos_sum = vec![0.0; dim];
        let mut neg_sum = vec![0.0; dim];
        let mut count = 0usize;
        for p in dataset.iter().flat_map(|q| q.pairs()) {
            for (s, &v) in pos_sum.iter_mut().zip(p.pos.values()) {
                *s += f64::from(v);
            }
            for (s, &v) in neg_sum.iter_mut().zip(p.neg.values()) {
                *s += f64::from(v);
            }
            count += 1;
        }
        let n = count as f64;
        let pos_mean: Vec<f64> = pos_sum.iter().map(|s| s / n).collect();
        let neg_mean: Vec<f64> = neg_sum.iter().map(|s| s / n).collect();

        let mut sq = vec![0.0; dim];
        for p in dataset.iter().flat_map(|q| q.pairs()) {
            for j in 0..dim {
                let dp = f64::from(p.pos.values()[j]) - pos_mean[j];
                let dn = f64::from(p.neg.values()[j]) - neg_mean[j];
                sq[j] += dp * dp + dn * dn;
            }
        }
        let scale = sq.iter().map(|s| (s / (2.0 * n)).sqrt().max(STD_FLOOR)).collect();
        Ok(NormalizationStats {
            mode,
            pos_mean,
            neg_mean,
            scale,
        })
    }

    pub fn dim(&self) -> Option<usize> {
        match self.mode {
            NormalizationMode::None => None,
            NormalizationMode::PerTemplateCenterScale => Some(self.scale.len()),
        }
    }

    pub fn apply_vector(&self, x: &FeatureVector, positive: bool) -> Result<FeatureVector> {
        match self.mode {
            NormalizationMode::None => Ok(x.clone()),
            NormalizationMode::PerTemplateCenterScale => {
                if x.dim() != self.scale.len() {
                    return Err(Error::DimMismatch {
                        expected: self.scale.len(),
                        actual: x.dim(),
                    });
                }
                let mean = if positive { &self.pos_mean } else { &self.neg_mean };
                let values = x
                    .values()
                    .iter()
                    .zip(mean.iter().zip(&self.scale))
                    .map(|(&v, (m, s))| ((f64::from(v) - m) / s) as f32)
                    .collect();
                FeatureVector::new(values)
            }
        }
    }

    pub fn apply(&self, instance: &QuestionInstance) -> Result<QuestionInstance> {
        if self.mode == NormalizationMode::None {
            return Ok(instance.clone());
        }
        if let Some(d) = self.dim() {
            if instance.dim() != d {
                return Err(Error::DimMismatch {
                    expected: d,
                    actual: instance.dim(),
                });
            }
        }
        let mut err = None;
        let out = instance.map_features(|x, positive| match self.apply_vector(x, positive) {
            Ok(v) => v,
            Err(e) => {
                err.get_or_insert(e);
                x.clone()
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(out),
        }
    }

    pub fn apply_all(&self, dataset: &[QuestionInstance]) -> Result<Vec<QuestionInstance>> {
        dataset.iter().map(|q| self.apply(q)).collect()
    }
}

/// Fit normalization statistics on `dataset` and apply them.
///
/// `PerTemplateCenterScale` subtracts the dataset mean of the positive
/// features from every positive vector (likewise negative), then divides both
/// by the pooled per-dimension standard deviation.
pub fn normalize_features(
    dataset: &[QuestionInstance],
    mode: NormalizationMode,
) -> Result<(Vec<QuestionInstance>, NormalizationStats)> {
    let stats = NormalizationStats::fit(dataset, mode)?;
    let normalized = stats.apply_all(dataset)?;
    Ok((normalized, stats))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterVariant {
    /// Soft sum-to-one penalty, optionally with the entropy regularizer.
    #[default]
    SoftProb,
    /// Product t-norm relaxation of "exactly one group is true".
    TNorm,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub max_steps: usize,
    pub batch_questions: usize,
    pub w_nega: f64,
    pub w_intra: f64,
    pub w_inter: f64,
    pub inter_variant: InterVariant,
    /// Include the entropy term in the soft inter-group loss.
    pub inter_entropy: bool,
    pub normalization: NormalizationMode,
    pub hidden1: usize,
    pub hidden2: usize,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            max_steps: 2000,
            batch_questions: 32,
            w_nega: 1.0,
            w_intra: 1.0,
            w_inter: 1.0,
            inter_variant: InterVariant::SoftProb,
            inter_entropy: true,
            normalization: NormalizationMode::PerTemplateCenterScale,
            hidden1: 256,
            hidden2: 64,
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be > 0");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be >= 0");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be > 0");
        }
        let weights = [self.w_nega, self.w_intra, self.w_inter];
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("loss weights must be finite and >= 0");
        }
        if weights.iter().all(|w| *w == 0.0) {
            return bad("at least one loss weight must be positive");
        }
        if self.batch_questions == 0 {
            return bad("batch_questions must be >= 1");
        }
        if self.hidden1 == 0 || self.hidden2 == 0 {
            return bad("hidden widths must be >= 1");
        }
        Ok(())
    }
}

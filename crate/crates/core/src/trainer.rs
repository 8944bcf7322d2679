//! AdamW and the training loops (unsupervised consistency objective and the
//! supervised BCE baseline).

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{score_paths, PathScore};
use crate::losses::{loss_supervised_bce, total_loss, QuestionProbs};
use crate::model::{ForwardTrace, VerifierModel};
use crate::types::{dataset_dim, normalize_features, NormalizationStats, QuestionInstance, TrainConfig};

/// First and second moment accumulators, laid out like the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(param_count: usize) -> Self {
        OptimizerState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }
}

/// One AdamW update with decoupled weight decay:
/// `theta <- theta * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    config: &TrainConfig,
) -> Result<()> {
    let n = params.len();
    for len in [grads.len(), state.m.len(), state.v.len()] {
        if len != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                actual: len,
            });
        }
    }
    state.t += 1;
    let (b1, b2) = (config.adam_beta1, config.adam_beta2);
    let t = state.t as i32;
    let bias1 = 1.0 - b1.powi(t);
    let bias2 = 1.0 - b2.powi(t);
    let lr = config.learning_rate;
    let decay = 1.0 - lr * config.weight_decay;
    for k in 0..n {
        let g = grads[k];
        state.m[k] = b1 * state.m[k] + (1.0 - b1) * g;
        state.v[k] = b2 * state.v[k] + (1.0 - b2) * g * g;
        let m_hat = state.m[k] / bias1;
        let v_hat = state.v[k] / bias2;
        params[k] = params[k] * decay - lr * m_hat / (v_hat.sqrt() + config.adam_epsilon);
    }
    Ok(())
}

/// Mean per-question losses of one optimization step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLoss {
    pub step: usize,
    #[serde(rename = "L_total")]
    pub total: f64,
    #[serde(rename = "L_nega")]
    pub nega: f64,
    #[serde(rename = "L_intra")]
    pub intra: f64,
    #[serde(rename = "L_inter")]
    pub inter: f64,
}

/// A model together with the feature normalization it was trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedVerifier {
    pub model: VerifierModel,
    pub normalization: NormalizationStats,
}

impl TrainedVerifier {
    /// Normalize `instance` with the training statistics and score its paths.
    pub fn score(&self, instance: &QuestionInstance) -> Result<Vec<PathScore>> {
        score_paths(&self.model, &self.normalization.apply(instance)?)
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub verifier: TrainedVerifier,
    pub optimizer: OptimizerState,
    pub losses: Vec<StepLoss>,
    pub seed: u64,
    pub config: TrainConfig,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Objective {
    Consistency,
    Supervised,
}

/// Train the verifier from the unlabeled consistency objective.
pub fn train(dataset: &[QuestionInstance], config: &TrainConfig) -> Result<TrainReport> {
    run(dataset, config, Objective::Consistency)
}

/// Train the same architecture on gold path labels with BCE.
pub fn train_supervised(dataset: &[QuestionInstance], config: &TrainConfig) -> Result<TrainReport> {
    for q in dataset {
        q.labels()?;
    }
    run(dataset, config, Objective::Supervised)
}

/// Seed of the representative-sampling stream for one question at one step.
/// Independent of batch composition and execution order.
pub fn representative_seed(rng_seed: u64, step: usize, question_id: &str) -> u64 {
    // FNV-1a over the id, mixed with seed and step through splitmix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in question_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix(splitmix(rng_seed ^ h).wrapping_add(step as u64))
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Cycles through question indices, reshuffling at every epoch.
struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ 0x5eed_ba7c));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        BatchSampler { order, cursor: 0, rng }
    }

    fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        let mut batch = Vec::with_capacity(size);
        while batch.len() < size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            batch.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        batch
    }
}

struct QuestionStep {
    grads: Vec<f64>,
    loss: StepLoss,
}

fn forward_all(model: &VerifierModel, q: &QuestionInstance) -> Result<(Vec<ForwardTrace>, Vec<ForwardTrace>)> {
    let pos = q.pairs().iter().map(|p| model.forward(&p.pos)).collect::<Result<Vec<_>>>()?;
    let neg = q.pairs().iter().map(|p| model.forward(&p.neg)).collect::<Result<Vec<_>>>()?;
    Ok((pos, neg))
}

fn question_step(
    model: &VerifierModel,
    q: &QuestionInstance,
    config: &TrainConfig,
    objective: Objective,
    step: usize,
    scale: f64,
) -> Result<QuestionStep> {
    let (pos_t, neg_t) = forward_all(model, q)?;
    let mut probs = QuestionProbs::from_instance(
        q,
        pos_t.iter().map(|t| t.p).collect(),
        neg_t.iter().map(|t| t.p).collect(),
    )?;
    let (value, loss) = match objective {
        Objective::Consistency => {
            let mut rng = ChaCha8Rng::seed_from_u64(representative_seed(config.rng_seed, step, q.question_id()));
            probs.resample_representatives(&mut rng);
            let t = total_loss(&probs, config)?;
            let loss = StepLoss {
                step,
                total: t.total.value,
                nega: t.nega,
                intra: t.intra,
                inter: t.inter,
            };
            (t.total, loss)
        }
        Objective::Supervised => {
            let l = loss_supervised_bce(&probs, &q.labels()?)?;
            let loss = StepLoss {
                step,
                total: l.value,
                nega: 0.0,
                intra: 0.0,
                inter: 0.0,
            };
            (l, loss)
        }
    };
    if !value.value.is_finite() {
        return Err(Error::NonFiniteLoss { step });
    }
    let mut grads = vec![0.0; model.param_count()];
    for (t, g) in pos_t.iter().zip(&value.d_pos).chain(neg_t.iter().zip(&value.d_neg)) {
        model.accumulate_grad(t, g * scale, &mut grads)?;
    }
    Ok(QuestionStep { grads, loss })
}

fn run(dataset: &[QuestionInstance], config: &TrainConfig, objective: Objective) -> Result<TrainReport> {
    let started = Instant::now();
    config.validate()?;
    let dim = dataset_dim(dataset)?;
    let (data, normalization) = normalize_features(dataset, config.normalization)?;
    let mut model = VerifierModel::init(dim, config.hidden1, config.hidden2, config.rng_seed)?;
    let mut optimizer = OptimizerState::new(model.param_count());
    let mut sampler = BatchSampler::new(data.len(), config.rng_seed);
    let mut losses = Vec::with_capacity(config.max_steps);

    for step in 0..config.max_steps {
        let batch = sampler.next_batch(config.batch_questions);
        let scale = 1.0 / batch.len() as f64;
        let results: Vec<QuestionStep> = batch
            .par_iter()
            .map(|&qi| question_step(&model, &data[qi], config, objective, step, scale))
            .collect::<Result<_>>()?;

        // Fixed question order keeps the sum independent of scheduling.
        let mut grads = vec![0.0; model.param_count()];
        let mut mean = StepLoss {
            step,
            total: 0.0,
            nega: 0.0,
            intra: 0.0,
            inter: 0.0,
        };
        for r in &results {
            for (a, b) in grads.iter_mut().zip(&r.grads) {
                *a += b;
            }
            mean.total += r.loss.total * scale;
            mean.nega += r.loss.nega * scale;
            mean.intra += r.loss.intra * scale;
            mean.inter += r.loss.inter * scale;
        }
        if !mean.total.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteLoss { step });
        }
        adamw_step(model.params_mut(), &grads, &mut optimizer, config)?;
        losses.push(mean);
    }

    Ok(TrainReport {
        verifier: TrainedVerifier { model, normalization },
        optimizer,
        losses,
        seed: config.rng_seed,
        config: config.clone(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

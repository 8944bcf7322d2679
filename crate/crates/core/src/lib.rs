//! Unsupervised verifier for picking the best final answer among N sampled
//! reasoning paths, using only hidden activations of the generating model.
//!
//! Each reasoning path is turned into a pair of contrastive assertions (the
//! path followed by a "true" template and by a "false" template). A small MLP
//! maps the activation vector of each assertion to a probability that the
//! assertion holds. The MLP is trained without labels, from three logical
//! consistency constraints:
//!
//! - negation: the two assertions of a pair should have complementary,
//!   confident probabilities;
//! - intra-group: paths that reach the same final answer should agree;
//! - inter-group: exactly one answer group should be true.
//!
//! At inference time path scores are aggregated per answer group with a
//! `max` or `sum` strategy.
//!
//! The modules map onto the pipeline:
//!
//! | module        | contents                                               |
//! |---------------|--------------------------------------------------------|
//! | [`types`]     | feature vectors, assertion pairs, answer groups, config |
//! | [`answer`]    | answer normalization shared by every consumer           |
//! | [`model`]     | the 2-hidden-layer verifier, forward and backward       |
//! | [`losses`]    | consistency losses and the supervised BCE baseline      |
//! | [`trainer`]   | AdamW and the training loops                            |
//! | [`inference`] | path scoring, group selection, baselines, metrics       |
//! | [`synthetic`] | planted-truth feature generator used for testing        |
//! | [`io`]        | dataset and checkpoint files                            |
//! | [`cli`]       | the `latent-verifier` command line                      |

pub mod answer;
pub mod cli;
pub mod error;
pub mod inference;
pub mod io;
pub mod losses;
pub mod model;
pub mod synthetic;
pub mod trainer;
pub mod types;

pub use answer::{normalize_answer, AnswerKey};
pub use error::{Error, Result};
pub use inference::{
    cot_decoding_select, evaluate, greedy_select, majority_vote, score_paths, select_answer,
    Method, Metrics, PathScore, SelectionResult, Strategy,
};
pub use losses::QuestionProbs;
pub use model::{ForwardTrace, GradientSet, VerifierModel};
pub use trainer::{train, train_supervised, OptimizerState, TrainReport, TrainedVerifier};
pub use types::{
    group_by_answer, normalize_features, AnswerGroup, AssertionPair, FeatureVector,
    InterVariant, NormalizationMode, NormalizationStats, QuestionInstance, TrainConfig,
};

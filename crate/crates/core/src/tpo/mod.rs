//! Toy trajectory preference optimization.
//!
//! A [`ToyPolicy`] emits the 12 bin tokens of a trajectory. It is first fit
//! by span-weighted cross-entropy ([`train_sft`]), then refined by DPO on
//! pairs of its own samples ranked by displacement from the ground truth
//! ([`train_tpo`]).

mod experiment;
mod gradcheck;
mod loss;
mod policy;
mod sampling;
mod tokenizer;
mod train;

pub use experiment::{ExperimentOutcome, ToyExperiment};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use loss::{
    dpo_argument, dpo_loss, dpo_loss_grad, dpo_pair_loss, sft_loss, sft_loss_grad, sigmoid, softplus, LossError,
    SpanTag,
};
pub use policy::{argmax, log_softmax_in_place, Featurizer, PolicyError, ToyPolicy};
pub use sampling::{
    build_pair, sample_responses, score_displacement, score_displacement_with, ContextSampler, DisplacementScoring,
    PairChoice, PairError, PreferencePair, SampledResponse, SkipReason,
};
pub use tokenizer::{Token, TokenizerError, TrajTokenizer};
pub use train::{
    context_rng, greedy_displacement, sft_objective, train_sft, train_tpo, SftConfig, SftExample, SftRun, TpoConfig,
    TpoRun, TpoStepMetrics, TrainError,
};

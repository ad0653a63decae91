use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::loss::{dpo_loss_grad, sft_loss_grad, LossError, SpanTag};
use super::policy::{PolicyError, ToyPolicy};
use super::sampling::{build_pair, score_displacement_with, ContextSampler, DisplacementScoring, PairChoice};
use super::tokenizer::{Token, TokenizerError};
use crate::synthetic::{TaskContext, TaskInstance};

/// Examples per gradient chunk; fixed so that summation order, and thus
/// every bit of the result, is independent of the thread count.
const CHUNK: usize = 16;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("empty training set")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftConfig {
    pub lambda_weight: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            lambda_weight: 1.2,
            learning_rate: 0.1,
            steps: 100,
            seed: 0,
        }
    }
}

impl SftConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lambda_weight >= 0.0 && self.lambda_weight.is_finite()) {
            return Err(TrainError::Config(format!("lambda_weight must be >= 0, got {}", self.lambda_weight)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpoConfig {
    pub beta: f64,
    pub k: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub scoring: DisplacementScoring,
}

impl Default for TpoConfig {
    fn default() -> Self {
        Self {
            beta: 0.1,
            k: 16,
            temperature: 1.5,
            learning_rate: 0.1,
            steps: 100,
            seed: 0,
            scoring: DisplacementScoring::PerSecond,
        }
    }
}

impl TpoConfig {
    /// `beta = 0` is accepted as a no-op run.
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(TrainError::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.k < 2 {
            return Err(TrainError::Config(format!("k must be >= 2, got {}", self.k)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(TrainError::Config(format!("temperature must be > 0, got {}", self.temperature)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// One supervised target sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftExample {
    pub context: TaskContext,
    pub tokens: Vec<Token>,
    pub spans: Vec<SpanTag>,
}

impl SftExample {
    /// The tokenized ground truth, tagged as trajectory.
    pub fn from_instance(policy: &ToyPolicy, inst: &TaskInstance) -> Result<Self, TokenizerError> {
        let tokens = policy.tokenizer.encode(&inst.gt)?;
        Ok(Self {
            context: inst.context,
            spans: vec![SpanTag::Traj; tokens.len()],
            tokens,
        })
    }
}

/// Mean SFT loss over `examples` and its gradient.
pub fn sft_objective(policy: &ToyPolicy, examples: &[SftExample], lambda: f64) -> Result<(f64, Vec<f64>), TrainError> {
    if examples.is_empty() {
        return Err(TrainError::Empty);
    }
    let scale = 1.0 / examples.len() as f64;
    let parts: Vec<Result<(f64, Vec<f64>), LossError>> = examples
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; policy.n_params()];
            let mut loss = 0.0;
            for ex in chunk {
                let phi = policy.features(&ex.context);
                loss += sft_loss_grad(policy, &phi, &ex.tokens, &ex.spans, lambda, scale, &mut grad)?;
            }
            Ok((loss, grad))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; policy.n_params()];
    for part in parts {
        let (l, g) = part?;
        total += l;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((total * scale, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SftRun {
    pub policy: ToyPolicy,
    /// Loss before each update.
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent on the mean span-weighted NLL.
pub fn train_sft(policy: &ToyPolicy, examples: &[SftExample], cfg: &SftConfig) -> Result<SftRun, TrainError> {
    cfg.validate()?;
    policy.validate()?;
    if examples.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut policy = policy.clone();
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let (loss, grad) = sft_objective(&policy, examples, cfg.lambda_weight)?;
        losses.push(loss);
        policy
            .weights
            .iter_mut()
            .zip(&grad)
            .for_each(|(w, g)| *w -= cfg.learning_rate * g);
    }
    Ok(SftRun { policy, losses })
}

/// Mean displacement of greedy decodes; undecodable decodes count as
/// infinite.
pub fn greedy_displacement(policy: &ToyPolicy, instances: &[TaskInstance], scoring: DisplacementScoring) -> f64 {
    let total: f64 = instances
        .iter()
        .map(|inst| {
            let tokens = policy.greedy(&policy.features(&inst.context));
            policy
                .tokenizer
                .decode(&tokens)
                .map_or(f64::INFINITY, |t| score_displacement_with(&t, &inst.gt, scoring))
        })
        .sum();
    total / instances.len() as f64
}

/// Generator for one (run seed, step, context) triple.
pub fn context_rng(seed: u64, step: u64, context_id: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&step.to_le_bytes());
    key[16..24].copy_from_slice(&context_id.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpoStepMetrics {
    pub step: usize,
    /// Mean DPO loss over built pairs, before the update; `None` if no pair
    /// was built.
    pub loss: Option<f64>,
    /// Greedy-decode mean displacement after the update.
    pub mean_displacement: f64,
    pub pairs_built: usize,
    pub pairs_skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TpoRun {
    pub policy: ToyPolicy,
    pub metrics: Vec<TpoStepMetrics>,
    pub warnings: Vec<String>,
}

struct BuiltPair {
    index: usize,
    pos: Vec<Token>,
    neg: Vec<Token>,
    ref_pos: f64,
    ref_neg: f64,
}

/// Samples one preference pair per context from the frozen reference.
fn collect_pairs(
    samplers: &[ContextSampler],
    instances: &[TaskInstance],
    cfg: &TpoConfig,
    step: usize,
) -> Vec<Option<BuiltPair>> {
    instances
        .par_iter()
        .zip(samplers)
        .enumerate()
        .map(|(index, (inst, sampler))| {
            let mut rng = context_rng(cfg.seed, step as u64, inst.context.id);
            let responses: Vec<_> = (0..cfg.k)
                .map(|_| sampler.response(&inst.gt, cfg.scoring, &mut rng))
                .collect();
            match build_pair(&responses).expect("k >= 2") {
                PairChoice::Pair { preferred, dispreferred } => {
                    let (p, n) = (&responses[preferred], &responses[dispreferred]);
                    Some(BuiltPair {
                        index,
                        pos: p.tokens.clone(),
                        neg: n.tokens.clone(),
                        ref_pos: p.logprob_policy,
                        ref_neg: n.logprob_policy,
                    })
                }
                PairChoice::Skip(_) => None,
            }
        })
        .collect()
}

/// DPO on displacement-ranked pairs sampled from `reference`, which stays
/// frozen for the whole run.
pub fn train_tpo(
    policy: &ToyPolicy,
    reference: &ToyPolicy,
    instances: &[TaskInstance],
    cfg: &TpoConfig,
) -> Result<TpoRun, TrainError> {
    cfg.validate()?;
    policy.validate()?;
    reference.validate()?;
    if instances.is_empty() {
        return Err(TrainError::Empty);
    }
    let samplers: Vec<ContextSampler> = instances
        .par_iter()
        .map(|inst| ContextSampler::new(reference, &reference.features(&inst.context), Some(cfg.temperature)))
        .collect();
    let mut policy = policy.clone();
    let mut metrics = Vec::with_capacity(cfg.steps);
    let mut warnings = Vec::new();
    for step in 0..cfg.steps {
        let pairs: Vec<BuiltPair> = collect_pairs(&samplers, instances, cfg, step)
            .into_iter()
            .flatten()
            .collect();
        let built = pairs.len();
        let mut loss = None;
        if built == 0 {
            warnings.push(format!("step {step}: every pair skipped"));
        } else {
            let scale = 1.0 / built as f64;
            let parts: Vec<Result<(f64, Vec<f64>), LossError>> = pairs
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut grad = vec![0.0; policy.n_params()];
                    let mut total = 0.0;
                    for p in chunk {
                        let phi = policy.features(&instances[p.index].context);
                        total += dpo_loss_grad(
                            &policy, &phi, &p.pos, &p.neg, p.ref_pos, p.ref_neg, cfg.beta, scale, &mut grad,
                        )?;
                    }
                    Ok((total, grad))
                })
                .collect();
            let mut total = 0.0;
            let mut grad = vec![0.0; policy.n_params()];
            for part in parts {
                let (l, g) = part?;
                total += l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
            }
            loss = Some(total * scale);
            policy
                .weights
                .iter_mut()
                .zip(&grad)
                .for_each(|(w, g)| *w -= cfg.learning_rate * g);
        }
        metrics.push(TpoStepMetrics {
            step,
            loss,
            mean_displacement: greedy_displacement(&policy, instances, cfg.scoring),
            pairs_built: built,
            pairs_skipped: instances.len() - built,
        });
    }
    Ok(TpoRun {
        policy,
        metrics,
        warnings,
    })
}

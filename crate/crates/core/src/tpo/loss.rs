use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::policy::{log_softmax_in_place, ToyPolicy};
use super::tokenizer::Token;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("non-finite input {0}")]
    NonFinite(f64),
    #[error("{tokens} target tokens but {spans} span tags")]
    SpanMismatch { tokens: usize, spans: usize },
    #[error("sequence of {found} tokens exceeds the policy's {max} positions")]
    TooLong { found: usize, max: usize },
}

/// Which loss term a target token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpanTag {
    Reason,
    Traj,
    Meta,
    Untrained,
}

impl SpanTag {
    pub fn weight(self, lambda: f64) -> f64 {
        match self {
            SpanTag::Reason => 1.0,
            SpanTag::Traj | SpanTag::Meta => lambda,
            SpanTag::Untrained => 0.0,
        }
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `beta * ((lp_pos - lp_neg) - (ref_pos - ref_neg))`
pub fn dpo_argument(lp_pos: f64, lp_neg: f64, ref_pos: f64, ref_neg: f64, beta: f64) -> Result<f64, LossError> {
    if let Some(bad) = [lp_pos, lp_neg, ref_pos, ref_neg, beta].into_iter().find(|v| !v.is_finite()) {
        return Err(LossError::NonFinite(bad));
    }
    Ok(beta * ((lp_pos - lp_neg) - (ref_pos - ref_neg)))
}

/// `-log sigmoid(u)` for the preference margin `u`.
pub fn dpo_loss(lp_pos: f64, lp_neg: f64, ref_pos: f64, ref_neg: f64, beta: f64) -> Result<f64, LossError> {
    Ok(softplus(-dpo_argument(lp_pos, lp_neg, ref_pos, ref_neg, beta)?))
}

fn check_spans(policy: &ToyPolicy, tokens: &[Token], spans: &[SpanTag]) -> Result<(), LossError> {
    if tokens.len() != spans.len() {
        return Err(LossError::SpanMismatch {
            tokens: tokens.len(),
            spans: spans.len(),
        });
    }
    if tokens.len() > policy.n_positions {
        return Err(LossError::TooLong {
            found: tokens.len(),
            max: policy.n_positions,
        });
    }
    Ok(())
}

/// Span-weighted token NLL of one target sequence under teacher forcing.
pub fn sft_loss(
    policy: &ToyPolicy,
    phi: &[f64],
    tokens: &[Token],
    spans: &[SpanTag],
    lambda: f64,
) -> Result<f64, LossError> {
    check_spans(policy, tokens, spans)?;
    let mut logits = vec![0.0; policy.vocab()];
    let mut loss = 0.0;
    for (p, (&t, &tag)) in tokens.iter().zip(spans).enumerate() {
        let w = tag.weight(lambda);
        if w == 0.0 {
            continue;
        }
        policy.logits_into(phi, &tokens[..p], &mut logits);
        log_softmax_in_place(&mut logits, 1.0);
        loss -= w * logits[t as usize];
    }
    Ok(loss)
}

/// Adds `scale * d sft_loss / d W` into `grad` and returns the loss.
pub fn sft_loss_grad(
    policy: &ToyPolicy,
    phi: &[f64],
    tokens: &[Token],
    spans: &[SpanTag],
    lambda: f64,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64, LossError> {
    check_spans(policy, tokens, spans)?;
    let mut logits = vec![0.0; policy.vocab()];
    let mut loss = 0.0;
    for (p, (&t, &tag)) in tokens.iter().zip(spans).enumerate() {
        let w = tag.weight(lambda);
        if w == 0.0 {
            continue;
        }
        policy.logits_into(phi, &tokens[..p], &mut logits);
        log_softmax_in_place(&mut logits, 1.0);
        loss -= w * logits[t as usize];
        // d(-log p_t)/d logit_v = p_v - [v == t]
        logits.iter_mut().for_each(|l| *l = l.exp());
        logits[t as usize] -= 1.0;
        policy.accumulate_grad(phi, &tokens[..p], &logits, scale * w, grad);
    }
    Ok(loss)
}

/// Adds `coef * d log pi(tokens) / d W` into `grad` and returns the
/// log-probability.
fn logprob_grad(policy: &ToyPolicy, phi: &[f64], tokens: &[Token], coef: f64, grad: &mut [f64]) -> f64 {
    let mut logits = vec![0.0; policy.vocab()];
    let mut total = 0.0;
    for (p, &t) in tokens.iter().enumerate() {
        policy.logits_into(phi, &tokens[..p], &mut logits);
        log_softmax_in_place(&mut logits, 1.0);
        total += logits[t as usize];
        if coef != 0.0 {
            // d log p_t / d logit_v = [v == t] - p_v
            logits.iter_mut().for_each(|l| *l = -l.exp());
            logits[t as usize] += 1.0;
            policy.accumulate_grad(phi, &tokens[..p], &logits, coef, grad);
        }
    }
    total
}

/// DPO loss of one pair under `policy`.
#[allow(clippy::too_many_arguments)]
pub fn dpo_pair_loss(
    policy: &ToyPolicy,
    phi: &[f64],
    pos: &[Token],
    neg: &[Token],
    ref_pos: f64,
    ref_neg: f64,
    beta: f64,
) -> Result<f64, LossError> {
    dpo_loss(policy.sequence_logprob(phi, pos), policy.sequence_logprob(phi, neg), ref_pos, ref_neg, beta)
}

/// Adds `scale * d dpo_loss / d W` for one pair into `grad` and returns the
/// loss.
#[allow(clippy::too_many_arguments)]
pub fn dpo_loss_grad(
    policy: &ToyPolicy,
    phi: &[f64],
    pos: &[Token],
    neg: &[Token],
    ref_pos: f64,
    ref_neg: f64,
    beta: f64,
    scale: f64,
    grad: &mut [f64],
) -> Result<f64, LossError> {
    let u = dpo_argument(
        policy.sequence_logprob(phi, pos),
        policy.sequence_logprob(phi, neg),
        ref_pos,
        ref_neg,
        beta,
    )?;
    // dL/du = -sigmoid(-u), du/dW = beta (d lp_pos - d lp_neg)
    let c = -scale * beta * sigmoid(-u);
    if c != 0.0 {
        logprob_grad(policy, phi, pos, c, grad);
        logprob_grad(policy, phi, neg, -c, grad);
    }
    Ok(softplus(-u))
}

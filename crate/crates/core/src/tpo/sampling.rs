use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::policy::{add_offsets, argmax, log_softmax_in_place, ToyPolicy};
use super::tokenizer::Token;
use crate::geometry::{step_errors, subsample_1hz, Trajectory};

/// Waypoints compared when scoring a sampled trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisplacementScoring {
    /// The three whole-second waypoints.
    #[default]
    PerSecond,
    /// All six waypoints.
    AllSteps,
}

/// Mean Euclidean error between `resp` and `gt` over the scored waypoints.
pub fn score_displacement(resp: &Trajectory, gt: &Trajectory) -> f64 {
    score_displacement_with(resp, gt, DisplacementScoring::PerSecond)
}

pub fn score_displacement_with(resp: &Trajectory, gt: &Trajectory, scoring: DisplacementScoring) -> f64 {
    match scoring {
        DisplacementScoring::PerSecond => {
            let (a, b) = (subsample_1hz(resp), subsample_1hz(gt));
            a.iter().zip(&b).map(|(p, q)| p.distance(q)).sum::<f64>() / a.len() as f64
        }
        DisplacementScoring::AllSteps => {
            let e = step_errors(resp, gt);
            e.iter().sum::<f64>() / e.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledResponse {
    pub tokens: Vec<Token>,
    /// `None` when the tokens do not decode to a trajectory.
    pub trajectory: Option<Trajectory>,
    /// Untempered log-probability under the sampling policy.
    pub logprob_policy: f64,
    /// Infinite for undecodable responses.
    pub displacement: f64,
}

impl SampledResponse {
    pub fn is_valid(&self) -> bool {
        self.trajectory.is_some()
    }
}

/// Cached logits of one policy for one context; draws sequences token by
/// token.
#[derive(Debug, Clone)]
pub struct ContextSampler<'a> {
    policy: &'a ToyPolicy,
    base: Vec<Vec<f64>>,
    offsets: Vec<Vec<f64>>,
    temperature: Option<f64>,
}

impl<'a> ContextSampler<'a> {
    /// `temperature = None` selects greedy decoding.
    pub fn new(policy: &'a ToyPolicy, phi: &[f64], temperature: Option<f64>) -> Self {
        let v = policy.vocab();
        let base = (0..policy.n_positions)
            .map(|p| {
                let mut l = vec![0.0; v];
                policy.base_logits_into(phi, p, &mut l);
                l
            })
            .collect();
        let offsets = (0..policy.n_positions).map(|p| policy.offset_logits(phi, p)).collect();
        Self {
            policy,
            base,
            offsets,
            temperature,
        }
    }

    /// Untempered next-token log-probabilities after `prefix`.
    pub fn next_log_probs(&self, prefix: &[Token]) -> Vec<f64> {
        let p = prefix.len();
        let mut l = self.base[p].clone();
        if let Some(a) = self.policy.anchor(prefix) {
            add_offsets(self.policy, a, &self.offsets[p], &mut l);
        }
        log_softmax_in_place(&mut l, 1.0);
        l
    }

    /// One response and its untempered log-probability.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<Token>, f64) {
        let mut tokens = Vec::with_capacity(self.policy.n_positions);
        let mut logprob = 0.0;
        for _ in 0..self.policy.n_positions {
            let lp = self.next_log_probs(&tokens);
            let t = match self.temperature {
                None => argmax(&lp),
                Some(tau) => {
                    let mut l = lp.clone();
                    log_softmax_in_place(&mut l, tau);
                    WeightedIndex::new(l.iter().map(|x| x.exp()))
                        .expect("positive finite weights")
                        .sample(rng)
                }
            };
            logprob += lp[t];
            tokens.push(t as Token);
        }
        (tokens, logprob)
    }

    /// Draws, decodes and scores one response against `gt`.
    pub fn response<R: Rng + ?Sized>(&self, gt: &Trajectory, scoring: DisplacementScoring, rng: &mut R) -> SampledResponse {
        let (tokens, logprob_policy) = self.draw(rng);
        let trajectory = self.policy.tokenizer.decode(&tokens).ok();
        let displacement = trajectory
            .as_ref()
            .map_or(f64::INFINITY, |t| score_displacement_with(t, gt, scoring));
        SampledResponse {
            tokens,
            trajectory,
            logprob_policy,
            displacement,
        }
    }
}

/// Draws `k` responses for one context and scores them against `gt`.
pub fn sample_responses<R: Rng + ?Sized>(
    policy: &ToyPolicy,
    phi: &[f64],
    gt: &Trajectory,
    k: usize,
    temperature: Option<f64>,
    scoring: DisplacementScoring,
    rng: &mut R,
) -> Vec<SampledResponse> {
    let sampler = ContextSampler::new(policy, phi, temperature);
    (0..k).map(|_| sampler.response(gt, scoring, rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PairError {
    #[error("need at least 2 responses, got {0}")]
    TooFew(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Every response has the same displacement.
    NoPreference,
    /// No response decodes.
    AllInvalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairChoice {
    Pair { preferred: usize, dispreferred: usize },
    Skip(SkipReason),
}

/// Lowest-displacement versus highest-displacement response; ties go to
/// the lowest index.
pub fn build_pair(responses: &[SampledResponse]) -> Result<PairChoice, PairError> {
    if responses.len() < 2 {
        return Err(PairError::TooFew(responses.len()));
    }
    let (mut lo, mut hi) = (0, 0);
    for (i, r) in responses.iter().enumerate() {
        if r.displacement < responses[lo].displacement {
            lo = i;
        }
        if r.displacement > responses[hi].displacement {
            hi = i;
        }
    }
    let (dmin, dmax) = (responses[lo].displacement, responses[hi].displacement);
    Ok(if dmin.is_infinite() {
        PairChoice::Skip(SkipReason::AllInvalid)
    } else if dmin == dmax {
        PairChoice::Skip(SkipReason::NoPreference)
    } else {
        PairChoice::Pair {
            preferred: lo,
            dispreferred: hi,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub context_id: u64,
    pub preferred: SampledResponse,
    pub dispreferred: SampledResponse,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Waypoint;

    fn resp(d: f64) -> SampledResponse {
        SampledResponse {
            tokens: vec![],
            trajectory: None,
            logprob_policy: 0.0,
            displacement: d,
        }
    }

    #[test]
    fn pair_rule() {
        let r: Vec<_> = [0.5, 0.2, 0.9].map(resp).into();
        assert_eq!(build_pair(&r), Ok(PairChoice::Pair { preferred: 1, dispreferred: 2 }));
        let r: Vec<_> = [0.3, 0.3, 0.7].map(resp).into();
        assert_eq!(build_pair(&r), Ok(PairChoice::Pair { preferred: 0, dispreferred: 2 }));
        let r: Vec<_> = [0.7, 0.3, 0.7].map(resp).into();
        assert_eq!(build_pair(&r), Ok(PairChoice::Pair { preferred: 1, dispreferred: 0 }));
        let r: Vec<_> = [0.4; 4].map(resp).into();
        assert_eq!(build_pair(&r), Ok(PairChoice::Skip(SkipReason::NoPreference)));
        let r: Vec<_> = [f64::INFINITY; 2].map(resp).into();
        assert_eq!(build_pair(&r), Ok(PairChoice::Skip(SkipReason::AllInvalid)));
        let r: Vec<_> = [0.1, f64::INFINITY].map(resp).into();
        assert_eq!(build_pair(&r), Ok(PairChoice::Pair { preferred: 0, dispreferred: 1 }));
        assert_eq!(build_pair(&[resp(0.0)]), Err(PairError::TooFew(1)));
    }

    #[test]
    fn displacement_examples() {
        let gt = Trajectory::from_fn(|i| Waypoint::new(0.0, i as f64)).unwrap();
        assert_eq!(score_displacement(&gt, &gt), 0.0);
        assert_eq!(score_displacement(&gt.translated(1.0, 0.0), &gt), 1.0);
        let off = [0.0, 0.2, 0.0, 0.4, 0.0, 0.6];
        let resp = Trajectory::from_fn(|i| Waypoint::new(off[i], i as f64)).unwrap();
        assert!((score_displacement(&resp, &gt) - 0.4).abs() < 1e-15);
        assert!((score_displacement_with(&resp, &gt, DisplacementScoring::AllSteps) - 0.2).abs() < 1e-15);
    }
}

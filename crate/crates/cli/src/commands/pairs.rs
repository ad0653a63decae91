use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use trajplan::synthetic::context_from_sample;
use trajplan::tpo::{
    build_pair, context_rng, ContextSampler, DisplacementScoring, PairChoice, PreferencePair, SkipReason,
};

use super::{load_policy, load_sorted};
use crate::output::{emit, Record};
use crate::{CliError, Format, GlobalArgs, ScoringArg};

#[derive(Serialize)]
struct PairBody<'a> {
    sample_id: &'a str,
    #[serde(flatten)]
    pair: PreferencePair,
}

#[derive(Serialize)]
struct SkipBody<'a> {
    sample_id: &'a str,
    context_id: u64,
    reason: SkipReason,
}

#[derive(Serialize)]
struct Summary {
    contexts: usize,
    pairs_built: usize,
    pairs_skipped: usize,
    skipped_no_preference: usize,
    skipped_all_invalid: usize,
    /// Sampled responses that did not decode.
    invalid_responses: usize,
    /// Means over built pairs; `null` when none was built.
    preferred_displacement_mean: Option<f64>,
    /// Over finite dispreferred displacements only.
    dispreferred_displacement_mean: Option<f64>,
    dispreferred_invalid: usize,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "null".to_string(), |v| v.to_string())
}

pub fn pairs(
    g: &GlobalArgs,
    dataset: &Path,
    policy: &Path,
    k: usize,
    temperature: f64,
    scoring: ScoringArg,
) -> Result<(), CliError> {
    if k < 2 {
        return Err(CliError::validation(format!("-k must be at least 2, got {k}")));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(CliError::validation(format!("--temperature must be positive and finite, got {temperature}")));
    }
    let samples = load_sorted(dataset)?;
    let policy = load_policy(policy)?;
    let scoring = match scoring {
        ScoringArg::PerSecond => DisplacementScoring::PerSecond,
        ScoringArg::AllSteps => DisplacementScoring::AllSteps,
    };
    let seed = g.seed();

    // Context ids are positions in sample-id order.
    let outcomes: Vec<(Vec<bool>, Result<PreferencePair, SkipReason>)> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let ctx = context_from_sample(i as u64, s);
            let sampler = ContextSampler::new(&policy, &policy.features(&ctx), Some(temperature));
            let mut rng = context_rng(seed, 0, ctx.id);
            let responses: Vec<_> = (0..k)
                .map(|_| sampler.response(&s.gt_trajectory, scoring, &mut rng))
                .collect();
            let valid = responses.iter().map(|r| r.is_valid()).collect();
            let outcome = match build_pair(&responses).expect("k >= 2") {
                PairChoice::Pair { preferred, dispreferred } => Ok(PreferencePair {
                    context_id: ctx.id,
                    preferred: responses[preferred].clone(),
                    dispreferred: responses[dispreferred].clone(),
                }),
                PairChoice::Skip(reason) => Err(reason),
            };
            (valid, outcome)
        })
        .collect();

    let mut text = String::new();
    let (mut pref, mut dispref) = (Vec::new(), Vec::new());
    let (mut no_pref, mut all_invalid, mut invalid, mut dispref_invalid) = (0, 0, 0, 0);
    for (i, (s, (valid, outcome))) in samples.iter().zip(&outcomes).enumerate() {
        invalid += valid.iter().filter(|v| !**v).count();
        match outcome {
            Ok(pair) => {
                pref.push(pair.preferred.displacement);
                if pair.dispreferred.displacement.is_finite() {
                    dispref.push(pair.dispreferred.displacement);
                } else {
                    dispref_invalid += 1;
                }
                match g.format {
                    Format::Records => text.push_str(
                        &Record::new(
                            "preference_pair",
                            PairBody {
                                sample_id: &s.sample_id,
                                pair: pair.clone(),
                            },
                        )
                        .line(),
                    ),
                    Format::Text => text.push_str(&format!(
                        "{}\tpair\t{}\t{}\n",
                        s.sample_id, pair.preferred.displacement, pair.dispreferred.displacement
                    )),
                }
            }
            Err(reason) => {
                match reason {
                    SkipReason::NoPreference => no_pref += 1,
                    SkipReason::AllInvalid => all_invalid += 1,
                }
                let body = SkipBody {
                    sample_id: &s.sample_id,
                    context_id: i as u64,
                    reason: *reason,
                };
                match g.format {
                    Format::Records => text.push_str(&Record::new("pair_skipped", body).line()),
                    Format::Text => text.push_str(&format!(
                        "{}\tskip\t{}\n",
                        s.sample_id,
                        serde_json::to_value(reason).expect("serializes").as_str().unwrap_or_default()
                    )),
                }
            }
        }
    }

    let summary = Summary {
        contexts: samples.len(),
        pairs_built: pref.len(),
        pairs_skipped: no_pref + all_invalid,
        skipped_no_preference: no_pref,
        skipped_all_invalid: all_invalid,
        invalid_responses: invalid,
        preferred_displacement_mean: mean(&pref),
        dispreferred_displacement_mean: mean(&dispref),
        dispreferred_invalid: dispref_invalid,
    };
    if summary.pairs_built == 0 {
        g.log(1, || "warning: every pair skipped".to_string());
    }
    match g.format {
        Format::Records => text.push_str(&Record::new("pairs_summary", &summary).line()),
        Format::Text => {
            text.push_str(&format!("contexts = {}\n", summary.contexts));
            text.push_str(&format!("pairs_built = {}\n", summary.pairs_built));
            text.push_str(&format!("pairs_skipped = {}\n", summary.pairs_skipped));
            text.push_str(&format!("skipped_no_preference = {}\n", summary.skipped_no_preference));
            text.push_str(&format!("skipped_all_invalid = {}\n", summary.skipped_all_invalid));
            text.push_str(&format!("invalid_responses = {}\n", summary.invalid_responses));
            text.push_str(&format!("preferred_displacement_mean = {}\n", opt(summary.preferred_displacement_mean)));
            text.push_str(&format!(
                "dispreferred_displacement_mean = {}\n",
                opt(summary.dispreferred_displacement_mean)
            ));
            text.push_str(&format!("dispreferred_invalid = {}\n", summary.dispreferred_invalid));
        }
    }
    emit(g.out.as_deref(), &text)
}

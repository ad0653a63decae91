//! Reasoning synthesis and verification against a pluggable text generator.
//!
//! A reasoning candidate is accepted when a verifier, given the scene and the
//! reasoning, proposes the ground-truth action for the first second, or the
//! cumulative action over any `[0, t]` window.

use std::fmt::Write;

use thiserror::Error;

use crate::geometry::CriticalObjectConfig;
use crate::meta_actions::{label_cumulative_sequence, LabelerThresholds, LateralAction, LongitudinalAction, MetaAction};

use super::completion::{parse_action_reply, ParseError};
use super::prompt::{render_ego, render_perception};
use super::SceneSample;

const REASONING_SYSTEM_PROMPT: &str = include_str!("../../assets/reasoning_system_prompt.txt");
const REASONING_USER_PROMPT: &str = include_str!("../../assets/reasoning_user_prompt.txt");
const VERIFY_SYSTEM_PROMPT: &str = include_str!("../../assets/verify_system_prompt.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeneratorError {
    #[error("generator unavailable: {0}")]
    Unavailable(String),
    #[error("generation failed: {0}")]
    Failed(String),
}

/// Synchronous text generation. Implementations must tolerate concurrent
/// calls.
pub trait GeneratorClient: Send + Sync {
    fn generate(&self, prompt: &str, temperature: f64, seed: u64) -> Result<String, GeneratorError>;
}

/// Deterministic offline generator.
#[derive(Debug, Clone, PartialEq)]
pub enum MockGenerator {
    /// Returns the same text for every prompt.
    Fixed(String),
    /// Fills a situation-report template chosen from a hash of the prompt and
    /// seed; verification prompts are answered with `verify_reply`.
    Template { verify_reply: MetaAction },
}

impl Default for MockGenerator {
    fn default() -> Self {
        MockGenerator::Template {
            verify_reply: MetaAction::CRUISE,
        }
    }
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

const EFFECTS: [&str; 4] = [
    "The nearest vehicle ahead holds its lane; the gap stays comfortable.",
    "A slower vehicle ahead may force a speed reduction soon.",
    "No object is close enough to constrain the next few seconds.",
    "Traffic on the adjacent side is moving in parallel and poses little risk.",
];
const ROAD: [&str; 3] = [
    "Lane markings are clear and the surface is dry.",
    "The lane curves gently ahead; visibility is good.",
    "An intersection lies ahead with no visible signal change.",
];
const SNAPSHOT: [&str; 3] = [
    "I keep the current lane and adapt speed to the lead traffic.",
    "I follow the road geometry and keep a safe margin.",
    "The scene is calm; continuing the current plan is reasonable.",
];

impl GeneratorClient for MockGenerator {
    fn generate(&self, prompt: &str, _temperature: f64, seed: u64) -> Result<String, GeneratorError> {
        match self {
            MockGenerator::Fixed(text) => Ok(text.clone()),
            MockGenerator::Template { verify_reply } => {
                if prompt.starts_with(VERIFY_SYSTEM_PROMPT) {
                    return Ok(format!("({verify_reply}, 3)"));
                }
                let h = fnv1a(prompt.as_bytes(), seed);
                Ok(format!(
                    "1) Potential effects\n   {}\n\n2) Road & Contextual Factors\n   {}\n\n3) Situation Snapshot\n   {}",
                    EFFECTS[(h % 4) as usize],
                    ROAD[((h >> 8) % 3) as usize],
                    SNAPSHOT[((h >> 16) % 3) as usize]
                ))
            }
        }
    }
}

/// Placeholder for a networked generator; always unavailable offline.
#[derive(Debug, Clone, Default)]
pub struct ExternalServiceStub {
    pub endpoint: String,
}

impl GeneratorClient for ExternalServiceStub {
    fn generate(&self, _prompt: &str, _temperature: f64, _seed: u64) -> Result<String, GeneratorError> {
        Err(GeneratorError::Unavailable(format!(
            "no network access for '{}'",
            self.endpoint
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub temperature: f64,
    pub seed: u64,
    pub thresholds: LabelerThresholds,
    /// Accept matches against cumulative `[0, t]` labels.
    pub cumulative_clause: bool,
    pub critical: Option<CriticalObjectConfig>,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            seed: 0,
            thresholds: LabelerThresholds::default(),
            cumulative_clause: true,
            critical: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcceptClause {
    /// Matched the local label of the first second.
    Exact,
    /// Matched the cumulative label over `[0, horizon_s]`.
    Cumulative { horizon_s: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    Mismatch { proposed: MetaAction },
    Unparseable { reply: String, error: ParseError },
    Generator(GeneratorError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReasoningVerdict {
    Accepted {
        reasoning: String,
        clause: AcceptClause,
        confidence: Option<f64>,
    },
    Rejected {
        reasoning: Option<String>,
        reason: RejectReason,
    },
}

impl ReasoningVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, ReasoningVerdict::Accepted { .. })
    }
}

fn object_summary(sample: &SceneSample, critical: Option<&CriticalObjectConfig>) -> String {
    let objects = match critical {
        Some(cfg) => crate::geometry::select_critical_objects(&sample.objects, sample.ego.velocity, cfg),
        None => sample.objects.clone(),
    };
    render_perception(&objects)
}

fn camera_lines(out: &mut String, sample: &SceneSample) {
    if sample.cameras.is_empty() {
        return;
    }
    out.push_str("Camera Views:\n");
    for (view, path) in &sample.cameras {
        let _ = writeln!(out, "{view}: {path}");
    }
}

/// Reasoning-synthesis prompt with camera views given as path text.
pub fn reasoning_prompt(sample: &SceneSample, critical: Option<&CriticalObjectConfig>) -> String {
    let mut out = format!("{REASONING_SYSTEM_PROMPT}\n\n{REASONING_USER_PROMPT}");
    camera_lines(&mut out, sample);
    let _ = write!(out, "\nEgo state:\n{}\n", render_ego(&sample.ego));
    if !sample.objects.is_empty() {
        let _ = write!(out, "\nKey-Object Summary:\n{}\n", object_summary(sample, critical));
    }
    out.push_str("Step-by-step reasoning:");
    out
}

/// Verification prompt asking for one meta-action and a confidence.
pub fn verification_prompt(sample: &SceneSample, reasoning: &str, critical: Option<&CriticalObjectConfig>) -> String {
    let mut out = format!(
        "{VERIFY_SYSTEM_PROMPT}\n\nKey object description:\n{}\nReasoning context:\n{}\nEgo state: {}\nEgo speed: {} m/s\n",
        object_summary(sample, critical),
        reasoning,
        render_ego(&sample.ego),
        sample.ego.speed()
    );
    camera_lines(&mut out, sample);
    out.push_str("Meta-action and confidence:");
    out
}

fn rejected(reasoning: Option<String>, reason: RejectReason) -> ReasoningVerdict {
    ReasoningVerdict::Rejected { reasoning, reason }
}

/// Uses the stored reasoning, or generates one, then asks the generator to
/// act on it and compares the proposal with the ground-truth labels.
pub fn validate_reasoning(
    sample: &SceneSample,
    gen: &dyn GeneratorClient,
    opts: &ValidationOptions,
) -> ReasoningVerdict {
    let critical = opts.critical.as_ref();
    let reasoning = match &sample.reasoning {
        Some(r) => r.clone(),
        None => match gen.generate(&reasoning_prompt(sample, critical), opts.temperature, opts.seed) {
            Ok(r) => r,
            Err(e) => return rejected(None, RejectReason::Generator(e)),
        },
    };
    let prompt = verification_prompt(sample, &reasoning, critical);
    let reply = match gen.generate(&prompt, opts.temperature, opts.seed) {
        Ok(r) => r,
        Err(e) => return rejected(Some(reasoning), RejectReason::Generator(e)),
    };
    let (proposed, confidence) = match parse_action_reply(&reply) {
        Ok(v) => v,
        Err(error) => return rejected(Some(reasoning), RejectReason::Unparseable { reply, error }),
    };
    let clause = if proposed == sample.gt_actions.actions[0] {
        Some(AcceptClause::Exact)
    } else if opts.cumulative_clause {
        label_cumulative_sequence(&sample.poses_or_derived(), &opts.thresholds)
            .ok()
            .and_then(|cum| cum.actions.iter().position(|a| *a == proposed))
            .map(|t| AcceptClause::Cumulative { horizon_s: t + 1 })
    } else {
        None
    };
    match clause {
        Some(clause) => ReasoningVerdict::Accepted {
            reasoning,
            clause,
            confidence,
        },
        None => rejected(Some(reasoning), RejectReason::Mismatch { proposed }),
    }
}

/// Convenience for building a reply in the verifier's format.
pub fn format_action_reply(lateral: LateralAction, longitudinal: LongitudinalAction, confidence: f64) -> String {
    format!("({}, {})", MetaAction::new(lateral, longitudinal), confidence)
}

//! Scene records, prompt construction, completion parsing and reasoning
//! validation.
//!
//! Records are stored one JSON object per line. The on-disk layout is
//! described by [`RawRecord`]; [`SceneSample`] is the validated in-memory
//! form.

mod completion;
mod occupancy;
mod prompt;
mod reasoning;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    EgoState, GeometryError, ObjectState, Trajectory, VisibilityMask, Waypoint, HORIZON_S, RATE_HZ,
};
use crate::meta_actions::{ActionSequence, Formulation, MetaAction, Pose, POSE_SAMPLES};

pub use completion::{
    format_actions, format_number, format_trajectory, parse_action_reply, parse_model_output,
    serialize_completion, ModelOutput, ParseError, Section,
};
pub use occupancy::{load_occupancy, save_occupancy, OccupancyRecord};
pub use prompt::{
    build_prompt, build_prompt_with, render_ego, render_perception, render_prediction, PromptBundle,
    COORDINATE_BLOCK, EMPTY_PERCEPTION, META_ACTION_POOL_BLOCK, TASK_BLOCK,
};
pub use reasoning::{
    format_action_reply, reasoning_prompt, validate_reasoning, verification_prompt, AcceptClause, ExternalServiceStub,
    GeneratorClient, GeneratorError, MockGenerator, ReasoningVerdict, RejectReason, ValidationOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One planning instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub sample_id: String,
    pub split: Split,
    pub ego: EgoState,
    pub objects: Vec<ObjectState>,
    pub gt_trajectory: Trajectory,
    pub gt_mask: VisibilityMask,
    /// Local per-interval labels.
    pub gt_actions: ActionSequence,
    pub reasoning: Option<String>,
    /// Occupancy file, relative to the dataset file's directory.
    pub occupancy_path: Option<String>,
    /// Yaw/speed at t = 0..3 s, when the producer recorded them.
    pub poses: Option<[Pose; POSE_SAMPLES]>,
    /// Camera view name to image path; never decoded.
    pub cameras: BTreeMap<String, String>,
}

impl SceneSample {
    /// Recorded poses, or poses estimated from the ground-truth trajectory.
    pub fn poses_or_derived(&self) -> [Pose; POSE_SAMPLES] {
        self.poses
            .unwrap_or_else(|| derive_poses(&self.ego, &self.gt_trajectory))
    }
}

/// Estimates yaw/speed at each whole second from the 0.5 s segment ending
/// there. Yaw is measured counter-clockwise (towards -x) from the
/// longitudinal axis and offset by the ego's current yaw.
pub fn derive_poses(ego: &EgoState, gt: &Trajectory) -> [Pose; POSE_SAMPLES] {
    let dt = 1.0 / RATE_HZ as f64;
    let mut poses = [Pose::new(ego.yaw_deg, ego.speed()); POSE_SAMPLES];
    for k in 1..=HORIZON_S {
        let end = gt[k * RATE_HZ - 1];
        let start = gt[k * RATE_HZ - 2];
        let (dx, dy) = (end.x - start.x, end.y - start.y);
        let len = dx.hypot(dy);
        let yaw = if len > 1e-6 {
            ego.yaw_deg + (-dx).atan2(dy).to_degrees()
        } else {
            poses[k - 1].yaw_deg
        };
        poses[k] = Pose::new(yaw, len / dt);
    }
    poses
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEgo {
    pub velocity: [f64; 2],
    pub acceleration: [f64; 2],
    pub yaw_deg: f64,
    pub history: Vec<[f64; 2]>,
    pub mission_goal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawObject {
    pub id: String,
    pub class: String,
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub future: Option<Vec<[f64; 2]>>,
}

/// On-disk record layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub sample_id: String,
    pub split: Split,
    pub ego: RawEgo,
    pub objects: Vec<RawObject>,
    pub gt_trajectory: Vec<[f64; 2]>,
    pub gt_mask: Vec<u8>,
    pub gt_actions: Vec<[String; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poses: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cameras: BTreeMap<String, String>,
}

/// Validation failure of a single record.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("record {index} (line {line}){}: {message}", field.as_ref().map(|f| format!(", field {f}")).unwrap_or_default())]
pub struct RecordError {
    /// 0-based record index.
    pub index: usize,
    /// 1-based line number.
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{} invalid record(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<RecordError>),
    #[error("bad occupancy file {path}: {message}")]
    Occupancy { path: String, message: String },
}

type FieldResult<T> = Result<T, (String, String)>;

fn field_err(field: impl Into<String>, message: impl ToString) -> (String, String) {
    (field.into(), message.to_string())
}

fn waypoint(field: &str, [x, y]: [f64; 2]) -> FieldResult<Waypoint> {
    Waypoint::checked(x, y).map_err(|e| field_err(field, e))
}

fn trajectory(field: &str, raw: &[[f64; 2]]) -> FieldResult<Trajectory> {
    let points = raw
        .iter()
        .map(|&p| waypoint(field, p))
        .collect::<Result<Vec<_>, _>>()?;
    Trajectory::try_from(points).map_err(|e| match e {
        GeometryError::WrongLength { expected, found } => {
            field_err(field, format!("expected {expected} waypoints, found {found}"))
        }
        other => field_err(field, other),
    })
}

impl RawRecord {
    pub fn validate(&self) -> Result<SceneSample, (String, String)> {
        if self.sample_id.is_empty() {
            return Err(field_err("sample_id", "empty identifier"));
        }
        let history = self
            .ego
            .history
            .iter()
            .map(|&p| waypoint("ego.history", p))
            .collect::<Result<Vec<_>, _>>()?;
        let ego = EgoState {
            velocity: self.ego.velocity,
            acceleration: self.ego.acceleration,
            yaw_deg: self.ego.yaw_deg,
            history,
            mission_goal: self.ego.mission_goal.clone(),
        };
        ego.validate().map_err(|e| field_err("ego", e))?;

        let mut objects = Vec::with_capacity(self.objects.len());
        for (i, o) in self.objects.iter().enumerate() {
            let name = |f: &str| format!("objects[{i}].{f}");
            let future = match &o.future {
                Some(f) => Some(trajectory(&name("future"), f)?),
                None => None,
            };
            let obj = ObjectState {
                id: o.id.clone(),
                class_label: o.class.clone(),
                position: waypoint(&name("position"), o.position)?,
                velocity: o.velocity,
                future,
                history: None,
            };
            obj.validate().map_err(|e| field_err(format!("objects[{i}]"), e))?;
            objects.push(obj);
        }

        let gt_trajectory = trajectory("gt_trajectory", &self.gt_trajectory)?;
        let gt_mask =
            VisibilityMask::try_from(self.gt_mask.clone()).map_err(|e| field_err("gt_mask", e))?;
        let actions = self
            .gt_actions
            .iter()
            .map(|[lat, lon]| -> FieldResult<MetaAction> {
                Ok(MetaAction::new(
                    lat.parse().map_err(|e| field_err("gt_actions", e))?,
                    lon.parse().map_err(|e| field_err("gt_actions", e))?,
                ))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let gt_actions =
            ActionSequence::from_vec(actions, Formulation::Local).map_err(|e| field_err("gt_actions", e))?;

        let poses = match &self.poses {
            None => None,
            Some(raw) => {
                if raw.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(field_err("poses", "non-finite value"));
                }
                let arr: [Pose; POSE_SAMPLES] = raw
                    .iter()
                    .map(|&p| Pose::from(p))
                    .collect::<Vec<_>>()
                    .try_into()
                    .map_err(|v: Vec<Pose>| {
                        field_err("poses", format!("expected {POSE_SAMPLES} poses, found {}", v.len()))
                    })?;
                Some(arr)
            }
        };

        Ok(SceneSample {
            sample_id: self.sample_id.clone(),
            split: self.split,
            ego,
            objects,
            gt_trajectory,
            gt_mask,
            gt_actions,
            reasoning: self.reasoning.clone(),
            occupancy_path: self.occupancy_path.clone(),
            poses,
            cameras: self.cameras.clone(),
        })
    }
}

impl From<&SceneSample> for RawRecord {
    fn from(s: &SceneSample) -> Self {
        let pts = |t: &Trajectory| t.iter().map(|&w| w.into()).collect::<Vec<[f64; 2]>>();
        RawRecord {
            sample_id: s.sample_id.clone(),
            split: s.split,
            ego: RawEgo {
                velocity: s.ego.velocity,
                acceleration: s.ego.acceleration,
                yaw_deg: s.ego.yaw_deg,
                history: s.ego.history.iter().map(|&w| w.into()).collect(),
                mission_goal: s.ego.mission_goal.clone(),
            },
            objects: s
                .objects
                .iter()
                .map(|o| RawObject {
                    id: o.id.clone(),
                    class: o.class_label.clone(),
                    position: o.position.into(),
                    velocity: o.velocity,
                    future: o.future.as_ref().map(pts),
                })
                .collect(),
            gt_trajectory: pts(&s.gt_trajectory),
            gt_mask: s.gt_mask.into(),
            gt_actions: s
                .gt_actions
                .actions
                .iter()
                .map(|a| [a.lateral.to_string(), a.longitudinal.to_string()])
                .collect(),
            reasoning: s.reasoning.clone(),
            occupancy_path: s.occupancy_path.clone(),
            poses: s.poses.map(|p| p.iter().map(|&p| p.into()).collect()),
            cameras: s.cameras.clone(),
        }
    }
}

/// Parses newline-delimited records. Blank lines are skipped. Every invalid
/// record is reported, not just the first.
pub fn parse_samples(text: &str) -> Result<Vec<SceneSample>, DatasetError> {
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    let records = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    for (index, (line_no, record)) in records.enumerate() {
        let line = line_no + 1;
        let outcome = serde_json::from_str::<RawRecord>(record)
            .map_err(|e| (None, e.to_string()))
            .and_then(|raw| raw.validate().map_err(|(f, m)| (Some(f), m)));
        match outcome {
            Ok(sample) => samples.push(sample),
            Err((field, message)) => errors.push(RecordError {
                index,
                line,
                field,
                message,
            }),
        }
    }
    if errors.is_empty() {
        Ok(samples)
    } else {
        Err(DatasetError::Invalid(errors))
    }
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<SceneSample>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_samples(&text)
}

/// One JSON line per sample, each terminated by `\n`.
pub fn samples_to_jsonl(samples: &[SceneSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(&RawRecord::from(s)).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn save_samples(path: impl AsRef<Path>, samples: &[SceneSample]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    std::fs::write(path, samples_to_jsonl(samples)).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::meta_actions::{LateralAction, LongitudinalAction};

    pub(crate) fn sample(id: &str) -> SceneSample {
        SceneSample {
            sample_id: id.to_string(),
            split: Split::Train,
            ego: EgoState {
                velocity: [0.0, 5.0],
                acceleration: [0.0, 0.25],
                yaw_deg: 90.0,
                history: vec![Waypoint::new(0.0, -5.0), Waypoint::new(0.0, -2.5)],
                mission_goal: "go straight".into(),
            },
            objects: vec![ObjectState {
                id: "7".into(),
                class_label: "car".into(),
                position: Waypoint::new(3.5, 12.0),
                velocity: [0.0, 4.0],
                future: Some(Trajectory::from_fn(|i| Waypoint::new(3.5, 12.0 + 2.0 * (i + 1) as f64)).unwrap()),
                history: None,
            }],
            gt_trajectory: Trajectory::from_fn(|i| Waypoint::new(0.0, 2.5 * (i + 1) as f64)).unwrap(),
            gt_mask: VisibilityMask::ALL_VISIBLE,
            gt_actions: ActionSequence::local([MetaAction::CRUISE; 3]),
            reasoning: Some("The lead car keeps its distance.".into()),
            occupancy_path: None,
            poses: None,
            cameras: BTreeMap::new(),
        }
    }

    #[test]
    fn round_trip() {
        let mut b = sample("b");
        b.poses = Some([Pose::new(0.0, 5.0); 4]);
        b.occupancy_path = Some("occ/b.json".into());
        b.cameras.insert("front".into(), "img/front.jpg".into());
        let samples = vec![sample("a"), b];
        let text = samples_to_jsonl(&samples);
        assert_eq!(parse_samples(&text).unwrap(), samples);
    }

    fn raw_json(s: &SceneSample) -> serde_json::Value {
        serde_json::to_value(RawRecord::from(s)).unwrap()
    }

    fn errors_of(lines: &[serde_json::Value]) -> Vec<RecordError> {
        let text: String = lines.iter().map(|v| format!("{v}\n")).collect();
        match parse_samples(&text) {
            Err(DatasetError::Invalid(e)) => e,
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn five_waypoints_is_rejected_with_field_and_index() {
        let good = raw_json(&sample("a"));
        let mut bad = raw_json(&sample("b"));
        bad["gt_trajectory"].as_array_mut().unwrap().pop();
        let errs = errors_of(&[good, bad]);
        assert_eq!(errs.len(), 1);
        assert_eq!(errs[0].index, 1);
        assert_eq!(errs[0].line, 2);
        assert_eq!(errs[0].field.as_deref(), Some("gt_trajectory"));
        assert!(errs[0].message.contains("found 5"));
    }

    #[test]
    fn spaced_action_names_normalize() {
        let mut v = raw_json(&sample("a"));
        v["gt_actions"][0] = serde_json::json!(["TURN LEFT", "brake to stop"]);
        let parsed = parse_samples(&format!("{v}\n")).unwrap();
        assert_eq!(
            parsed[0].gt_actions.actions[0],
            MetaAction::new(LateralAction::TurnLeft, LongitudinalAction::BrakeToStop)
        );
        assert!(samples_to_jsonl(&parsed).contains(r#"["TURN_LEFT","BRAKE_TO_STOP"]"#));
    }

    #[test]
    fn validation_failures() {
        let mut unknown = raw_json(&sample("a"));
        unknown["gt_actions"][1][0] = serde_json::json!("DRIFT");
        let mut missing = raw_json(&sample("b"));
        missing.as_object_mut().unwrap().remove("gt_mask");
        let mut malformed = raw_json(&sample("c"));
        malformed["ego"]["yaw_deg"] = serde_json::json!("ninety");
        let mut two_actions = raw_json(&sample("d"));
        two_actions["gt_actions"].as_array_mut().unwrap().pop();
        let errs = errors_of(&[unknown, missing, malformed, two_actions]);
        assert_eq!(errs.len(), 4);
        assert_eq!(errs[0].field.as_deref(), Some("gt_actions"));
        assert!(errs[0].message.contains("DRIFT"));
        assert!(errs[1].message.contains("gt_mask"));
        assert!(errs[2].message.contains("invalid type"));
        assert!(errs[3].message.contains("found 2"));

        let broken = "{\"sample_id\": 1.2.3}\n";
        assert!(matches!(parse_samples(broken), Err(DatasetError::Invalid(_))));
    }

    #[test]
    fn derived_poses_follow_the_path() {
        let s = sample("a");
        let poses = derive_poses(&s.ego, &s.gt_trajectory);
        for p in poses {
            assert!((p.yaw_deg - 90.0).abs() < 1e-12);
            assert!((p.speed - 5.0).abs() < 1e-12);
        }
        // Drifting toward -x is a left turn.
        let left = Trajectory::from_fn(|i| {
            let t = (i + 1) as f64;
            Waypoint::new(-0.2 * t * t, 2.5 * t)
        })
        .unwrap();
        let poses = derive_poses(&s.ego, &left);
        assert!(poses[3].yaw_deg > poses[1].yaw_deg);
    }
}

//! Training prompt construction.

use serde::{Deserialize, Serialize};

use crate::geometry::{select_critical_objects, CriticalObjectConfig, EgoState, ObjectState};

use super::completion::{format_number, format_trajectory, serialize_completion, ModelOutput};
use super::SceneSample;

const CAMERA_PREAMBLE: &str = "You are provided with six synchronized camera images captured from the ego-vehicle \
in the following order: rear, rear-left, rear-right, front, front-left, and front-right. ";

pub const TASK_BLOCK: &str = concat!(
    "<task> First, formulate a concise context that integrates scene perception and short-term motion prediction. ",
    "You should provide approximate 2-D Bird-Eye-View coordinates for every notable object's future waypoints in 3 seconds ",
    "in your reasoning process. The higher the ego velocity is, the more distant objects you should consider. ",
    "Then, based on perception and prediction, provide your chain-of-thought reasoning about the current driving scene, ",
    "integrating potential effects of the notable objects, road and contextual factors, semantic grounding, ",
    "and the driver's mental picture. ",
    "After that, derive an appropriate driving decision sequence for 3 seconds ahead (one decision per second) and return it exactly ",
    "as a list of lists in the format [['<LATERAL>', '<LONGITUDINAL>'], ['<LATERAL>', '<LONGITUDINAL>'], ['<LATERAL>', '<LONGITUDINAL>']]. ",
    "Finally, based on all context and the derived driving decisions, plan a safe, feasible 3-second trajectory of 6 waypoints and return it exactly ",
    "as a list of waypoint tuples in the format [(x1,y1), (x2,y2), (x3,y3), (x4,y4), (x5,y5), (x6,y6)] ",
    "(one waypoint per 0.5 s). </task>",
);

pub const META_ACTION_POOL_BLOCK: &str = concat!(
    "<meta action pool> Permissible lateral actions: VEER_LEFT | VEER_RIGHT | CHANGE_LANE_LEFT | CHANGE_LANE_RIGHT | STRAIGHT | TURN_LEFT | TURN_RIGHT. ",
    "Permissible longitudinal actions: ACCELERATE | MAINTAIN | DECELERATE | BRAKE_TO_STOP. </meta action pool>",
);

pub const COORDINATE_BLOCK: &str = concat!(
    "<coordinate instruction> Coordinates: X-axis is lateral (left/right), Y-axis is longitudinal (forward). ",
    "You are at (0,0). Units: meters. </coordinate instruction>",
);

/// Perception text when no object is listed.
pub const EMPTY_PERCEPTION: &str = "none";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub human_text: String,
    pub expected_completion: Option<String>,
}

fn pair(a: f64, b: f64) -> String {
    format!("({},{})", format_number(a), format_number(b))
}

/// `speed S m/s, acceleration (ax,ay) m/s^2, yaw Y deg, 2 s history [...], mission goal: G`
pub fn render_ego(ego: &EgoState) -> String {
    let history: Vec<String> = ego.history.iter().map(|w| pair(w.x, w.y)).collect();
    format!(
        "speed {} m/s, acceleration {} m/s^2, yaw {} deg, 2 s history [{}], mission goal: {}",
        format_number(ego.speed()),
        pair(ego.acceleration[0], ego.acceleration[1]),
        format_number(ego.yaw_deg),
        history.join(", "),
        ego.mission_goal
    )
}

/// One `class at (x, y), velocity (vx, vy)` entry per object, in order.
pub fn render_perception(objects: &[ObjectState]) -> String {
    if objects.is_empty() {
        return EMPTY_PERCEPTION.to_string();
    }
    objects
        .iter()
        .map(|o| {
            format!(
                "{} at ({}, {}), velocity ({}, {})",
                o.class_label,
                format_number(o.position.x),
                format_number(o.position.y),
                format_number(o.velocity[0]),
                format_number(o.velocity[1])
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Object forecasts for the `<prediction>` block; `None` when no object
/// carries a future.
pub fn render_prediction(objects: &[ObjectState]) -> Option<String> {
    let lines: Vec<String> = objects
        .iter()
        .filter_map(|o| {
            o.future
                .as_ref()
                .map(|f| format!("{} {}: {}", o.class_label, o.id, format_trajectory(f)))
        })
        .collect();
    (!lines.is_empty()).then(|| lines.join("; "))
}

fn human_text(ego: &str, perception: &str) -> String {
    format!(
        "{CAMERA_PREAMBLE}The current state information of the ego-vehicle is: {ego}. \
The current perceived notable objects are listed here: {perception}. \
{TASK_BLOCK} {META_ACTION_POOL_BLOCK} {COORDINATE_BLOCK}"
    )
}

/// Prompt over all objects of the sample.
pub fn build_prompt(sample: &SceneSample) -> PromptBundle {
    build_prompt_with(sample, None)
}

/// Prompt whose perception list is optionally reduced to critical objects.
/// The target completion is built from the ground truth.
pub fn build_prompt_with(sample: &SceneSample, critical: Option<&CriticalObjectConfig>) -> PromptBundle {
    let objects = match critical {
        Some(cfg) => select_critical_objects(&sample.objects, sample.ego.velocity, cfg),
        None => sample.objects.clone(),
    };
    let completion = ModelOutput {
        prediction: render_prediction(&objects),
        think: sample.reasoning.clone(),
        actions: sample.gt_actions,
        trajectory: sample.gt_trajectory,
    };
    PromptBundle {
        human_text: human_text(&render_ego(&sample.ego), &render_perception(&objects)),
        expected_completion: Some(serialize_completion(&completion)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::tests::sample;
    use crate::geometry::Waypoint;

    #[test]
    fn deterministic() {
        let s = sample("a");
        assert_eq!(build_prompt(&s), build_prompt(&s));
    }

    #[test]
    fn blocks_in_order() {
        let text = build_prompt(&sample("a")).human_text;
        let task = text.find("<task>").unwrap();
        let pool = text.find("<meta action pool>").unwrap();
        let coord = text.find("<coordinate instruction>").unwrap();
        assert!(task < pool && pool < coord);
        assert!(text.ends_with("Units: meters. </coordinate instruction>"));
        assert!(text.contains("[(x1,y1), (x2,y2), (x3,y3), (x4,y4), (x5,y5), (x6,y6)]"));
    }

    #[test]
    fn empty_perception_marker() {
        let mut s = sample("a");
        s.objects.clear();
        let text = build_prompt(&s).human_text;
        assert!(text.contains("The current perceived notable objects are listed here: none. <task>"));
    }

    #[test]
    fn length_depends_only_on_fields() {
        let s = sample("a");
        let mut t = s.clone();
        t.ego.mission_goal = "turn left at the junction".into();
        let a = build_prompt(&s).human_text;
        let b = build_prompt(&t).human_text;
        assert_eq!(
            b.len() - a.len(),
            t.ego.mission_goal.len() - s.ego.mission_goal.len()
        );
    }

    #[test]
    fn ego_and_objects_rendering() {
        let mut s = sample("a");
        s.ego.velocity = [0.0, 5.0];
        s.ego.acceleration = [0.0, -0.5];
        s.ego.yaw_deg = 0.0;
        s.ego.history = vec![Waypoint::new(0.0, -5.0), Waypoint::new(0.0, -2.5)];
        s.ego.mission_goal = "go straight".into();
        assert_eq!(
            render_ego(&s.ego),
            "speed 5 m/s, acceleration (0,-0.5) m/s^2, yaw 0 deg, 2 s history [(0,-5), (0,-2.5)], mission goal: go straight"
        );
        s.objects.truncate(1);
        s.objects[0].class_label = "car".into();
        s.objects[0].position = Waypoint::new(3.5, 12.0);
        s.objects[0].velocity = [0.0, 4.25];
        assert_eq!(render_perception(&s.objects), "car at (3.5, 12), velocity (0, 4.25)");
    }

    #[test]
    fn critical_filter_and_completion() {
        let mut s = sample("a");
        s.objects[0].position = Waypoint::new(0.0, 500.0);
        let cfg = CriticalObjectConfig::default();
        let all = build_prompt(&s);
        let near = build_prompt_with(&s, Some(&cfg));
        assert!(near.human_text.len() < all.human_text.len());
        let parsed = super::super::parse_model_output(near.expected_completion.as_deref().unwrap()).unwrap();
        assert_eq!(parsed.trajectory, s.gt_trajectory);
        assert_eq!(parsed.actions, s.gt_actions);
    }
}

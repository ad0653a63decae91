//! Synthetic fixtures: constant-turn-rate, constant-acceleration ego motion,
//! the toy preference-optimization task, and complete scene records with
//! occupancy.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{SceneSample, Split};
use crate::geometry::{
    rasterize_footprint, BevGridSpec, EgoFootprint, EgoState, FootprintAxes, ObjectState, OccupancyGrid,
    Trajectory, VisibilityMask, Waypoint, HORIZON_STEPS, MAX_HISTORY, RATE_HZ,
};
use crate::meta_actions::{label_local_sequence, wrap_degrees, LabelerThresholds, Pose, POSE_SAMPLES};

pub const SPEED_RANGE: [f64; 2] = [2.0, 12.0];
pub const CURVATURE_RANGE: [f64; 2] = [-0.01, 0.01];

const SUBSTEPS_PER_S: f64 = 200.0;

/// Ego motion with yaw rate `curvature * v0` and speed `max(v0 + accel t, 0)`.
/// Heading is measured counter-clockwise from +y, so positive curvature
/// turns towards -x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub v0: f64,
    pub curvature: f64,
    pub accel: f64,
}

impl Kinematics {
    pub fn yaw_rate(&self) -> f64 {
        self.curvature * self.v0
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        (self.v0 + self.accel * t).max(0.0)
    }

    /// Heading in radians at time `t`.
    pub fn heading_at(&self, t: f64) -> f64 {
        self.yaw_rate() * t
    }

    /// Positions at the given times, each reached by RK4 integration from
    /// the origin at t = 0. Times may be negative.
    pub fn positions(&self, times: &[f64]) -> Vec<Waypoint> {
        times.iter().map(|&t| self.integrate(t)).collect()
    }

    fn integrate(&self, t_end: f64) -> Waypoint {
        let n = ((t_end.abs() * SUBSTEPS_PER_S).ceil() as usize).max(1);
        let h = t_end / n as f64;
        let vel = |t: f64| {
            let (v, th) = (self.speed_at(t), self.heading_at(t));
            (-v * th.sin(), v * th.cos())
        };
        let (mut x, mut y) = (0.0, 0.0);
        for i in 0..n {
            let t = i as f64 * h;
            let k1 = vel(t);
            let k2 = vel(t + h / 2.0);
            let k4 = vel(t + h);
            x += h / 6.0 * (k1.0 + 4.0 * k2.0 + k4.0);
            y += h / 6.0 * (k1.1 + 4.0 * k2.1 + k4.1);
        }
        Waypoint::new(x, y)
    }

    /// Future waypoints at 0.5 s .. 3 s.
    pub fn future(&self) -> Trajectory {
        let times: Vec<f64> = (1..=HORIZON_STEPS).map(|i| i as f64 / RATE_HZ as f64).collect();
        Trajectory::try_from(self.positions(&times)).expect("finite kinematics")
    }

    /// Past waypoints at -2 s .. -0.5 s, oldest first.
    pub fn history(&self) -> Vec<Waypoint> {
        let times: Vec<f64> = (1..=MAX_HISTORY).rev().map(|i| -(i as f64) / RATE_HZ as f64).collect();
        self.positions(&times)
    }

    /// Yaw (degrees, offset by `yaw0_deg`) and speed at 0, 1, 2, 3 s.
    pub fn poses(&self, yaw0_deg: f64) -> [Pose; POSE_SAMPLES] {
        std::array::from_fn(|k| {
            let t = k as f64;
            Pose::new(wrap_degrees(yaw0_deg + self.heading_at(t).to_degrees()), self.speed_at(t))
        })
    }
}

/// Conditioning of one toy-task instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskContext {
    pub id: u64,
    pub speed: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub context: TaskContext,
    pub gt: Trajectory,
}

/// `n` contexts with speed and curvature drawn uniformly from
/// [`SPEED_RANGE`] and [`CURVATURE_RANGE`], constant speed.
pub fn tpo_task(n: usize, seed: u64) -> Vec<TaskInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n as u64)
        .map(|id| {
            let speed = rng.gen_range(SPEED_RANGE[0]..=SPEED_RANGE[1]);
            let curvature = rng.gen_range(CURVATURE_RANGE[0]..=CURVATURE_RANGE[1]);
            let gt = Kinematics {
                v0: speed,
                curvature,
                accel: 0.0,
            }
            .future();
            TaskInstance {
                context: TaskContext { id, speed, curvature },
                gt,
            }
        })
        .collect()
}

/// Context of a scene record: ego speed, and the signed curvature of the
/// circle through the oldest history point, the point 1 s ago and the origin.
pub fn context_from_sample(id: u64, sample: &SceneSample) -> TaskContext {
    let h = &sample.ego.history;
    let curvature = if h.len() >= 2 {
        let (p1, p2, p3) = (h[0], h[h.len() / 2], Waypoint::ORIGIN);
        let cross = (p2.x - p1.x) * (p3.y - p2.y) - (p2.y - p1.y) * (p3.x - p2.x);
        let denom = p1.distance(&p2) * p2.distance(&p3) * p3.distance(&p1);
        if denom > 1e-9 {
            2.0 * cross / denom
        } else {
            0.0
        }
    } else {
        0.0
    };
    TaskContext {
        id,
        speed: sample.ego.speed(),
        curvature,
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    let r = (v * s).round() / s;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn round_wp(w: Waypoint) -> Waypoint {
    Waypoint::new(round_to(w.x, 2), round_to(w.y, 2))
}

const CLASSES: [(&str, f64, f64); 4] = [
    ("car", 4.5, 1.9),
    ("truck", 8.0, 2.5),
    ("cyclist", 1.8, 0.7),
    ("pedestrian", 0.8, 0.7),
];

pub const CAMERA_VIEWS: [&str; 6] = ["rear", "rear-left", "rear-right", "front", "front-left", "front-right"];

/// A generated scene record together with its occupancy grids.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub sample: SceneSample,
    pub occupancy: Vec<OccupancyGrid>,
}

/// Scene records whose ground truth comes from [`Kinematics`], whose labels
/// come from the rule-based labeler over recorded poses, and whose occupancy
/// is the rasterized object boxes along their futures.
pub fn gen_synthetic(n: usize, seed: u64) -> Vec<SyntheticScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let th = LabelerThresholds::default();
    let spec = BevGridSpec::default();
    (0..n)
        .map(|i| {
            let kin = Kinematics {
                v0: round_to(rng.gen_range(0.0..12.0), 2),
                curvature: round_to(rng.gen_range(-0.03..0.03), 4),
                accel: round_to(rng.gen_range(-3.0..2.0), 2),
            };
            let yaw0 = round_to(rng.gen_range(-180.0..180.0), 2);
            let poses = kin.poses(yaw0).map(|p| Pose::new(round_to(p.yaw_deg, 4), round_to(p.speed, 4)));
            let gt = Trajectory::new(kin.future().waypoints().map(round_wp)).expect("finite");
            let mut mask = [true; HORIZON_STEPS];
            if rng.gen_bool(0.1) {
                let hidden = rng.gen_range(1..=2);
                mask[HORIZON_STEPS - hidden..].iter_mut().for_each(|m| *m = false);
            }
            let goal = if kin.curvature > 0.01 {
                "turn left"
            } else if kin.curvature < -0.01 {
                "turn right"
            } else {
                "go straight"
            };
            let ego = EgoState {
                velocity: [0.0, kin.v0],
                acceleration: [0.0, kin.accel],
                yaw_deg: yaw0,
                history: kin.history().into_iter().map(round_wp).collect(),
                mission_goal: goal.to_string(),
            };

            let n_objects = rng.gen_range(0..=4);
            let mut objects = Vec::with_capacity(n_objects);
            let mut grids = vec![OccupancyGrid::empty(spec); HORIZON_STEPS];
            for j in 0..n_objects {
                let (class, length, width) = CLASSES[rng.gen_range(0..CLASSES.len())];
                let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let position = round_wp(Waypoint::new(side * rng.gen_range(2.5..15.0), rng.gen_range(-10.0..40.0)));
                let speed_cap = if class == "pedestrian" { 1.5 } else { 10.0 };
                let velocity = [
                    round_to(rng.gen_range(-0.5..0.5), 2),
                    round_to(rng.gen_range(0.0..speed_cap), 2),
                ];
                let future = Trajectory::from_fn(|k| {
                    let t = (k + 1) as f64 / RATE_HZ as f64;
                    round_wp(position.translated(velocity[0] * t, velocity[1] * t))
                })
                .expect("finite");
                let footprint = EgoFootprint::new(length, width, FootprintAxes::LengthAlongY).expect("valid box");
                for (t, grid) in grids.iter_mut().enumerate() {
                    for cell in rasterize_footprint(future[t], &footprint, &spec) {
                        grid.set(cell, true);
                    }
                }
                objects.push(ObjectState {
                    id: format!("{j}"),
                    class_label: class.to_string(),
                    position,
                    velocity,
                    future: Some(future),
                    history: None,
                });
            }

            let sample_id = format!("syn-{seed}-{i:05}");
            let cameras: BTreeMap<String, String> = CAMERA_VIEWS
                .iter()
                .map(|v| (v.to_string(), format!("cameras/{sample_id}/{v}.jpg")))
                .collect();
            let sample = SceneSample {
                occupancy_path: Some(format!("occupancy/{sample_id}.json")),
                sample_id,
                split: if rng.gen_bool(0.8) { Split::Train } else { Split::Test },
                ego,
                objects,
                gt_trajectory: gt,
                gt_mask: VisibilityMask::new(mask),
                gt_actions: label_local_sequence(&poses, &th).expect("four poses"),
                reasoning: None,
                poses: Some(poses),
                cameras,
            };
            SyntheticScene {
                sample,
                occupancy: grids,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straight_constant_speed() {
        let k = Kinematics {
            v0: 4.0,
            curvature: 0.0,
            accel: 0.0,
        };
        let f = k.future();
        for i in 0..HORIZON_STEPS {
            assert!((f[i].y - 2.0 * (i + 1) as f64).abs() < 1e-12);
            assert_eq!(f[i].x, 0.0);
        }
        let h = k.history();
        assert!((h[0].y + 8.0).abs() < 1e-12 && (h[3].y + 2.0).abs() < 1e-12);
    }

    #[test]
    fn circular_arc_matches_closed_form() {
        let k = Kinematics {
            v0: 10.0,
            curvature: 0.01,
            accel: 0.0,
        };
        let r = 1.0 / k.curvature;
        for (i, w) in k.future().iter().enumerate() {
            let th = k.yaw_rate() * (i + 1) as f64 * 0.5;
            assert!((w.x - (-r * (1.0 - th.cos()))).abs() < 1e-9);
            assert!((w.y - r * th.sin()).abs() < 1e-9);
        }
        assert!(k.future()[5].x < 0.0, "positive curvature turns left");
    }

    #[test]
    fn braking_stops() {
        let k = Kinematics {
            v0: 2.0,
            curvature: 0.0,
            accel: -2.0,
        };
        let f = k.future();
        assert!((f[1].y - 1.0).abs() < 1e-6);
        assert!((f[5].y - 1.0).abs() < 1e-6);
        assert_eq!(k.poses(0.0)[3].speed, 0.0);
    }

    #[test]
    fn curvature_estimate_from_history() {
        let scene = gen_synthetic(1, 3).remove(0);
        let mut s = scene.sample;
        let k = Kinematics {
            v0: 8.0,
            curvature: -0.02,
            accel: 0.0,
        };
        s.ego.history = k.history();
        s.ego.velocity = [0.0, 8.0];
        let c = context_from_sample(0, &s);
        assert!((c.curvature + 0.02).abs() < 1e-6, "{}", c.curvature);
        assert_eq!(c.speed, 8.0);
    }

    #[test]
    fn generated_records_validate() {
        let scenes = gen_synthetic(50, 11);
        let samples: Vec<SceneSample> = scenes.iter().map(|s| s.sample.clone()).collect();
        let text = crate::dataset::samples_to_jsonl(&samples);
        assert_eq!(crate::dataset::parse_samples(&text).unwrap(), samples);
        assert_eq!(gen_synthetic(50, 11), scenes);
        assert!(scenes.iter().any(|s| !s.sample.objects.is_empty()));
    }

    #[test]
    fn task_is_in_range() {
        let task = tpo_task(100, 1);
        for inst in &task {
            assert!(inst.context.speed >= 2.0 && inst.context.speed <= 12.0);
            for w in inst.gt.iter() {
                assert!(w.x.abs() < 8.0 && w.y > -2.0 && w.y < 62.0);
            }
        }
        assert_eq!(tpo_task(100, 1), task);
    }
}

//! Rule-based meta-action labeling and meta-action accuracy evaluation.
//!
//! A meta-action is a (lateral, longitudinal) pair labeled once per second
//! over the 3 s horizon. Lateral labels band the absolute yaw change, and
//! longitudinal labels band the speed change:
//!
//! ```text
//! |dyaw| < 5          STRAIGHT
//! 5 <= |dyaw| < 20    VEER_{LEFT,RIGHT}
//! |dyaw| >= 20        TURN_{LEFT,RIGHT}
//!
//! dv >= +0.25         ACCELERATE
//! dv <= -0.25         DECELERATE (BRAKE_TO_STOP if dv <= -0.5 and v_end < 0.1)
//! otherwise           MAINTAIN
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::HORIZON_S;

/// Pose samples per labeled sequence: t = 0, 1, 2, 3 s.
pub const POSE_SAMPLES: usize = HORIZON_S + 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetaActionError {
    #[error("unknown action '{0}'")]
    UnknownAction(String),
    #[error("expected {expected} entries, found {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("prediction and ground truth lengths differ ({pred} vs {gt})")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("prediction {index} uses a different formulation than its ground truth")]
    FormulationMismatch { index: usize },
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
}

/// Upper-snake canonical form: case-insensitive, spaces and hyphens become
/// underscores.
pub fn normalize_action_name(raw: &str) -> String {
    raw.trim()
        .chars()
        .map(|c| match c {
            ' ' | '-' => '_',
            c => c.to_ascii_uppercase(),
        })
        .collect()
}

macro_rules! action_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = MetaActionError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match normalize_action_name(s).as_str() {
                    $($text => Ok($name::$variant),)+
                    _ => Err(MetaActionError::UnknownAction(s.to_string())),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let raw = String::deserialize(d)?;
                raw.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

action_enum! {
    /// Steering intent.
    LateralAction {
        TurnLeft => "TURN_LEFT",
        ChangeLaneLeft => "CHANGE_LANE_LEFT",
        VeerLeft => "VEER_LEFT",
        Straight => "STRAIGHT",
        VeerRight => "VEER_RIGHT",
        ChangeLaneRight => "CHANGE_LANE_RIGHT",
        TurnRight => "TURN_RIGHT",
    }
}

action_enum! {
    /// Throttle/brake mode.
    LongitudinalAction {
        Reverse => "REVERSE",
        BrakeToStop => "BRAKE_TO_STOP",
        Decelerate => "DECELERATE",
        Maintain => "MAINTAIN",
        Accelerate => "ACCELERATE",
    }
}

impl LateralAction {
    /// Left/right mirror image.
    pub fn mirrored(self) -> Self {
        use LateralAction::*;
        match self {
            TurnLeft => TurnRight,
            ChangeLaneLeft => ChangeLaneRight,
            VeerLeft => VeerRight,
            Straight => Straight,
            VeerRight => VeerLeft,
            ChangeLaneRight => ChangeLaneLeft,
            TurnRight => TurnLeft,
        }
    }
}

/// Joint decision; serialized as `["LATERAL", "LONGITUDINAL"]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "(LateralAction, LongitudinalAction)", into = "(LateralAction, LongitudinalAction)")]
pub struct MetaAction {
    pub lateral: LateralAction,
    pub longitudinal: LongitudinalAction,
}

impl MetaAction {
    pub const fn new(lateral: LateralAction, longitudinal: LongitudinalAction) -> Self {
        Self { lateral, longitudinal }
    }

    pub const CRUISE: MetaAction = MetaAction::new(LateralAction::Straight, LongitudinalAction::Maintain);
}

impl From<(LateralAction, LongitudinalAction)> for MetaAction {
    fn from((lateral, longitudinal): (LateralAction, LongitudinalAction)) -> Self {
        Self { lateral, longitudinal }
    }
}

impl From<MetaAction> for (LateralAction, LongitudinalAction) {
    fn from(a: MetaAction) -> Self {
        (a.lateral, a.longitudinal)
    }
}

impl fmt::Display for MetaAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "['{}', '{}']", self.lateral, self.longitudinal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    /// Intervals [0,1], [1,2], [2,3] s.
    #[default]
    Local,
    /// Intervals [0,1], [0,2], [0,3] s.
    Cumulative,
}

/// Three meta-actions at 1 Hz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ActionSequence {
    pub actions: [MetaAction; HORIZON_S],
    pub formulation: Formulation,
}

impl ActionSequence {
    pub fn local(actions: [MetaAction; HORIZON_S]) -> Self {
        Self {
            actions,
            formulation: Formulation::Local,
        }
    }

    pub fn from_vec(actions: Vec<MetaAction>, formulation: Formulation) -> Result<Self, MetaActionError> {
        let found = actions.len();
        let actions = actions.try_into().map_err(|_| MetaActionError::WrongCount {
            expected: HORIZON_S,
            found,
        })?;
        Ok(Self { actions, formulation })
    }
}

/// How BRAKE_TO_STOP is detected in a local sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrakeRule {
    /// The interval itself drops by at least `brake_mps` and ends below `stop_eps_mps`.
    #[default]
    IntervalLocal,
    /// Every interval of a run of consecutive hard decelerations is labeled
    /// BRAKE_TO_STOP when the run ends below `stop_eps_mps`.
    Episode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelerThresholds {
    pub keep_deg: f64,
    pub turn_deg: f64,
    pub accel_mps: f64,
    pub decel_mps: f64,
    pub brake_mps: f64,
    pub stop_eps_mps: f64,
    /// When set, a positive yaw change means a right-hand turn.
    #[serde(default)]
    pub invert_yaw_sign: bool,
    #[serde(default)]
    pub brake_rule: BrakeRule,
}

impl Default for LabelerThresholds {
    fn default() -> Self {
        Self {
            keep_deg: 5.0,
            turn_deg: 20.0,
            accel_mps: 0.25,
            decel_mps: -0.25,
            brake_mps: -0.5,
            stop_eps_mps: 0.1,
            invert_yaw_sign: false,
            brake_rule: BrakeRule::IntervalLocal,
        }
    }
}

impl LabelerThresholds {
    pub fn validate(&self) -> Result<(), MetaActionError> {
        let ok = 0.0 <= self.keep_deg
            && self.keep_deg < self.turn_deg
            && self.decel_mps < 0.0
            && 0.0 < self.accel_mps
            && self.brake_mps <= self.decel_mps
            && self.stop_eps_mps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(MetaActionError::Thresholds(format!("{self:?}")))
        }
    }
}

/// Heading and speed at one labeling instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Pose {
    pub yaw_deg: f64,
    pub speed: f64,
}

impl Pose {
    pub const fn new(yaw_deg: f64, speed: f64) -> Self {
        Self { yaw_deg, speed }
    }
}

impl From<[f64; 2]> for Pose {
    fn from([yaw_deg, speed]: [f64; 2]) -> Self {
        Self { yaw_deg, speed }
    }
}

impl From<Pose> for [f64; 2] {
    fn from(p: Pose) -> Self {
        [p.yaw_deg, p.speed]
    }
}

/// Wraps an angle difference into (-180, 180].
pub fn wrap_degrees(delta: f64) -> f64 {
    if delta > -180.0 && delta <= 180.0 {
        return delta;
    }
    let r = delta.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

pub fn label_lateral(delta_yaw_deg: f64, th: &LabelerThresholds) -> LateralAction {
    let mut delta = wrap_degrees(delta_yaw_deg);
    if th.invert_yaw_sign {
        delta = -delta;
    }
    let magnitude = delta.abs();
    let left = delta > 0.0;
    if magnitude < th.keep_deg {
        LateralAction::Straight
    } else if magnitude < th.turn_deg {
        if left {
            LateralAction::VeerLeft
        } else {
            LateralAction::VeerRight
        }
    } else if left {
        LateralAction::TurnLeft
    } else {
        LateralAction::TurnRight
    }
}

pub fn label_longitudinal(delta_v: f64, v_end: f64, th: &LabelerThresholds) -> LongitudinalAction {
    if delta_v >= th.accel_mps {
        LongitudinalAction::Accelerate
    } else if delta_v <= th.brake_mps && v_end < th.stop_eps_mps {
        LongitudinalAction::BrakeToStop
    } else if delta_v <= th.decel_mps {
        LongitudinalAction::Decelerate
    } else {
        LongitudinalAction::Maintain
    }
}

/// Labels one interval from its yaw change (positive = left), speed change
/// and end speed.
pub fn label_interval(delta_yaw_deg: f64, delta_v: f64, v_end: f64, th: &LabelerThresholds) -> MetaAction {
    MetaAction::new(label_lateral(delta_yaw_deg, th), label_longitudinal(delta_v, v_end, th))
}

fn check_poses(poses: &[Pose]) -> Result<&[Pose; POSE_SAMPLES], MetaActionError> {
    poses.try_into().map_err(|_| MetaActionError::WrongCount {
        expected: POSE_SAMPLES,
        found: poses.len(),
    })
}

/// Labels the three consecutive 1 s intervals.
pub fn label_local_sequence(poses: &[Pose], th: &LabelerThresholds) -> Result<ActionSequence, MetaActionError> {
    let p = check_poses(poses)?;
    let mut actions: [MetaAction; HORIZON_S] = std::array::from_fn(|k| {
        label_interval(
            p[k + 1].yaw_deg - p[k].yaw_deg,
            p[k + 1].speed - p[k].speed,
            p[k + 1].speed,
            th,
        )
    });
    if th.brake_rule == BrakeRule::Episode {
        let hard = |k: usize| p[k + 1].speed - p[k].speed <= th.brake_mps;
        for k in 0..HORIZON_S {
            if !hard(k) {
                continue;
            }
            let mut end = k;
            while end + 1 < HORIZON_S && hard(end + 1) {
                end += 1;
            }
            if (k..=end).any(|j| p[j + 1].speed < th.stop_eps_mps) {
                actions[k].longitudinal = LongitudinalAction::BrakeToStop;
            }
        }
    }
    Ok(ActionSequence::local(actions))
}

/// Labels the spans [0, k] for k = 1, 2, 3 against the same thresholds.
pub fn label_cumulative_sequence(poses: &[Pose], th: &LabelerThresholds) -> Result<ActionSequence, MetaActionError> {
    let p = check_poses(poses)?;
    let actions = std::array::from_fn(|k| {
        label_interval(
            p[k + 1].yaw_deg - p[0].yaw_deg,
            p[k + 1].speed - p[0].speed,
            p[k + 1].speed,
            th,
        )
    });
    Ok(ActionSequence {
        actions,
        formulation: Formulation::Cumulative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// Horizon k counts when action k is right.
    PerInterval,
    /// Horizon k counts only when actions 1..=k are all right.
    Cumulative,
}

/// Fractions in [0, 1] at the 1 s, 2 s and 3 s horizons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionAccuracy {
    pub lateral: [f64; HORIZON_S],
    pub longitudinal: [f64; HORIZON_S],
}

pub fn eval_action_accuracy(
    pred: &[ActionSequence],
    gt: &[ActionSequence],
    mode: AccuracyMode,
) -> Result<ActionAccuracy, MetaActionError> {
    if pred.len() != gt.len() {
        return Err(MetaActionError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    if let Some(index) = pred.iter().zip(gt).position(|(p, g)| p.formulation != g.formulation) {
        return Err(MetaActionError::FormulationMismatch { index });
    }
    let mut lateral = [0usize; HORIZON_S];
    let mut longitudinal = [0usize; HORIZON_S];
    for (p, g) in pred.iter().zip(gt) {
        let (mut lat_ok, mut lon_ok) = (true, true);
        for k in 0..HORIZON_S {
            let lat_hit = p.actions[k].lateral == g.actions[k].lateral;
            let lon_hit = p.actions[k].longitudinal == g.actions[k].longitudinal;
            match mode {
                AccuracyMode::PerInterval => {
                    lat_ok = lat_hit;
                    lon_ok = lon_hit;
                }
                AccuracyMode::Cumulative => {
                    lat_ok &= lat_hit;
                    lon_ok &= lon_hit;
                }
            }
            lateral[k] += usize::from(lat_ok);
            longitudinal[k] += usize::from(lon_ok);
        }
    }
    let n = pred.len().max(1) as f64;
    Ok(ActionAccuracy {
        lateral: lateral.map(|c| c as f64 / n),
        longitudinal: longitudinal.map(|c| c as f64 / n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use LateralAction::*;
    use LongitudinalAction::*;

    fn th() -> LabelerThresholds {
        LabelerThresholds::default()
    }

    fn poses(yaws: [f64; 4], speeds: [f64; 4]) -> Vec<Pose> {
        yaws.iter().zip(speeds).map(|(&y, s)| Pose::new(y, s)).collect()
    }

    #[test]
    fn interval_examples() {
        assert_eq!(label_interval(3.0, 0.0, 10.0, &th()), MetaAction::new(Straight, Maintain));
        assert_eq!(label_interval(25.0, -0.3, 4.0, &th()), MetaAction::new(TurnLeft, Decelerate));
        assert_eq!(label_interval(-8.0, -0.6, 0.05, &th()), MetaAction::new(VeerRight, BrakeToStop));
    }

    #[test]
    fn inverted_yaw_sign() {
        let inverted = LabelerThresholds {
            invert_yaw_sign: true,
            ..th()
        };
        assert_eq!(label_lateral(25.0, &inverted), TurnRight);
        assert_eq!(label_lateral(-6.0, &inverted), VeerLeft);
    }

    #[test]
    fn local_sequence_examples() {
        let constant = poses([10.0; 4], [5.0; 4]);
        let seq = label_local_sequence(&constant, &th()).unwrap();
        assert_eq!(seq.actions, [MetaAction::CRUISE; 3]);

        let braking = poses([0.0; 4], [2.0, 1.4, 0.8, 0.05]);
        let seq = label_local_sequence(&braking, &th()).unwrap();
        assert_eq!(seq.actions[0].longitudinal, Decelerate);
        assert_eq!(seq.actions[2].longitudinal, BrakeToStop);

        let ramp = poses([0.0, 3.0, 10.0, 35.0], [5.0; 4]);
        let lats: Vec<_> = label_local_sequence(&ramp, &th())
            .unwrap()
            .actions
            .iter()
            .map(|a| a.lateral)
            .collect();
        assert_eq!(lats, [Straight, VeerLeft, TurnLeft]);

        assert_eq!(
            label_local_sequence(&constant[..3], &th()),
            Err(MetaActionError::WrongCount { expected: 4, found: 3 })
        );
    }

    #[test]
    fn episode_brake_rule_looks_ahead() {
        let episode = LabelerThresholds {
            brake_rule: BrakeRule::Episode,
            ..th()
        };
        let braking = poses([0.0; 4], [2.0, 1.4, 0.8, 0.05]);
        let lons: Vec<_> = label_local_sequence(&braking, &episode)
            .unwrap()
            .actions
            .iter()
            .map(|a| a.longitudinal)
            .collect();
        assert_eq!(lons, [BrakeToStop, BrakeToStop, BrakeToStop]);
        // A run that never reaches a stop stays DECELERATE.
        let slowing = poses([0.0; 4], [3.0, 2.4, 1.8, 1.2]);
        let seq = label_local_sequence(&slowing, &episode).unwrap();
        assert!(seq.actions.iter().all(|a| a.longitudinal == Decelerate));
    }

    #[test]
    fn cumulative_examples() {
        let seq = label_cumulative_sequence(&poses([0.0; 4], [3.0; 4]), &th()).unwrap();
        assert_eq!(seq.actions, [MetaAction::CRUISE; 3]);
        assert_eq!(seq.formulation, Formulation::Cumulative);

        let lat = |s: ActionSequence| s.actions.map(|a| a.lateral);
        let step = poses([0.0, 4.0, 4.0, 4.0], [3.0; 4]);
        assert_eq!(lat(label_cumulative_sequence(&step, &th()).unwrap()), [Straight; 3]);
        assert_eq!(lat(label_local_sequence(&step, &th()).unwrap()), [Straight; 3]);

        let ramp = poses([0.0, 4.0, 8.0, 12.0], [3.0; 4]);
        assert_eq!(
            lat(label_cumulative_sequence(&ramp, &th()).unwrap()),
            [Straight, VeerLeft, VeerLeft]
        );
        assert_eq!(lat(label_local_sequence(&ramp, &th()).unwrap()), [Straight; 3]);
    }

    #[test]
    fn yaw_wraparound() {
        assert_eq!(wrap_degrees(350.0), -10.0);
        assert_eq!(wrap_degrees(-190.0), 170.0);
        assert_eq!(wrap_degrees(180.0), 180.0);
        assert_eq!(wrap_degrees(-180.0), 180.0);
        let wrap = poses([175.0, -175.0, -175.0, -175.0], [3.0; 4]);
        assert_eq!(label_local_sequence(&wrap, &th()).unwrap().actions[0].lateral, VeerLeft);
    }

    #[test]
    fn accuracy_examples() {
        let gt = ActionSequence::local([MetaAction::CRUISE; 3]);
        let wrong = MetaAction::new(TurnLeft, Accelerate);
        let pred = ActionSequence::local([MetaAction::CRUISE, wrong, MetaAction::CRUISE]);
        let per = eval_action_accuracy(&[pred], &[gt], AccuracyMode::PerInterval).unwrap();
        let cum = eval_action_accuracy(&[pred], &[gt], AccuracyMode::Cumulative).unwrap();
        assert_eq!(per.lateral, [1.0, 0.0, 1.0]);
        assert_eq!(per.longitudinal, [1.0, 0.0, 1.0]);
        assert_eq!(cum.lateral, [1.0, 0.0, 0.0]);
        let same = eval_action_accuracy(&[gt, gt], &[gt, gt], AccuracyMode::Cumulative).unwrap();
        assert_eq!(same.lateral, [1.0; 3]);
        assert!(eval_action_accuracy(&[gt], &[], AccuracyMode::PerInterval).is_err());
        let cum_seq = ActionSequence {
            formulation: Formulation::Cumulative,
            ..gt
        };
        assert_eq!(
            eval_action_accuracy(&[cum_seq], &[gt], AccuracyMode::PerInterval),
            Err(MetaActionError::FormulationMismatch { index: 0 })
        );
    }

    #[test]
    fn names_normalize() {
        assert_eq!("TURN LEFT".parse::<LateralAction>().unwrap(), TurnLeft);
        assert_eq!("change-lane-right".parse::<LateralAction>().unwrap(), ChangeLaneRight);
        assert_eq!("brake to stop".parse::<LongitudinalAction>().unwrap(), BrakeToStop);
        assert_eq!("Reverse".parse::<LongitudinalAction>().unwrap(), Reverse);
        assert!("MAINTAIN".parse::<LateralAction>().is_err());
        let a: MetaAction = serde_json::from_str(r#"["turn left", "MAINTAIN"]"#).unwrap();
        assert_eq!(a, MetaAction::new(TurnLeft, Maintain));
        assert_eq!(serde_json::to_string(&a).unwrap(), r#"["TURN_LEFT","MAINTAIN"]"#);
        assert_eq!(a.to_string(), "['TURN_LEFT', 'MAINTAIN']");
    }

    #[test]
    fn thresholds_validate() {
        th().validate().unwrap();
        let bad = LabelerThresholds {
            keep_deg: 25.0,
            ..th()
        };
        assert!(bad.validate().is_err());
    }
}

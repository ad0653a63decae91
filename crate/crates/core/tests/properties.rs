mod common;

use proptest::prelude::*;
use trajplan::dataset::{parse_action_reply, parse_model_output, serialize_completion};
use trajplan::geometry::{step_errors, Trajectory, VisibilityMask, Waypoint};
use trajplan::meta_actions::{label_interval, LabelerThresholds, LongitudinalAction};
use trajplan::metrics::{aggregate_l2, collision_horizon, Protocol};

fn waypoint() -> impl Strategy<Value = Waypoint> {
    (-1e6..1e6f64, -1e6..1e6f64).prop_map(|(x, y)| Waypoint::new(x, y))
}

fn trajectory() -> impl Strategy<Value = Trajectory> {
    prop::array::uniform6(waypoint()).prop_map(|w| Trajectory::new(w).unwrap())
}

proptest! {
    #[test]
    fn parser_never_panics(text in "\\PC*") {
        let _ = parse_model_output(&text);
        let _ = parse_action_reply(&text);
    }

    #[test]
    fn completion_round_trip(seed in any::<u64>()) {
        let m = common::random_completion(&mut common::rng(seed));
        prop_assert_eq!(parse_model_output(&serialize_completion(&m)).unwrap(), m);
    }

    #[test]
    fn l2_is_zero_for_identical_trajectories(t in trajectory(), flags in prop::array::uniform6(any::<bool>())) {
        let mask = VisibilityMask::new(flags);
        for proto in Protocol::ALL {
            for k in 1..=3 {
                let v = aggregate_l2(&step_errors(&t, &t), &mask, k, proto).unwrap();
                prop_assert!(v.is_none() || v == Some(0.0));
            }
        }
    }

    #[test]
    fn stp3_l2_lies_between_visible_extremes(
        a in trajectory(),
        b in trajectory(),
        flags in prop::array::uniform6(any::<bool>()),
    ) {
        let mask = VisibilityMask::new(flags);
        let e = step_errors(&a, &b);
        for k in 1..=3 {
            let visible: Vec<f64> = (0..2 * k).filter(|&t| flags[t]).map(|t| e[t]).collect();
            match aggregate_l2(&e, &mask, k, Protocol::Stp3).unwrap() {
                None => prop_assert!(visible.is_empty()),
                Some(v) => {
                    let lo = visible.iter().cloned().fold(f64::INFINITY, f64::min);
                    let hi = visible.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(lo * (1.0 - 1e-12) <= v && v <= hi * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn collision_rates_are_monotone(steps in prop::array::uniform6(any::<bool>()), flip in 0usize..6) {
        let mut more = steps;
        more[flip] = true;
        for proto in Protocol::ALL {
            for k in 1..=3 {
                let base = collision_horizon(&steps, k, proto).unwrap();
                prop_assert!((0.0..=1.0).contains(&base));
                prop_assert!(collision_horizon(&more, k, proto).unwrap() >= base);
                prop_assert_eq!(collision_horizon(&[false; 6], k, proto).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn longitudinal_label_ignores_yaw(dyaw in -180.0..180.0f64, dv in -5.0..5.0f64, v in 0.0..20.0f64) {
        let th = LabelerThresholds::default();
        prop_assert_eq!(label_interval(dyaw, dv, v, &th).longitudinal, label_interval(0.0, dv, v, &th).longitudinal);
        if label_interval(dyaw, dv, v, &th).longitudinal == LongitudinalAction::BrakeToStop {
            prop_assert!(dv <= -0.5 && v < 0.1);
        }
    }
}

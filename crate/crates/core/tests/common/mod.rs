//! Shared fixtures and brute-force reference implementations.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajplan::dataset::{SceneSample, Split};
use trajplan::geometry::{
    BevGridSpec, Cell, EgoFootprint, EgoState, FootprintAxes, ObjectState, OccupancyGrid, Trajectory, VisibilityMask,
    Waypoint,
};
use trajplan::meta_actions::{ActionSequence, MetaAction};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn traj(f: impl FnMut(usize) -> Waypoint) -> Trajectory {
    Trajectory::from_fn(f).unwrap()
}

pub fn random_traj(rng: &mut impl Rng, spread: f64) -> Trajectory {
    traj(|_| Waypoint::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread)))
}

pub fn random_mask(rng: &mut impl Rng) -> VisibilityMask {
    VisibilityMask::new(std::array::from_fn(|_| rng.gen_bool(0.8)))
}

/// Six grids, each cell occupied with probability `density`.
pub fn random_grids(rng: &mut impl Rng, spec: BevGridSpec, density: f64) -> Vec<OccupancyGrid> {
    (0..6)
        .map(|_| {
            let mut g = OccupancyGrid::empty(spec);
            for r in 0..spec.dims[0] {
                for c in 0..spec.dims[1] {
                    if rng.gen_bool(density) {
                        g.set(Cell::new(r, c), true);
                    }
                }
            }
            g
        })
        .collect()
}

pub fn half_extents(fp: &EgoFootprint) -> (f64, f64) {
    match fp.axes {
        FootprintAxes::LengthAlongY => (fp.width / 2.0, fp.length / 2.0),
        FootprintAxes::LengthAlongX => (fp.length / 2.0, fp.width / 2.0),
    }
}

/// Every grid cell whose center lies in `[x - hx, x + hx) x [y - hy, y + hy)`.
pub fn raster_oracle(center: Waypoint, fp: &EgoFootprint, spec: &BevGridSpec) -> Vec<Cell> {
    let (hx, hy) = half_extents(fp);
    let (x0, x1) = (center.x - hx, center.x + hx);
    let (y0, y1) = (center.y - hy, center.y + hy);
    let mut out = Vec::new();
    for r in 0..spec.dims[0] {
        let cx = spec.bx[0] + r as f64 * spec.dx[0];
        if !(x0 <= cx && cx < x1) {
            continue;
        }
        for c in 0..spec.dims[1] {
            let cy = spec.bx[1] + c as f64 * spec.dx[1];
            if y0 <= cy && cy < y1 {
                out.push(Cell::new(r, c));
            }
        }
    }
    out
}

/// Reads `grid` reversed along both axes by explicit index arithmetic.
pub fn read_flipped(grid: &OccupancyGrid, cell: Cell) -> bool {
    let [rows, cols] = grid.spec().dims;
    grid.get(Cell::new(rows - 1 - cell.row, cols - 1 - cell.col))
}

fn dist(a: Waypoint, b: Waypoint) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

/// Reference per-horizon values for one sample, straight from the metric
/// definitions.
pub struct OracleMetrics {
    pub l2: [Option<f64>; 3],
    pub collision: Option<[f64; 3]>,
}

pub fn stp3_oracle(
    pred: &Trajectory,
    gt: &Trajectory,
    mask: &VisibilityMask,
    grids: Option<&[OccupancyGrid]>,
    fp: &EgoFootprint,
) -> OracleMetrics {
    let mut l2 = [None; 3];
    for k in 1..=3 {
        let visible: Vec<f64> = (0..2 * k)
            .filter(|&t| mask.flags()[t])
            .map(|t| dist(pred[t], gt[t]))
            .collect();
        if !visible.is_empty() {
            l2[k - 1] = Some(visible.iter().sum::<f64>() / visible.len() as f64);
        }
    }
    let collision = grids.map(|grids| {
        let hit = |w: Waypoint, t: usize| {
            let w = Waypoint::new(-w.x, w.y);
            raster_oracle(w, fp, grids[t].spec())
                .into_iter()
                .any(|cell| read_flipped(&grids[t], cell))
        };
        let steps: Vec<bool> = (0..6).map(|t| hit(pred[t], t) && !hit(gt[t], t)).collect();
        std::array::from_fn(|h| {
            let n = 2 * (h + 1);
            steps[..n].iter().filter(|&&s| s).count() as f64 / n as f64
        })
    });
    OracleMetrics { l2, collision }
}

pub fn uniad_oracle(
    pred: &Trajectory,
    gt: &Trajectory,
    mask: &VisibilityMask,
    grids: Option<&[OccupancyGrid]>,
    fp: &EgoFootprint,
) -> OracleMetrics {
    let l2 = std::array::from_fn(|h| {
        let t = 2 * (h + 1) - 1;
        mask.flags()[t].then(|| dist(pred[t], gt[t]))
    });
    let collision = grids.map(|grids| {
        let hit = |w: Waypoint, t: usize| {
            raster_oracle(w, fp, grids[t].spec())
                .into_iter()
                .any(|cell| grids[t].get(cell))
        };
        std::array::from_fn(|h| {
            let t = 2 * (h + 1) - 1;
            f64::from(u8::from(hit(pred[t], t) && !hit(gt[t], t)))
        })
    });
    OracleMetrics { l2, collision }
}

pub fn scene(id: &str, gt: Trajectory, actions: [MetaAction; 3]) -> SceneSample {
    SceneSample {
        sample_id: id.to_string(),
        split: Split::Test,
        ego: EgoState {
            velocity: [0.0, 5.0],
            acceleration: [0.0, 0.0],
            yaw_deg: 0.0,
            history: vec![Waypoint::new(0.0, -5.0), Waypoint::new(0.0, -2.5)],
            mission_goal: "go straight".into(),
        },
        objects: vec![ObjectState {
            id: "3".into(),
            class_label: "car".into(),
            position: Waypoint::new(-3.5, 14.0),
            velocity: [0.0, 3.0],
            future: Some(traj(|i| Waypoint::new(-3.5, 14.0 + 1.5 * (i + 1) as f64))),
            history: None,
        }],
        gt_trajectory: gt,
        gt_mask: VisibilityMask::ALL_VISIBLE,
        gt_actions: ActionSequence::local(actions),
        reasoning: Some("Traffic ahead is light.".into()),
        occupancy_path: None,
        poses: None,
        cameras: BTreeMap::new(),
    }
}

const WORDS: [&str; 12] = [
    "lead", "car", "brakes", "gap", "(2.5,14)", "lane", "ÿield", "->", "ok.", "[x]", "3 s", "pedestrian's",
];

fn random_text(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..12);
    let mut out: Vec<String> = (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())].to_string()).collect();
    if rng.gen_bool(0.3) {
        out.insert(rng.gen_range(0..out.len()), "\n".into());
    }
    out.join(" ").trim().to_string()
}

fn random_number(rng: &mut impl Rng) -> f64 {
    match rng.gen_range(0..4) {
        0 => rng.gen_range(-60.0..60.0),
        1 => (rng.gen_range(-600i32..600) as f64) / 10.0,
        2 => rng.gen_range(-1e-6..1e-6),
        _ => rng.gen_range(-1e9..1e9),
    }
}

pub fn random_action(rng: &mut impl Rng) -> MetaAction {
    use trajplan::meta_actions::{LateralAction, LongitudinalAction};
    MetaAction::new(
        LateralAction::ALL[rng.gen_range(0..LateralAction::ALL.len())],
        LongitudinalAction::ALL[rng.gen_range(0..LongitudinalAction::ALL.len())],
    )
}

pub fn random_completion(rng: &mut impl Rng) -> trajplan::dataset::ModelOutput {
    trajplan::dataset::ModelOutput {
        prediction: rng.gen_bool(0.7).then(|| random_text(rng)),
        think: rng.gen_bool(0.8).then(|| random_text(rng)),
        actions: ActionSequence::local(std::array::from_fn(|_| random_action(rng))),
        trajectory: traj(|_| Waypoint::new(random_number(rng), random_number(rng))),
    }
}

const FRAGMENTS: [&str; 22] = [
    "<prediction>", "</prediction>", "<think>", "</think>", "### Correct action:", "### 3-second trajectory:",
    "[", "]", "(", ")", ",", "'", "\"", "STRAIGHT", "BRAKE TO STOP", "maintain", "-", "1.5", "e9", " ", "\n", "é",
];

/// Random text built from grammar fragments, or a mutated valid completion.
pub fn fuzz_input(rng: &mut impl Rng) -> String {
    if rng.gen_bool(0.5) {
        let n = rng.gen_range(0..40);
        return (0..n).map(|_| FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())]).collect();
    }
    let mut chars: Vec<char> = trajplan::dataset::serialize_completion(&random_completion(rng))
        .chars()
        .collect();
    for _ in 0..rng.gen_range(1..6) {
        let i = rng.gen_range(0..=chars.len());
        match rng.gen_range(0..3) {
            0 if i < chars.len() => {
                chars.remove(i);
            }
            1 => chars.insert(i, char::from_u32(rng.gen_range(0x20..0x3000)).unwrap_or('?')),
            _ => chars.truncate(i),
        }
    }
    chars.into_iter().collect()
}

/// Largest `|a - n| / max(|a|, |n|, 1e-3)` over `probes`, where `n` is the
/// central difference of `f` with step `eps`.
pub fn central_difference_error(
    f: impl Fn(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    probes: &[usize],
    eps: f64,
) -> f64 {
    let mut x = params.to_vec();
    let mut worst: f64 = 0.0;
    for &i in probes {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(&x);
        x[i] = orig - eps;
        let down = f(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-3);
        worst = worst.max(rel);
    }
    worst
}

/// Up to `active` coordinates with a nonzero analytic gradient plus
/// `inactive` others.
pub fn probe_set(rng: &mut impl Rng, analytic: &[f64], active: usize, inactive: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let (mut on, mut off): (Vec<usize>, Vec<usize>) = (0..analytic.len()).partition(|&i| analytic[i] != 0.0);
    on.shuffle(rng);
    off.shuffle(rng);
    on.truncate(active);
    off.truncate(inactive);
    on.extend(off);
    on
}

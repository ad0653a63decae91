//! Open-loop planning metrics under the ST-P3 and UniAD protocols.
//!
//! Both protocols share the per-step quantities (Euclidean error `d_t` and
//! the GT-excluded box collision indicator) and differ in how they aggregate
//! them at the 1 s / 2 s / 3 s horizons:
//!
//! | | ST-P3 | UniAD |
//! |---|---|---|
//! | L2 @ k s | mean of visible `d_t`, `t <= 2k` | `d_{2k}` |
//! | collision @ k s | `(1/2k) * sum c_t`, `t <= 2k` | `c_{2k}` |
//! | occupancy | flipped on both axes | as stored |
//! | trajectory x | negated once | negated twice (no-op) |

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    rasterize_footprint, step_errors, BevGridSpec, EgoFootprint, OccupancyGrid, Trajectory,
    VisibilityMask, HORIZON_S, HORIZON_STEPS, RATE_HZ,
};

/// Evaluated horizons in seconds.
pub const HORIZONS: [usize; HORIZON_S] = [1, 2, 3];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("horizon {0} s is not one of 1, 2, 3")]
    BadHorizon(usize),
    #[error("expected {HORIZON_STEPS} occupancy grids, found {0}")]
    GridCount(usize),
    #[error("cannot evaluate an empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Stp3,
    Uniad,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Stp3, Protocol::Uniad];

    pub fn name(&self) -> &'static str {
        match self {
            Protocol::Stp3 => "stp3",
            Protocol::Uniad => "uniad",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "stp3" => Ok(Protocol::Stp3),
            "uniad" => Ok(Protocol::Uniad),
            _ => Err(format!("unknown protocol '{s}'")),
        }
    }
}

fn horizon_steps(k: usize) -> Result<usize, MetricsError> {
    if HORIZONS.contains(&k) {
        Ok(RATE_HZ * k)
    } else {
        Err(MetricsError::BadHorizon(k))
    }
}

/// Aggregates per-step errors at horizon `k` seconds. `None` means the
/// horizon carries no visible step and the sample is excluded there.
pub fn aggregate_l2(
    errors: &[f64; HORIZON_STEPS],
    mask: &VisibilityMask,
    k: usize,
    proto: Protocol,
) -> Result<Option<f64>, MetricsError> {
    let n = horizon_steps(k)?;
    Ok(match proto {
        Protocol::Stp3 => {
            let (sum, count) = errors[..n]
                .iter()
                .zip(&mask.flags()[..n])
                .filter(|(_, &m)| m)
                .fold((0.0, 0usize), |(s, c), (d, _)| (s + d, c + 1));
            (count > 0).then(|| sum / count as f64)
        }
        Protocol::Uniad => mask.is_visible(n - 1).then(|| errors[n - 1]),
    })
}

pub fn l2_horizon(
    pred: &Trajectory,
    gt: &Trajectory,
    mask: &VisibilityMask,
    k: usize,
    proto: Protocol,
) -> Result<Option<f64>, MetricsError> {
    aggregate_l2(&step_errors(pred, gt), mask, k, proto)
}

fn box_hits(traj: &Trajectory, occ: &[OccupancyGrid], fp: &EgoFootprint, flipped: bool) -> [bool; HORIZON_STEPS] {
    std::array::from_fn(|t| {
        let grid = &occ[t];
        rasterize_footprint(traj[t], fp, grid.spec())
            .into_iter()
            .any(|cell| grid.get_oriented(cell, flipped))
    })
}

fn collision_steps_oriented(
    pred: &Trajectory,
    gt: &Trajectory,
    occ: &[OccupancyGrid],
    fp: &EgoFootprint,
    flipped: bool,
) -> Result<[bool; HORIZON_STEPS], MetricsError> {
    if occ.len() != HORIZON_STEPS {
        return Err(MetricsError::GridCount(occ.len()));
    }
    let pred_hits = box_hits(pred, occ, fp, flipped);
    let gt_hits = box_hits(gt, occ, fp, flipped);
    Ok(std::array::from_fn(|t| pred_hits[t] && !gt_hits[t]))
}

/// Box collision of the prediction at each step, with steps where the
/// ground-truth box itself collides zeroed out.
pub fn collision_steps(
    pred: &Trajectory,
    gt: &Trajectory,
    occ: &[OccupancyGrid],
    fp: &EgoFootprint,
) -> Result<[bool; HORIZON_STEPS], MetricsError> {
    collision_steps_oriented(pred, gt, occ, fp, false)
}

pub fn collision_horizon(steps: &[bool; HORIZON_STEPS], k: usize, proto: Protocol) -> Result<f64, MetricsError> {
    let n = horizon_steps(k)?;
    Ok(match proto {
        Protocol::Stp3 => steps[..n].iter().filter(|&&c| c).count() as f64 / n as f64,
        Protocol::Uniad => f64::from(u8::from(steps[n - 1])),
    })
}

/// Applies the protocol's load-time conventions to a trajectory and its grids.
pub fn apply_flip_conventions(
    traj: &Trajectory,
    occ: &[OccupancyGrid],
    proto: Protocol,
) -> (Trajectory, Vec<OccupancyGrid>) {
    match proto {
        Protocol::Stp3 => (traj.flip_x(), occ.iter().map(OccupancyGrid::flipped_both_axes).collect()),
        // Flipped in `update` and again in `evaluate_coll`.
        Protocol::Uniad => (traj.flip_x().flip_x(), occ.to_vec()),
    }
}

/// One planned trajectory with its ground truth and optional occupancy.
#[derive(Debug, Clone)]
pub struct EvalSample {
    pub pred: Trajectory,
    pub gt: Trajectory,
    pub mask: VisibilityMask,
    /// Six grids, one per step; samples without occupancy skip collision.
    pub occupancy: Option<Vec<OccupancyGrid>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub footprint: EgoFootprint,
    pub grid: BevGridSpec,
}

/// Per-sample values at each horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMetrics {
    pub l2: [Option<f64>; HORIZON_S],
    pub collision: Option<[f64; HORIZON_S]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub protocol: Protocol,
    pub n_samples: usize,
    /// L2 at 1/2/3 s; `None` if every sample was excluded at that horizon.
    pub l2: [Option<f64>; HORIZON_S],
    pub l2_avg: Option<f64>,
    /// Samples contributing to each L2 horizon.
    pub l2_counts: [usize; HORIZON_S],
    pub collision: [Option<f64>; HORIZON_S],
    pub collision_avg: Option<f64>,
    /// Samples that carried occupancy grids.
    pub collision_samples: usize,
}

impl MetricReport {
    /// Flat `(key, value)` pairs in a fixed order; `None` renders as `null`.
    pub fn fields(&self) -> Vec<(&'static str, String)> {
        let num = |v: Option<f64>| v.map_or_else(|| "null".to_string(), |v| v.to_string());
        vec![
            ("protocol", self.protocol.to_string()),
            ("n_samples", self.n_samples.to_string()),
            ("l2_1s", num(self.l2[0])),
            ("l2_2s", num(self.l2[1])),
            ("l2_3s", num(self.l2[2])),
            ("l2_avg", num(self.l2_avg)),
            ("l2_count_1s", self.l2_counts[0].to_string()),
            ("l2_count_2s", self.l2_counts[1].to_string()),
            ("l2_count_3s", self.l2_counts[2].to_string()),
            ("collision_1s", num(self.collision[0])),
            ("collision_2s", num(self.collision[1])),
            ("collision_3s", num(self.collision[2])),
            ("collision_avg", num(self.collision_avg)),
            ("collision_samples", self.collision_samples.to_string()),
        ]
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        self.fields()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Computes the per-horizon values of a single sample under `proto`,
/// including the protocol's flip conventions.
pub fn evaluate_sample(sample: &EvalSample, proto: Protocol, cfg: &EvalConfig) -> Result<SampleMetrics, MetricsError> {
    let errors = step_errors(&sample.pred, &sample.gt);
    let mut l2 = [None; HORIZON_S];
    for (slot, &k) in l2.iter_mut().zip(&HORIZONS) {
        *slot = aggregate_l2(&errors, &sample.mask, k, proto)?;
    }
    let collision = match &sample.occupancy {
        None => None,
        Some(grids) => {
            // ST-P3 flips the grids on load and negates x once for both
            // trajectories; UniAD's two x-flips cancel.
            let (pred, gt, flipped) = match proto {
                Protocol::Stp3 => (sample.pred.flip_x(), sample.gt.flip_x(), true),
                Protocol::Uniad => (sample.pred, sample.gt, false),
            };
            let steps = collision_steps_oriented(&pred, &gt, grids, &cfg.footprint, flipped)?;
            let mut rates = [0.0; HORIZON_S];
            for (slot, &k) in rates.iter_mut().zip(&HORIZONS) {
                *slot = collision_horizon(&steps, k, proto)?;
            }
            Some(rates)
        }
    };
    Ok(SampleMetrics { l2, collision })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn aggregate(per_sample: &[SampleMetrics], proto: Protocol) -> MetricReport {
    let mut l2 = [None; HORIZON_S];
    let mut l2_counts = [0; HORIZON_S];
    let mut collision = [None; HORIZON_S];
    for h in 0..HORIZON_S {
        l2[h] = mean(per_sample.iter().filter_map(|s| s.l2[h]));
        l2_counts[h] = per_sample.iter().filter(|s| s.l2[h].is_some()).count();
        collision[h] = mean(per_sample.iter().filter_map(|s| s.collision.map(|c| c[h])));
    }
    let avg = |v: &[Option<f64>; HORIZON_S]| -> Option<f64> {
        let [a, b, c] = *v;
        Some((a? + b? + c?) / 3.0)
    };
    MetricReport {
        protocol: proto,
        n_samples: per_sample.len(),
        l2_avg: avg(&l2),
        l2,
        l2_counts,
        collision_avg: avg(&collision),
        collision,
        collision_samples: per_sample.iter().filter(|s| s.collision.is_some()).count(),
    }
}

/// Batch metrics: per-sample values averaged over samples in input order.
/// Samples excluded at a horizon do not enter that horizon's mean.
pub fn evaluate_batch(samples: &[EvalSample], proto: Protocol, cfg: &EvalConfig) -> Result<MetricReport, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyBatch);
    }
    let per_sample = samples
        .iter()
        .map(|s| evaluate_sample(s, proto, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(&per_sample, proto))
}

/// Same as [`evaluate_batch`], computing samples on the current rayon pool.
/// The reduction runs sequentially in input order, so the result is
/// bit-identical to the sequential version.
pub fn evaluate_batch_par(samples: &[EvalSample], proto: Protocol, cfg: &EvalConfig) -> Result<MetricReport, MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyBatch);
    }
    let per_sample = samples
        .par_iter()
        .map(|s| evaluate_sample(s, proto, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(aggregate(&per_sample, proto))
}

//! Ego-frame geometry shared by every other module.
//!
//! Coordinates are bird's-eye view with the ego vehicle at the origin: `x` is
//! the lateral axis (positive to the right), `y` the longitudinal axis
//! (positive forward). A planning horizon is 3 s sampled at 2 Hz, so every
//! [`Trajectory`] carries exactly [`HORIZON_STEPS`] waypoints.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Waypoint sampling rate of planned and ground-truth trajectories.
pub const RATE_HZ: usize = 2;
/// Planning horizon in seconds.
pub const HORIZON_S: usize = 3;
/// Waypoints per trajectory.
pub const HORIZON_STEPS: usize = RATE_HZ * HORIZON_S;
/// Maximum number of past waypoints carried in the ego history (2 s at 2 Hz).
pub const MAX_HISTORY: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("expected {expected} waypoints, found {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("step index {0} outside 1..={HORIZON_STEPS}")]
    StepOutOfRange(usize),
    #[error("history holds {0} waypoints, at most {MAX_HISTORY} allowed")]
    HistoryTooLong(usize),
    #[error("object class label is empty")]
    EmptyClass,
    #[error("invalid grid spec: {0}")]
    GridSpec(String),
    #[error("invalid footprint: length {length}, width {width}")]
    Footprint { length: f64, width: f64 },
    #[error("invalid critical-object config: base radius {base_radius}, speed gain {speed_gain}")]
    CriticalConfig { base_radius: f64, speed_gain: f64 },
}

/// A BEV point in meters; serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Waypoint {
    /// Lateral offset.
    pub x: f64,
    /// Longitudinal offset.
    pub y: f64,
}

impl Waypoint {
    pub const ORIGIN: Waypoint = Waypoint { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Constructs a waypoint, rejecting NaN and infinities.
    pub fn checked(x: f64, y: f64) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(GeometryError::NonFinite(x, y))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(&self, other: &Waypoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

impl From<[f64; 2]> for Waypoint {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Waypoint> for [f64; 2] {
    fn from(w: Waypoint) -> Self {
        [w.x, w.y]
    }
}

/// A 3 s trajectory of six waypoints at 2 Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Waypoint>", into = "Vec<Waypoint>")]
pub struct Trajectory([Waypoint; HORIZON_STEPS]);

impl Trajectory {
    pub fn new(waypoints: [Waypoint; HORIZON_STEPS]) -> Result<Self, GeometryError> {
        if let Some(w) = waypoints.iter().find(|w| !w.is_finite()) {
            return Err(GeometryError::NonFinite(w.x, w.y));
        }
        Ok(Self(waypoints))
    }

    /// All waypoints equal to `w`.
    pub fn constant(w: Waypoint) -> Self {
        Self([w; HORIZON_STEPS])
    }

    pub fn from_fn(f: impl FnMut(usize) -> Waypoint) -> Result<Self, GeometryError> {
        Self::new(std::array::from_fn(f))
    }

    pub fn waypoints(&self) -> &[Waypoint; HORIZON_STEPS] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Waypoint> {
        self.0.iter()
    }

    /// Waypoint at a 1-based step index, as used by the metric formulas.
    pub fn at_step(&self, step: usize) -> Result<Waypoint, GeometryError> {
        if (1..=HORIZON_STEPS).contains(&step) {
            Ok(self.0[step - 1])
        } else {
            Err(GeometryError::StepOutOfRange(step))
        }
    }

    pub fn flip_x(&self) -> Self {
        Self(self.0.map(|w| Waypoint::new(-w.x, w.y)))
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self(self.0.map(|w| w.translated(dx, dy)))
    }
}

impl TryFrom<Vec<Waypoint>> for Trajectory {
    type Error = GeometryError;

    fn try_from(v: Vec<Waypoint>) -> Result<Self, Self::Error> {
        let found = v.len();
        let arr: [Waypoint; HORIZON_STEPS] = v.try_into().map_err(|_| GeometryError::WrongLength {
            expected: HORIZON_STEPS,
            found,
        })?;
        Self::new(arr)
    }
}

impl From<Trajectory> for Vec<Waypoint> {
    fn from(t: Trajectory) -> Self {
        t.0.to_vec()
    }
}

impl std::ops::Index<usize> for Trajectory {
    type Output = Waypoint;

    fn index(&self, i: usize) -> &Waypoint {
        &self.0[i]
    }
}

/// Per-step validity flags aligned with a trajectory; masked steps stay in
/// place so indices never shift. Serialized as a list of 0/1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct VisibilityMask([bool; HORIZON_STEPS]);

impl VisibilityMask {
    pub const ALL_VISIBLE: VisibilityMask = VisibilityMask([true; HORIZON_STEPS]);

    pub fn new(flags: [bool; HORIZON_STEPS]) -> Self {
        Self(flags)
    }

    pub fn flags(&self) -> &[bool; HORIZON_STEPS] {
        &self.0
    }

    pub fn is_visible(&self, index: usize) -> bool {
        self.0[index]
    }
}

impl Default for VisibilityMask {
    fn default() -> Self {
        Self::ALL_VISIBLE
    }
}

impl TryFrom<Vec<u8>> for VisibilityMask {
    type Error = String;

    fn try_from(v: Vec<u8>) -> Result<Self, Self::Error> {
        if v.len() != HORIZON_STEPS {
            return Err(format!("expected {HORIZON_STEPS} mask flags, found {}", v.len()));
        }
        let mut flags = [false; HORIZON_STEPS];
        for (slot, &f) in flags.iter_mut().zip(&v) {
            *slot = match f {
                0 => false,
                1 => true,
                other => return Err(format!("mask flag must be 0 or 1, found {other}")),
            };
        }
        Ok(Self(flags))
    }
}

impl From<VisibilityMask> for Vec<u8> {
    fn from(m: VisibilityMask) -> Self {
        m.0.iter().map(|&b| u8::from(b)).collect()
    }
}

/// Ego state in its own frame; the ego position is always the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub velocity: [f64; 2],
    pub acceleration: [f64; 2],
    pub yaw_deg: f64,
    /// Past waypoints, oldest first, at most [`MAX_HISTORY`].
    pub history: Vec<Waypoint>,
    pub mission_goal: String,
}

impl EgoState {
    pub fn position(&self) -> Waypoint {
        Waypoint::ORIGIN
    }

    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.history.len() > MAX_HISTORY {
            return Err(GeometryError::HistoryTooLong(self.history.len()));
        }
        let scalars = [
            self.velocity[0],
            self.velocity[1],
            self.acceleration[0],
            self.acceleration[1],
            self.yaw_deg,
        ];
        if let Some(bad) = scalars.iter().find(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite(*bad, *bad));
        }
        if let Some(w) = self.history.iter().find(|w| !w.is_finite()) {
            return Err(GeometryError::NonFinite(w.x, w.y));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: String,
    #[serde(rename = "class")]
    pub class_label: String,
    pub position: Waypoint,
    pub velocity: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub future: Option<Trajectory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<Waypoint>>,
}

impl ObjectState {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.class_label.trim().is_empty() {
            return Err(GeometryError::EmptyClass);
        }
        if !self.position.is_finite() {
            return Err(GeometryError::NonFinite(self.position.x, self.position.y));
        }
        if !(self.velocity[0].is_finite() && self.velocity[1].is_finite()) {
            return Err(GeometryError::NonFinite(self.velocity[0], self.velocity[1]));
        }
        Ok(())
    }
}

/// Radius rule `base_radius + speed_gain * |v_ego|` for picking the objects
/// that are serialized into the prompt.
///
/// The defaults are toolkit choices, not published values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalObjectConfig {
    /// Radius at standstill, meters.
    pub base_radius: f64,
    /// Additional radius per m/s of ego speed, seconds.
    pub speed_gain: f64,
}

impl Default for CriticalObjectConfig {
    fn default() -> Self {
        Self {
            base_radius: 20.0,
            speed_gain: 2.0,
        }
    }
}

impl CriticalObjectConfig {
    pub fn new(base_radius: f64, speed_gain: f64) -> Result<Self, GeometryError> {
        let cfg = Self {
            base_radius,
            speed_gain,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.base_radius > 0.0 && self.speed_gain >= 0.0 && self.speed_gain.is_finite() {
            Ok(())
        } else {
            Err(GeometryError::CriticalConfig {
                base_radius: self.base_radius,
                speed_gain: self.speed_gain,
            })
        }
    }

    pub fn radius(&self, ego_velocity: [f64; 2]) -> f64 {
        self.base_radius + self.speed_gain * ego_velocity[0].hypot(ego_velocity[1])
    }
}

/// Objects within the speed-adaptive radius, in input order.
pub fn select_critical_objects(
    objects: &[ObjectState],
    ego_velocity: [f64; 2],
    cfg: &CriticalObjectConfig,
) -> Vec<ObjectState> {
    let radius = cfg.radius(ego_velocity);
    objects
        .iter()
        .filter(|o| o.position.norm() <= radius)
        .cloned()
        .collect()
}

/// Euclidean error between two trajectories at a 1-based step.
pub fn displacement_at(pred: &Trajectory, gt: &Trajectory, step: usize) -> Result<f64, GeometryError> {
    Ok(pred.at_step(step)?.distance(&gt.at_step(step)?))
}

/// Per-step Euclidean errors for all six steps.
pub fn step_errors(pred: &Trajectory, gt: &Trajectory) -> [f64; HORIZON_STEPS] {
    std::array::from_fn(|i| pred[i].distance(&gt[i]))
}

/// Waypoints at the 1 s, 2 s and 3 s marks.
pub fn subsample_1hz(traj: &Trajectory) -> [Waypoint; HORIZON_S] {
    std::array::from_fn(|k| traj[(k + 1) * RATE_HZ - 1])
}

/// Regular BEV raster: cell `i` along axis `k` is centered at `bx[k] + i * dx[k]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BevGridSpec {
    pub dx: [f64; 2],
    pub bx: [f64; 2],
    pub dims: [usize; 2],
}

impl Default for BevGridSpec {
    fn default() -> Self {
        Self {
            dx: [0.5, 0.5],
            bx: [-50.0 + 0.25, -50.0 + 0.25],
            dims: [200, 200],
        }
    }
}

impl BevGridSpec {
    /// Grid spec centered on the ego covering `[-50, 50]` m on both axes.
    pub fn centered(dx: [f64; 2]) -> Result<Self, GeometryError> {
        let dims = [(100.0 / dx[0]).round() as usize, (100.0 / dx[1]).round() as usize];
        let spec = Self {
            dx,
            bx: [-50.0 + dx[0] / 2.0, -50.0 + dx[1] / 2.0],
            dims,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        for k in 0..2 {
            if !(self.dx[k] > 0.0) || self.dims[k] == 0 {
                return Err(GeometryError::GridSpec(format!("axis {k} has non-positive size")));
            }
            if (self.dims[k] as f64 * self.dx[k] - 100.0).abs() > 1e-9 {
                return Err(GeometryError::GridSpec(format!("axis {k} does not span 100 m")));
            }
            if (self.bx[k] - (-50.0 + self.dx[k] / 2.0)).abs() > 1e-9 {
                return Err(GeometryError::GridSpec(format!("axis {k} offset is not centered")));
            }
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1]
    }

    /// World coordinates of a cell center.
    pub fn cell_center(&self, cell: Cell) -> Waypoint {
        Waypoint::new(
            self.bx[0] + cell.row as f64 * self.dx[0],
            self.bx[1] + cell.col as f64 * self.dx[1],
        )
    }
}

/// Grid index: `row` runs along the lateral axis, `col` along the longitudinal axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

impl From<[usize; 2]> for Cell {
    fn from([row, col]: [usize; 2]) -> Self {
        Self { row, col }
    }
}

impl From<Cell> for [usize; 2] {
    fn from(c: Cell) -> Self {
        [c.row, c.col]
    }
}

/// Maps a point to its cell, or `None` when it lies outside the grid.
pub fn world_to_grid(p: Waypoint, spec: &BevGridSpec) -> Option<Cell> {
    let index = |v: f64, k: usize| -> Option<usize> {
        let i = ((v - (spec.bx[k] - spec.dx[k] / 2.0)) / spec.dx[k]).floor();
        (i >= 0.0 && i < spec.dims[k] as f64).then_some(i as usize)
    };
    Some(Cell::new(index(p.x, 0)?, index(p.y, 1)?))
}

/// Which rectangle side lies along which axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FootprintAxes {
    /// Length along the longitudinal (y) axis, width along the lateral (x) axis.
    #[default]
    LengthAlongY,
    LengthAlongX,
}

/// Axis-aligned ego rectangle used for box-collision checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoFootprint {
    pub length: f64,
    pub width: f64,
    #[serde(default)]
    pub axes: FootprintAxes,
}

impl Default for EgoFootprint {
    fn default() -> Self {
        Self {
            length: 4.084,
            width: 1.85,
            axes: FootprintAxes::LengthAlongY,
        }
    }
}

impl EgoFootprint {
    pub fn new(length: f64, width: f64, axes: FootprintAxes) -> Result<Self, GeometryError> {
        if length.is_finite() && width > 0.0 && length > width {
            Ok(Self { length, width, axes })
        } else {
            Err(GeometryError::Footprint { length, width })
        }
    }

    /// Half extents along (x, y).
    pub fn half_extents(&self) -> (f64, f64) {
        match self.axes {
            FootprintAxes::LengthAlongY => (self.width / 2.0, self.length / 2.0),
            FootprintAxes::LengthAlongX => (self.length / 2.0, self.width / 2.0),
        }
    }
}

/// Cells whose centers fall inside the footprint rectangle centered at
/// `center`; each axis interval is closed below and open above. Cells beyond
/// the grid are dropped. The result is sorted by (row, col).
pub fn rasterize_footprint(center: Waypoint, fp: &EgoFootprint, spec: &BevGridSpec) -> Vec<Cell> {
    let (hx, hy) = fp.half_extents();
    let rows = axis_cells(center.x - hx, center.x + hx, spec, 0);
    let cols = axis_cells(center.y - hy, center.y + hy, spec, 1);
    let mut cells = Vec::with_capacity(rows.len() * cols.len());
    for &row in &rows {
        for &col in &cols {
            cells.push(Cell::new(row, col));
        }
    }
    cells
}

/// Indices `i` along axis `k` with `lo <= bx + i*dx < hi`.
fn axis_cells(lo: f64, hi: f64, spec: &BevGridSpec, k: usize) -> Vec<usize> {
    let (bx, dx, n) = (spec.bx[k], spec.dx[k], spec.dims[k] as i64);
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Vec::new();
    }
    // The closed form can be off by one at rounding boundaries, so scan one
    // extra index on each side and apply the exact predicate.
    let first = (((lo - bx) / dx).ceil() as i64 - 1).max(0);
    let last = (((hi - bx) / dx).ceil() as i64).min(n - 1);
    (first..=last)
        .filter(|&i| {
            let c = bx + i as f64 * dx;
            lo <= c && c < hi
        })
        .map(|i| i as usize)
        .collect()
}

/// Binary BEV occupancy for one timestep, row-major over `spec.dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    spec: BevGridSpec,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(spec: BevGridSpec) -> Self {
        Self {
            cells: vec![false; spec.cell_count()],
            spec,
        }
    }

    pub fn from_cells(spec: BevGridSpec, occupied: impl IntoIterator<Item = Cell>) -> Self {
        let mut grid = Self::empty(spec);
        for cell in occupied {
            grid.set(cell, true);
        }
        grid
    }

    pub fn spec(&self) -> &BevGridSpec {
        &self.spec
    }

    fn offset(&self, cell: Cell) -> Option<usize> {
        (cell.row < self.spec.dims[0] && cell.col < self.spec.dims[1])
            .then(|| cell.row * self.spec.dims[1] + cell.col)
    }

    /// Out-of-range cells read as free.
    pub fn get(&self, cell: Cell) -> bool {
        self.offset(cell).is_some_and(|i| self.cells[i])
    }

    /// Writes are ignored outside the grid.
    pub fn set(&mut self, cell: Cell, occupied: bool) {
        if let Some(i) = self.offset(cell) {
            self.cells[i] = occupied;
        }
    }

    pub fn occupied_cells(&self) -> Vec<Cell> {
        let cols = self.spec.dims[1];
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| Cell::new(i / cols, i % cols))
            .collect()
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&v| v).count()
    }

    /// The grid reversed along both axes.
    pub fn flipped_both_axes(&self) -> Self {
        let mut cells = self.cells.clone();
        cells.reverse();
        Self {
            spec: self.spec,
            cells,
        }
    }

    /// Reads a cell through an optional both-axes flip without copying.
    pub(crate) fn get_oriented(&self, cell: Cell, flipped: bool) -> bool {
        if !flipped {
            return self.get(cell);
        }
        let [rows, cols] = self.spec.dims;
        if cell.row >= rows || cell.col >= cols {
            return false;
        }
        self.get(Cell::new(rows - 1 - cell.row, cols - 1 - cell.col))
    }
}

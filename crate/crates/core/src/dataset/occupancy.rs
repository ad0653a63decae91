//! Occupancy files: one JSON document per sample listing the occupied cells
//! of each future step.
//!
//! ```json
//! {"grid": {"dx": [0.5, 0.5], "bx": [-49.75, -49.75], "dims": [200, 200]},
//!  "steps": [[[r, c], ...], ... 6 lists]}
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geometry::{BevGridSpec, Cell, OccupancyGrid, HORIZON_STEPS};

use super::DatasetError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyRecord {
    pub grid: BevGridSpec,
    pub steps: Vec<Vec<Cell>>,
}

impl OccupancyRecord {
    pub fn from_grids(grids: &[OccupancyGrid]) -> Self {
        Self {
            grid: grids.first().map(|g| *g.spec()).unwrap_or_default(),
            steps: grids.iter().map(OccupancyGrid::occupied_cells).collect(),
        }
    }

    /// Checks the grid spec, step count and cell bounds, then expands.
    pub fn to_grids(&self) -> Result<Vec<OccupancyGrid>, String> {
        self.grid.validate().map_err(|e| e.to_string())?;
        if self.steps.len() != HORIZON_STEPS {
            return Err(format!("expected {HORIZON_STEPS} steps, found {}", self.steps.len()));
        }
        let [rows, cols] = self.grid.dims;
        for (t, cells) in self.steps.iter().enumerate() {
            if let Some(c) = cells.iter().find(|c| c.row >= rows || c.col >= cols) {
                return Err(format!("step {t}: cell [{}, {}] outside the grid", c.row, c.col));
            }
        }
        Ok(self
            .steps
            .iter()
            .map(|cells| OccupancyGrid::from_cells(self.grid, cells.iter().copied()))
            .collect())
    }
}

pub fn load_occupancy(path: impl AsRef<Path>) -> Result<Vec<OccupancyGrid>, DatasetError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let record: OccupancyRecord = serde_json::from_str(&text).map_err(|e| DatasetError::Occupancy {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    record.to_grids().map_err(|message| DatasetError::Occupancy {
        path: path.display().to_string(),
        message,
    })
}

pub fn save_occupancy(path: impl AsRef<Path>, grids: &[OccupancyGrid]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let text = serde_json::to_string(&OccupancyRecord::from_grids(grids)).expect("occupancy serializes");
    std::fs::write(path, text + "\n").map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

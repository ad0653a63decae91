//! Trajectory planning toolkit: ego-frame geometry, open-loop planning
//! metrics, meta-action labeling, dataset records and prompts, and a toy
//! trajectory preference optimization loop.

pub mod dataset;
pub mod geometry;
pub mod meta_actions;
pub mod metrics;
pub mod synthetic;
pub mod tpo;

//! Trajectory and user-scheduling design for a UAV that serves downlink users
//! while keeping on-demand localization accuracy over a sensing region.

pub mod audit;
pub mod comm;
pub mod error;
pub mod model;
pub mod optimizer;
pub mod refpoints;
pub mod sca;
pub mod sensing;
pub mod solver;

pub use error::{Error, Result};
pub use model::{
    Assignment, DetectionSpec, Disc, Point, SensingRegion, SystemParams, Trajectory, UserSet,
};

//! Differentiable articulated-body simulation and trajectory optimization for
//! reconstructing physically plausible human motion from video keypoints.

pub mod error;
pub mod fixtures;
pub mod io;
pub mod body;
pub mod control;
pub mod dynamics;
pub mod mathcore;
pub mod metrics;
pub mod objectives;
pub mod optimizer;
pub mod scene;

pub use error::{Error, Result};

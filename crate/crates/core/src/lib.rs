//! Joint trajectory and beamforming design for multi-UAV integrated sensing and
//! communication networks.

pub mod channel;
pub mod cli;
pub mod comm;
pub mod conic;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod orchestrator;
pub mod report;
pub mod rl;
pub mod scenario;
pub mod sensing;

pub use error::{Error, Result};

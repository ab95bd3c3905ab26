//! Telemetry-driven adaptive display engine for in-vehicle screens.
//!
//! Raw IMU + GPS samples flow through [`telemetry`] (parse, resample, despike)
//! and [`kinematics`] (speed, longitudinal acceleration, yaw rate) into
//! [`geometry`], which bends the virtual road and sets the scene speed for
//! each frame. [`prompts`] drives the anticipatory maneuver symbol,
//! [`analysis`] holds the offline motion sickness metrics, and [`session`]
//! ties everything together for replay, live serving and persistence.

pub mod analysis;
pub mod error;
pub mod geo;
pub mod geometry;
pub mod kinematics;
pub mod prompts;
pub mod session;
pub mod telemetry;

pub use error::{Error, Result};

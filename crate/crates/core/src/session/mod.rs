//! Orchestration: replay of ride logs, the live endpoint, the toy vehicle
//! model and session persistence.

mod live;
mod log;
mod replay;
mod sim;
mod stats;
pub mod synth;

use serde::{Deserialize, Serialize};

use crate::geo::GeoPoint;
use crate::geometry::{BendParams, CameraMode, FrameGeometry, RoadControlPoint};
use crate::kinematics::{YawSign, DEFAULT_ALPHA};
use crate::telemetry::{DEFAULT_RATE_HZ, MAX_RATE_HZ};
use crate::{Error, Result};

pub use live::{serve, ConnId, LiveSession, ServeOptions, ServerHandle};
pub use log::{
    export, export_to_string, import, import_str, session_hash, sha256_hex, CadenceGap, ControlRecord, SessionHeader,
    SessionLog, SessionWriter, SESSION_FILE,
};
pub use replay::{prepare_series, replay, replay_detailed, replay_files, ReplayOutput, SERIES_FILE};
pub use sim::{sim_step, synthetic_motion, ControlInput, VehicleState};
pub use stats::{condition_stats, ConditionStats, ConditionSummary};

pub const DEFAULT_FRAME_RATE_HZ: f64 = 30.0;
pub const DEFAULT_DESPIKE_WINDOW: usize = 5;
pub const DEFAULT_DESPIKE_CLAMP: f64 = 100.0;
/// Participants are expected to report at least this often.
pub const REPORT_INTERVAL_S: f64 = 30.0;

/// Pipeline configuration, read from the `--params` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub params: BendParams,
    /// EMA weight for the motion channels.
    pub alpha: f64,
    pub frame_rate_hz: f64,
    pub resample_rate_hz: f64,
    pub despike_window: usize,
    pub despike_clamp: f64,
    pub yaw_sign: YawSign,
    /// Forward distances of the road control points (m).
    pub base_points: Vec<f64>,
    /// Map position of the live vehicle's start point. Needed for geofenced
    /// zones and for locating live MS reports.
    pub origin: Option<GeoPoint>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            params: BendParams::default(),
            alpha: DEFAULT_ALPHA,
            frame_rate_hz: DEFAULT_FRAME_RATE_HZ,
            resample_rate_hz: DEFAULT_RATE_HZ,
            despike_window: DEFAULT_DESPIKE_WINDOW,
            despike_clamp: DEFAULT_DESPIKE_CLAMP,
            yaw_sign: YawSign::default(),
            base_points: crate::geometry::default_base_points(),
            origin: None,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Config = serde_json::from_str(text).map_err(|e| Error::Config(format!("params file: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.resample_rate_hz > 0.0 && self.resample_rate_hz <= MAX_RATE_HZ) {
            return Err(Error::Config(format!("resample rate {} outside (0, {MAX_RATE_HZ}]", self.resample_rate_hz)));
        }
        // The vehicle model steps at the frame period, which must stay <= 0.1 s.
        if !(self.frame_rate_hz >= 10.0 && self.frame_rate_hz <= self.resample_rate_hz) {
            return Err(Error::Config(format!(
                "frame rate {} must lie in [10, resample rate {}]",
                self.frame_rate_hz, self.resample_rate_hz
            )));
        }
        if self.despike_window == 0 || self.despike_window.is_multiple_of(2) {
            return Err(Error::Config(format!("despike window {} must be odd", self.despike_window)));
        }
        if !(self.despike_clamp.is_finite() && self.despike_clamp > 0.0) {
            return Err(Error::Config(format!("despike clamp {} must be positive and finite", self.despike_clamp)));
        }
        if self.base_points.is_empty() {
            return Err(Error::Config("no road control points".into()));
        }
        crate::geometry::bend_road(&self.base_points, 0.0, &self.params)
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

/// One display frame as sent to cockpits and stored in session logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePacket {
    pub seq: u64,
    pub t: f64,
    pub scene_speed: f64,
    pub scene_accel: f64,
    pub bend_g: f64,
    pub control_points: Vec<RoadControlPoint>,
    pub prompt_on: bool,
    pub brake_light: bool,
    pub camera_mode: CameraMode,
}

impl FramePacket {
    pub fn new(seq: u64, frame: FrameGeometry) -> Self {
        Self {
            seq,
            t: frame.t,
            scene_speed: frame.scene_speed,
            scene_accel: frame.scene_accel,
            bend_g: frame.bend_g,
            control_points: frame.control_points,
            prompt_on: frame.prompt_on,
            brake_light: frame.brake_light,
            camera_mode: frame.camera_mode,
        }
    }
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Frame(FramePacket),
    /// Sent to the originating connection when one of its messages is rejected.
    Error { message: String },
}

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// `throttle` in m/s², `steer` in °/s.
    Control { throttle: f64, steer: f64 },
    Ms {
        eye: u8,
        head: u8,
        stomach: u8,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        participant: Option<String>,
    },
}

impl ServerMessage {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("server message serializes");
        s.push('\n');
        s
    }
}

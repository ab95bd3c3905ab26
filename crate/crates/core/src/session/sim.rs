use serde::{Deserialize, Serialize};

use crate::kinematics::MotionState;
use crate::{Error, Result};

pub const MAX_DT_S: f64 = 0.1;

/// Toy vehicle for the human-steered mode. `heading` is in degrees clockwise
/// from +y (north); `x` points east.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// m/s²
    pub throttle: f64,
    /// °/s, positive turns right
    pub steer: f64,
}

/// Advances the vehicle by `dt` seconds. Speed never goes negative.
pub fn sim_step(state: &VehicleState, input: &ControlInput, dt: f64) -> Result<VehicleState> {
    if !(dt > 0.0 && dt <= MAX_DT_S) {
        return Err(Error::Argument(format!("time step {dt} outside (0, {MAX_DT_S}]")));
    }
    if !(input.throttle.is_finite() && input.steer.is_finite()) {
        return Err(Error::Argument("control input must be finite".into()));
    }
    let heading = (state.heading + input.steer * dt).rem_euclid(360.0);
    let v = (state.v + input.throttle * dt).max(0.0);
    let (sin, cos) = heading.to_radians().sin_cos();
    Ok(VehicleState { x: state.x + v * dt * sin, y: state.y + v * dt * cos, heading, v })
}

/// Motion state fed to the display pipeline for the current input.
pub fn synthetic_motion(t: f64, state: &VehicleState, input: &ControlInput) -> MotionState {
    MotionState { t, v: state.v, a_long: input.throttle, a_steer: input.steer }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coasting() {
        let s = sim_step(&VehicleState { v: 10.0, ..Default::default() }, &ControlInput::default(), 0.1).unwrap();
        assert!((s.y - 1.0).abs() < 1e-12);
        assert!(s.x.abs() < 1e-12);
        assert_eq!(s.heading, 0.0);
    }

    #[test]
    fn no_reverse() {
        let s = sim_step(&VehicleState::default(), &ControlInput { throttle: -1.0, steer: 0.0 }, 0.1).unwrap();
        assert_eq!(s.v, 0.0);
        assert_eq!((s.x, s.y), (0.0, 0.0));
    }

    #[test]
    fn steering() {
        let s = sim_step(&VehicleState::default(), &ControlInput { throttle: 0.0, steer: 90.0 }, 0.1).unwrap();
        assert!((s.heading - 9.0).abs() < 1e-12);
        let s = sim_step(&VehicleState::default(), &ControlInput { throttle: 0.0, steer: -90.0 }, 0.1).unwrap();
        assert!((s.heading - 351.0).abs() < 1e-12);
    }

    #[test]
    fn dt_bounds() {
        let i = ControlInput::default();
        assert!(sim_step(&VehicleState::default(), &i, 0.0).is_err());
        assert!(sim_step(&VehicleState::default(), &i, 0.2).is_err());
    }
}

//! Road-bending display law and per-frame scene state.
//!
//! A forward road point at distance `y` (meters, measured from the camera) is
//! displaced laterally by `g(a) * y²`, where `a` is the yaw rate and
//!
//! ```text
//! g(a) = sign(a) * k * σ(z(|a|)),   g(0) = 0
//! z(|a|) = (10|a| - 5(a_max + a_min)) / (a_max - a_min)
//! ```
//!
//! `z` maps `[a_min, a_max]` onto `[-5, 5]`, so the logistic stays flat below
//! the detection threshold and saturates near `a_max`. One scene unit is one
//! meter.

use serde::{Deserialize, Serialize};

use crate::kinematics::MotionState;
use crate::{Error, Result};

/// Default forward spacing of base control points (m).
pub const BASE_POINT_SPACING_M: f64 = 5.0;
/// Default renderable horizon (m).
pub const HORIZON_M: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraMode {
    FirstPerson,
    #[default]
    ThirdPerson,
}

/// How the yaw rate is mapped onto the logistic's input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Affine map sending `a_min -> -5` and `a_max -> +5`.
    #[default]
    Corrected,
    /// `10|a| - 5(a_max + a_min)/(a_max - a_min)`, kept for comparison only.
    /// It does not map the threshold range onto `[-5, 5]`.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BendParams {
    pub k: f64,
    /// °/s
    pub a_min: f64,
    /// °/s
    pub a_max: f64,
    /// m/s², brake light turns on below this
    pub brake_threshold: f64,
    pub camera_mode: CameraMode,
    pub normalization: Normalization,
}

impl Default for BendParams {
    fn default() -> Self {
        Self {
            k: 0.3,
            a_min: 2.6,
            a_max: 10.0,
            brake_threshold: -0.5,
            camera_mode: CameraMode::ThirdPerson,
            normalization: Normalization::Corrected,
        }
    }
}

impl BendParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.k, self.a_min, self.a_max, self.brake_threshold].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("bend parameters must be finite".into()));
        }
        if self.k <= 0.0 {
            return Err(Error::Config(format!("k must be positive, got {}", self.k)));
        }
        if !(0.0 < self.a_min && self.a_min < self.a_max) {
            return Err(Error::Config(format!(
                "need 0 < a_min < a_max, got a_min={} a_max={}",
                self.a_min, self.a_max
            )));
        }
        if self.brake_threshold >= 0.0 {
            return Err(Error::Config(format!("brake threshold must be negative, got {}", self.brake_threshold)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadControlPoint {
    /// Meters forward of the camera point.
    pub y: f64,
    /// Meters lateral, positive to the right.
    pub x: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameGeometry {
    pub t: f64,
    pub scene_speed: f64,
    pub scene_accel: f64,
    pub bend_g: f64,
    pub control_points: Vec<RoadControlPoint>,
    pub prompt_on: bool,
    pub brake_light: bool,
    pub camera_mode: CameraMode,
}

/// Logistic function, evaluated without overflow for large |z|.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Maps a yaw-rate magnitude onto the logistic's working range.
pub fn z_norm(a: f64, params: &BendParams) -> f64 {
    let a = a.abs();
    let (lo, hi) = (params.a_min, params.a_max);
    match params.normalization {
        Normalization::Corrected => (10.0 * a - 5.0 * (hi + lo)) / (hi - lo),
        Normalization::AsPrinted => 10.0 * a - 5.0 * (hi + lo) / (hi - lo),
    }
}

/// Signed bend coefficient `g(a)` in 1/m.
pub fn bend_coefficient(a_steer: f64, params: &BendParams) -> f64 {
    if a_steer == 0.0 {
        return 0.0;
    }
    let mut g = params.k * logistic(z_norm(a_steer, params));
    if g >= params.k {
        // The logistic rounded up to 1. The exact value lies between k and
        // the next float below it; take the lower one so that |g| < k.
        g = f64::from_bits(params.k.to_bits() - 1);
    }
    a_steer.signum() * g
}

pub fn lateral_deviation(a_steer: f64, y: f64, params: &BendParams) -> Result<f64> {
    if y.is_nan() || y < 0.0 {
        return Err(Error::Argument(format!("forward distance must be >= 0, got {y}")));
    }
    Ok(bend_coefficient(a_steer, params) * y * y)
}

/// Displaces each base point sideways by `g(a) * y²`.
pub fn bend_road(base_points: &[f64], a_steer: f64, params: &BendParams) -> Result<Vec<RoadControlPoint>> {
    check_base_points(base_points)?;
    let g = bend_coefficient(a_steer, params);
    Ok(base_points.iter().map(|&y| RoadControlPoint { y, x: g * y * y }).collect())
}

fn check_base_points(base_points: &[f64]) -> Result<()> {
    if let Some(&y) = base_points.iter().find(|y| !(y.is_finite() && **y >= 0.0)) {
        return Err(Error::Argument(format!("control point y={y} must be finite and >= 0")));
    }
    if let Some(w) = base_points.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::Argument(format!("control points not strictly increasing at {} -> {}", w[0], w[1])));
    }
    Ok(())
}

/// `0, 5, 10, …, 100` m.
pub fn default_base_points() -> Vec<f64> {
    let n = (HORIZON_M / BASE_POINT_SPACING_M).round() as usize;
    (0..=n).map(|i| i as f64 * BASE_POINT_SPACING_M).collect()
}

/// Reference objects move past the camera at the vehicle's own speed and
/// acceleration.
pub fn scene_motion(state: &MotionState) -> (f64, f64) {
    (state.v, state.a_long)
}

pub fn make_frame(
    state: &MotionState,
    prompt_on: bool,
    base_points: &[f64],
    params: &BendParams,
) -> Result<FrameGeometry> {
    params.validate()?;
    let (scene_speed, scene_accel) = scene_motion(state);
    Ok(FrameGeometry {
        t: state.t,
        scene_speed,
        scene_accel,
        bend_g: bend_coefficient(state.a_steer, params),
        control_points: bend_road(base_points, state.a_steer, params)?,
        prompt_on,
        brake_light: state.a_long < params.brake_threshold,
        camera_mode: params.camera_mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: BendParams = BendParams {
        k: 0.3,
        a_min: 2.6,
        a_max: 10.0,
        brake_threshold: -0.5,
        camera_mode: CameraMode::ThirdPerson,
        normalization: Normalization::Corrected,
    };

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn z_norm_endpoints() {
        assert!(close(z_norm(2.6, &P), -5.0, 1e-12));
        assert!(close(z_norm(10.0, &P), 5.0, 1e-12));
        assert_eq!(z_norm(6.3, &P), 0.0);
        assert_eq!(z_norm(-10.0, &P), z_norm(10.0, &P));
    }

    #[test]
    fn printed_form_breaks_range() {
        let p = BendParams { normalization: Normalization::AsPrinted, ..P };
        // 10 * 2.6 - 5 * 12.6 / 7.4
        assert!(close(z_norm(2.6, &p), 26.0 - 63.0 / 7.4, 1e-12));
        assert!(z_norm(10.0, &p) > 5.0);
    }

    #[test]
    fn coefficient_values() {
        assert_eq!(bend_coefficient(0.0, &P), 0.0);
        assert_eq!(bend_coefficient(-0.0, &P), 0.0);
        assert_eq!(bend_coefficient(6.3, &P), 0.15);
        // 40-digit logistic references
        assert!(close(bend_coefficient(2.6, &P), 0.002007855277285457, 1e-15));
        assert!(close(bend_coefficient(10.0, &P), 0.2979921447227145, 1e-15));
        assert!(close(bend_coefficient(-10.0, &P), -0.2979921447227145, 1e-15));
    }

    #[test]
    fn near_zero_is_tiny() {
        assert!(bend_coefficient(1e-9, &P).abs() < 1e-4);
        assert!(bend_coefficient(1e-9, &P) > 0.0);
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert_eq!(logistic(-1000.0), 0.0);
        assert_eq!(logistic(1000.0), 1.0);
    }

    #[test]
    fn saturation_stays_below_k() {
        let g = bend_coefficient(500.0, &P);
        assert!(g < P.k);
        assert_eq!(g, f64::from_bits(P.k.to_bits() - 1));
        assert_eq!(bend_coefficient(-500.0, &P), -g);
    }

    #[test]
    fn deviation() {
        assert_eq!(lateral_deviation(7.0, 0.0, &P).unwrap(), 0.0);
        assert_eq!(lateral_deviation(6.3, 10.0, &P).unwrap(), 15.0);
        assert_eq!(lateral_deviation(0.0, 50.0, &P).unwrap(), 0.0);
        assert!(matches!(lateral_deviation(1.0, -1.0, &P), Err(Error::Argument(_))));
    }

    #[test]
    fn bending() {
        let xs = |a| bend_road(&[0.0, 10.0, 20.0], a, &P).unwrap().iter().map(|p| p.x).collect::<Vec<_>>();
        assert_eq!(xs(0.0), vec![0.0, 0.0, 0.0]);
        assert_eq!(xs(6.3), vec![0.0, 15.0, 60.0]);
        assert_eq!(xs(-6.3), vec![-0.0, -15.0, -60.0]);
        assert!(bend_road(&[0.0, 20.0, 10.0], 1.0, &P).is_err());
        assert!(bend_road(&[-1.0, 20.0], 1.0, &P).is_err());
    }

    #[test]
    fn default_points() {
        let pts = default_base_points();
        assert_eq!(pts.len(), 21);
        assert_eq!(pts[20], 100.0);
    }

    #[test]
    fn frames() {
        let state = MotionState { t: 1.0, v: 11.1, a_long: 0.0, a_steer: 6.3 };
        let f = make_frame(&state, true, &[0.0, 10.0, 20.0], &P).unwrap();
        assert_eq!(f.scene_speed, 11.1);
        assert_eq!(f.bend_g, 0.15);
        assert_eq!(f.control_points.iter().map(|p| p.x).collect::<Vec<_>>(), vec![0.0, 15.0, 60.0]);
        assert!(!f.brake_light);
        assert!(f.prompt_on);

        let braking = MotionState { a_long: -1.0, ..state };
        assert!(make_frame(&braking, false, &[0.0], &P).unwrap().brake_light);
        assert_eq!(scene_motion(&MotionState { t: 0.0, v: 10.0, a_long: 2.0, a_steer: 0.0 }), (10.0, 2.0));
    }

    #[test]
    fn params_validation() {
        assert!(P.validate().is_ok());
        assert!(BendParams { a_min: 10.0, ..P }.validate().is_err());
        assert!(BendParams { k: 0.0, ..P }.validate().is_err());
        assert!(BendParams { brake_threshold: 0.1, ..P }.validate().is_err());
    }
}

//! Speed, longitudinal acceleration and yaw rate from a uniform series.

use serde::{Deserialize, Serialize};

use crate::telemetry::UniformSeries;
use crate::{Error, Result};

pub const MIN_RATE_HZ: f64 = 10.0;
pub const DEFAULT_ALPHA: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionState {
    pub t: f64,
    /// m/s, never negative
    pub v: f64,
    /// m/s²
    pub a_long: f64,
    /// Yaw rate in °/s, positive for a rightward turn.
    pub a_steer: f64,
}

impl MotionState {
    pub fn lerp(&self, other: &MotionState, f: f64) -> MotionState {
        let mix = |a: f64, b: f64| a + (b - a) * f;
        MotionState {
            t: mix(self.t, other.t),
            v: mix(self.v, other.v),
            a_long: mix(self.a_long, other.a_long),
            a_steer: mix(self.a_steer, other.a_steer),
        }
    }
}

/// Which gyro-z sign corresponds to a rightward turn. Depends on how the IMU
/// is mounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YawSign {
    #[default]
    RightPositive,
    LeftPositive,
}

impl YawSign {
    fn factor(self) -> f64 {
        match self {
            YawSign::RightPositive => 1.0,
            YawSign::LeftPositive => -1.0,
        }
    }
}

pub fn derive_motion(series: &UniformSeries) -> Result<Vec<MotionState>> {
    derive_motion_with(series, YawSign::RightPositive)
}

/// One [`MotionState`] per sample: speed from GPS, yaw rate from gyro-z and
/// longitudinal acceleration as the centered difference of speed (one-sided
/// at the ends).
pub fn derive_motion_with(series: &UniformSeries, yaw_sign: YawSign) -> Result<Vec<MotionState>> {
    if series.is_empty() {
        return Err(Error::InsufficientData("empty series".into()));
    }
    let rate = series.rate_hz();
    if rate < MIN_RATE_HZ {
        return Err(Error::Argument(format!("series rate {rate} Hz below {MIN_RATE_HZ} Hz")));
    }
    let samples = series.samples();
    let mut speed = Vec::with_capacity(samples.len());
    let mut yaw = Vec::with_capacity(samples.len());
    for s in samples {
        let gps = s.gps.ok_or(Error::MissingChannel { channel: "gps", t: s.t })?;
        let gyro = s.gyro.ok_or(Error::MissingChannel { channel: "gyro", t: s.t })?;
        if !(gps.speed.is_finite() && gps.speed >= 0.0) {
            return Err(Error::Validation(format!("speed {} at t={} must be finite and >= 0", gps.speed, s.t)));
        }
        speed.push(gps.speed);
        yaw.push(gyro[2] * yaw_sign.factor());
    }
    let n = speed.len();
    let a_long = |i: usize| -> f64 {
        if n == 1 {
            0.0
        } else if i == 0 {
            (speed[1] - speed[0]) * rate
        } else if i == n - 1 {
            (speed[n - 1] - speed[n - 2]) * rate
        } else {
            (speed[i + 1] - speed[i - 1]) * rate / 2.0
        }
    };
    Ok(samples
        .iter()
        .enumerate()
        .map(|(i, s)| MotionState { t: s.t, v: speed[i], a_long: a_long(i), a_steer: yaw[i] })
        .collect())
}

/// Exponential moving average over the three motion channels.
#[derive(Debug, Clone)]
pub struct Ema {
    alpha: f64,
    state: Option<MotionState>,
}

impl Ema {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Argument(format!("smoothing alpha {alpha} outside (0, 1]")));
        }
        Ok(Self { alpha, state: None })
    }

    pub fn update(&mut self, input: MotionState) -> MotionState {
        let out = match self.state {
            None => input,
            Some(prev) => {
                let step = |p: f64, x: f64| if self.alpha == 1.0 { x } else { p + self.alpha * (x - p) };
                MotionState {
                    t: input.t,
                    v: step(prev.v, input.v).max(0.0),
                    a_long: step(prev.a_long, input.a_long),
                    a_steer: step(prev.a_steer, input.a_steer),
                }
            }
        };
        self.state = Some(out);
        out
    }
}

pub fn smooth(states: &[MotionState], alpha: f64) -> Result<Vec<MotionState>> {
    let mut ema = Ema::new(alpha)?;
    if states.is_empty() {
        return Err(Error::InsufficientData("nothing to smooth".into()));
    }
    Ok(states.iter().map(|&s| ema.update(s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{resample, GpsFix, RawSample};

    fn series(rate: f64, n: usize, gz: impl Fn(f64) -> f64, v: impl Fn(f64) -> f64) -> UniformSeries {
        let raw: Vec<RawSample> = (0..n)
            .map(|i| {
                let t = i as f64 / rate;
                RawSample::new(t, [0.0; 3], [0.0, 0.0, gz(t)], GpsFix { lat: 0.0, lon: 0.0, speed: v(t) })
            })
            .collect();
        resample(&raw, rate).unwrap()
    }

    fn state(a_steer: f64) -> MotionState {
        MotionState { t: 0.0, v: 0.0, a_long: 0.0, a_steer }
    }

    #[test]
    fn constant_inputs() {
        let states = derive_motion(&series(50.0, 20, |_| 5.0, |_| 10.0)).unwrap();
        assert_eq!(states.len(), 20);
        assert!(states.iter().all(|s| s.a_steer == 5.0 && s.a_long == 0.0 && s.v == 10.0));
    }

    #[test]
    fn ramp_slope() {
        let states = derive_motion(&series(50.0, 51, |_| 0.0, |t| 10.0 + 2.0 * t)).unwrap();
        for s in &states[1..50] {
            assert!((s.a_long - 2.0).abs() < 1e-9, "{}", s.a_long);
        }
    }

    #[test]
    fn all_zero() {
        let states = derive_motion(&series(50.0, 10, |_| 0.0, |_| 0.0)).unwrap();
        assert!(states.iter().all(|s| s.v == 0.0 && s.a_long == 0.0 && s.a_steer == 0.0));
    }

    #[test]
    fn left_positive_flips_yaw() {
        let states = derive_motion_with(&series(50.0, 3, |_| 4.0, |_| 1.0), YawSign::LeftPositive).unwrap();
        assert!(states.iter().all(|s| s.a_steer == -4.0));
    }

    #[test]
    fn low_rate_rejected() {
        assert!(matches!(derive_motion(&series(5.0, 10, |_| 0.0, |_| 0.0)), Err(Error::Argument(_))));
    }

    #[test]
    fn ema_by_hand() {
        let out = smooth(&[state(0.0), state(10.0)], 0.5).unwrap();
        assert_eq!(out[0].a_steer, 0.0);
        assert_eq!(out[1].a_steer, 5.0);
    }

    #[test]
    fn alpha_one_is_identity() {
        let input = vec![state(1.0), state(-3.0), state(7.5)];
        assert_eq!(smooth(&input, 1.0).unwrap(), input);
    }

    #[test]
    fn constants_preserved() {
        let input = vec![state(6.3); 40];
        assert_eq!(smooth(&input, 0.3).unwrap(), input);
    }

    #[test]
    fn alpha_bounds() {
        assert!(matches!(smooth(&[state(0.0)], 0.0), Err(Error::Argument(_))));
        assert!(matches!(smooth(&[state(0.0)], 1.5), Err(Error::Argument(_))));
        assert!(matches!(smooth(&[], 0.5), Err(Error::InsufficientData(_))));
    }
}

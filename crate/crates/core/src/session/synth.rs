//! Deterministic 60 s ride used by the acceptance suite and the CLI demo:
//! pull away, cruise, a steady right turn at 6.3 °/s, cruise, brake, crawl.

use crate::geo::{offset, GeoPoint};
use crate::prompts::{ManeuverZone, Route, ZoneKind, ZoneSchedule};
use crate::telemetry::{GpsFix, RawSample};

pub const RATE_HZ: f64 = 50.0;
pub const DURATION_S: f64 = 60.0;
pub const CRUISE_SPEED: f64 = 11.1;
pub const TURN_RATE: f64 = 6.3;
pub const TURN: (f64, f64) = (20.0, 35.0);
pub const BRAKE: (f64, f64) = (45.0, 52.0);
pub const BRAKE_DECEL: f64 = -1.2;
pub const ORIGIN: GeoPoint = GeoPoint { lat: 34.2, lon: 108.9 };
/// Sample indices carrying a single-sample sensor spike.
pub const SPIKES: [usize; 3] = [500, 1210, 2800];
const GRAVITY: f64 = 9.81;

fn speed_at(t: f64) -> f64 {
    if t < 5.0 {
        CRUISE_SPEED * t / 5.0
    } else if t < BRAKE.0 {
        CRUISE_SPEED
    } else if t < BRAKE.1 {
        CRUISE_SPEED + BRAKE_DECEL * (t - BRAKE.0)
    } else {
        CRUISE_SPEED + BRAKE_DECEL * (BRAKE.1 - BRAKE.0)
    }
}

fn accel_at(t: f64) -> f64 {
    if t < 5.0 {
        CRUISE_SPEED / 5.0
    } else if (BRAKE.0..BRAKE.1).contains(&t) {
        BRAKE_DECEL
    } else {
        0.0
    }
}

fn yaw_rate_at(t: f64) -> f64 {
    if (TURN.0..TURN.1).contains(&t) {
        TURN_RATE
    } else {
        0.0
    }
}

pub fn ride() -> Vec<RawSample> {
    let n = (DURATION_S * RATE_HZ) as usize;
    let dt = 1.0 / RATE_HZ;
    let (mut east, mut north, mut heading) = (0.0f64, 0.0f64, 0.0f64);
    (0..=n)
        .map(|i| {
            let t = i as f64 / RATE_HZ;
            let v = speed_at(t);
            let yaw = yaw_rate_at(t);
            let vibration = 0.3 * (2.0 * std::f64::consts::PI * 1.5 * t).sin();
            let mut accel = [accel_at(t), v * yaw.to_radians(), GRAVITY + vibration];
            let mut gyro = [0.0, 0.0, yaw];
            if SPIKES.contains(&i) {
                accel[0] += 25.0;
                gyro[2] += 80.0;
            }
            let pos = offset(ORIGIN, east, north);
            let sample = RawSample::new(t, accel, gyro, GpsFix { lat: pos.lat, lon: pos.lon, speed: v });
            heading += yaw * dt;
            let (sin, cos) = heading.to_radians().sin_cos();
            east += v * dt * sin;
            north += v * dt * cos;
            sample
        })
        .collect()
}

pub fn route() -> Route {
    let zones = vec![
        ManeuverZone { kind: ZoneKind::Turn, entry_t: TURN.0, end_t: TURN.1 },
        ManeuverZone { kind: ZoneKind::Deceleration, entry_t: BRAKE.0, end_t: BRAKE.1 },
    ];
    Route { timed: ZoneSchedule::new(zones).expect("static zones are valid"), geofenced: Vec::new() }
}

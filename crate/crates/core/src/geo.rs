//! Small spherical-earth helpers shared by the live geofences and the heatmap.

use serde::{Deserialize, Serialize};

/// Mean earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Meters spanned by one degree of latitude.
pub fn meters_per_deg_lat() -> f64 {
    EARTH_RADIUS_M * std::f64::consts::PI / 180.0
}

/// Meters spanned by one degree of longitude at `lat` degrees.
pub fn meters_per_deg_lon(lat: f64) -> f64 {
    meters_per_deg_lat() * lat.to_radians().cos()
}

/// Great-circle distance in meters.
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular offset: `east`/`north` meters from `origin`.
pub fn offset(origin: GeoPoint, east: f64, north: f64) -> GeoPoint {
    GeoPoint {
        lat: origin.lat + north / meters_per_deg_lat(),
        lon: origin.lon + east / meters_per_deg_lon(origin.lat),
    }
}

//! Anticipatory maneuver symbol.
//!
//! The symbol switches on [`LEAD_S`] before the vehicle reaches a turn or
//! deceleration zone, blinks with a 1 s half-period locked to that instant,
//! and is held steadily on for [`TAIL_S`] after the maneuver ends.

use serde::{Deserialize, Serialize};

use crate::geo::{haversine_m, GeoPoint};
use crate::{Error, Result};

pub const LEAD_S: f64 = 3.0;
pub const BLINK_HALF_PERIOD_S: f64 = 1.0;
pub const TAIL_S: f64 = 1.0;
/// Zones separated by less than this are merged when a route is loaded.
pub const MERGE_GAP_S: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    Turn,
    Deceleration,
}

/// A zone with known entry and end times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManeuverZone {
    pub kind: ZoneKind,
    pub entry_t: f64,
    pub end_t: f64,
}

/// A zone defined by a circle on the map. It is entered when the vehicle
/// crosses the circle and ends at `end_t` if one is given, otherwise when the
/// vehicle leaves the circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeofenceZone {
    pub kind: ZoneKind,
    pub center: GeoPoint,
    pub radius_m: f64,
    pub end_t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RouteFile {
    zones: Vec<ZoneRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ZoneRecord {
    kind: ZoneKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    entry_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    end_t: Option<f64>,
}

/// Timed zones, sorted, non-overlapping and merged.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZoneSchedule {
    zones: Vec<ManeuverZone>,
}

impl ZoneSchedule {
    pub fn new(mut zones: Vec<ManeuverZone>) -> Result<Self> {
        for z in &zones {
            if !(z.entry_t.is_finite() && z.end_t.is_finite() && z.end_t > z.entry_t) {
                return Err(Error::Config(format!("zone [{}, {}] must end after it starts", z.entry_t, z.end_t)));
            }
        }
        zones.sort_by(|a, b| a.entry_t.total_cmp(&b.entry_t));
        let mut merged: Vec<ManeuverZone> = Vec::with_capacity(zones.len());
        for z in zones {
            match merged.last_mut() {
                Some(prev) if z.entry_t < prev.end_t => {
                    return Err(Error::Config(format!(
                        "zones [{}, {}] and [{}, {}] overlap",
                        prev.entry_t, prev.end_t, z.entry_t, z.end_t
                    )));
                }
                Some(prev) if z.entry_t - prev.end_t < MERGE_GAP_S => prev.end_t = z.end_t,
                _ => merged.push(z),
            }
        }
        Ok(Self { zones: merged })
    }

    pub fn zones(&self) -> &[ManeuverZone] {
        &self.zones
    }
}

/// A loaded route file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Route {
    pub timed: ZoneSchedule,
    pub geofenced: Vec<GeofenceZone>,
}

impl Route {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: RouteFile = serde_json::from_str(text).map_err(|e| Error::Config(format!("route file: {e}")))?;
        let mut timed = Vec::new();
        let mut geofenced = Vec::new();
        for (i, z) in file.zones.into_iter().enumerate() {
            match (z.entry_t, z.lat, z.lon, z.radius_m) {
                (Some(entry_t), None, None, None) => {
                    let end_t = z.end_t.ok_or_else(|| Error::Config(format!("zone {i}: timed zone needs end_t")))?;
                    timed.push(ManeuverZone { kind: z.kind, entry_t, end_t });
                }
                (None, Some(lat), Some(lon), Some(radius_m)) => {
                    if !(radius_m > 0.0 && radius_m.is_finite()) {
                        return Err(Error::Config(format!("zone {i}: radius must be positive")));
                    }
                    geofenced.push(GeofenceZone { kind: z.kind, center: GeoPoint { lat, lon }, radius_m, end_t: z.end_t });
                }
                _ => {
                    return Err(Error::Config(format!(
                        "zone {i}: give either entry_t or all of lat, lon and radius_m"
                    )))
                }
            }
        }
        for (i, a) in geofenced.iter().enumerate() {
            for b in &geofenced[i + 1..] {
                if haversine_m(a.center, b.center) < a.radius_m + b.radius_m {
                    return Err(Error::Config(format!(
                        "geofences at ({}, {}) and ({}, {}) overlap",
                        a.center.lat, a.center.lon, b.center.lat, b.center.lon
                    )));
                }
            }
        }
        Ok(Route { timed: ZoneSchedule::new(timed)?, geofenced })
    }

    pub fn to_json(&self) -> String {
        let mut zones: Vec<ZoneRecord> = self
            .timed
            .zones()
            .iter()
            .map(|z| ZoneRecord {
                kind: z.kind,
                entry_t: Some(z.entry_t),
                lat: None,
                lon: None,
                radius_m: None,
                end_t: Some(z.end_t),
            })
            .collect();
        zones.extend(self.geofenced.iter().map(|z| ZoneRecord {
            kind: z.kind,
            entry_t: None,
            lat: Some(z.center.lat),
            lon: Some(z.center.lon),
            radius_m: Some(z.radius_m),
            end_t: z.end_t,
        }));
        serde_json::to_string_pretty(&RouteFile { zones }).expect("route serializes")
    }
}

/// Zone the vehicle is heading into or currently inside.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoneFix {
    pub zone: ManeuverZone,
    /// Negative while inside the zone.
    pub time_to_entry: f64,
}

/// Nearest upcoming or active timed zone at time `t`.
pub fn locate_zone(t: f64, schedule: &ZoneSchedule) -> Option<ZoneFix> {
    schedule
        .zones()
        .iter()
        .find(|z| z.end_t > t)
        .map(|&zone| ZoneFix { zone, time_to_entry: zone.entry_t - t })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct FenceTrack {
    entered_at: Option<f64>,
    exited_at: Option<f64>,
}

/// Resolves geofenced zones into timed ones from live position and speed.
/// Entry time for a zone not yet reached is estimated as distance to the
/// circle divided by current speed, recomputed every tick.
#[derive(Debug, Clone)]
pub struct ZoneLocator {
    schedule: ZoneSchedule,
    fences: Vec<GeofenceZone>,
    tracks: Vec<FenceTrack>,
}

impl ZoneLocator {
    pub fn new(route: &Route) -> Self {
        Self {
            schedule: route.timed.clone(),
            fences: route.geofenced.clone(),
            tracks: vec![FenceTrack::default(); route.geofenced.len()],
        }
    }

    pub fn has_geofences(&self) -> bool {
        !self.fences.is_empty()
    }

    /// `position` is only needed when the route has geofenced zones.
    pub fn locate(&mut self, t: f64, position: Option<GeoPoint>, speed: f64) -> Option<ZoneFix> {
        let mut best = locate_zone(t, &self.schedule);
        let Some(pos) = position else { return best };
        for (fence, track) in self.fences.iter().zip(self.tracks.iter_mut()) {
            let dist = haversine_m(fence.center, pos) - fence.radius_m;
            let inside = dist <= 0.0;
            if inside && track.entered_at.is_none() {
                track.entered_at = Some(t);
            }
            if !inside && track.entered_at.is_some() && track.exited_at.is_none() {
                track.exited_at = Some(t);
            }
            let end_t = fence.end_t.or(track.exited_at).unwrap_or(f64::INFINITY);
            let entry_t = match track.entered_at {
                Some(at) => at,
                None if speed > 0.0 => t + dist / speed,
                None => f64::INFINITY,
            };
            // A zone exited on this very tick is still reported so the
            // scheduler can see its end.
            if end_t < t || !entry_t.is_finite() {
                continue;
            }
            let fix = ZoneFix { zone: ManeuverZone { kind: fence.kind, entry_t, end_t }, time_to_entry: entry_t - t };
            if best.is_none_or(|b| fix.time_to_entry < b.time_to_entry) {
                best = Some(fix);
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    Idle,
    Flashing,
    Cooldown,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PromptState {
    pub phase: Phase,
    pub symbol_visible: bool,
    activated_at: Option<f64>,
    zone_end: Option<f64>,
    last_t: Option<f64>,
}

impl PromptState {
    pub fn idle() -> Self {
        Self::default()
    }

    /// Start of the current flashing cycle, if any.
    pub fn activated_at(&self) -> Option<f64> {
        self.activated_at
    }
}

/// Advances the symbol state machine to time `t`.
pub fn step_scheduler(state: &PromptState, t: f64, zone: Option<&ZoneFix>) -> Result<PromptState> {
    if let Some(prev) = state.last_t {
        if t < prev {
            return Err(Error::Monotonicity { t, prev });
        }
    }
    let mut next = PromptState { last_t: Some(t), ..*state };
    // Each pass either settles or moves strictly forward through the cycle.
    loop {
        match next.phase {
            Phase::Idle => {
                next.symbol_visible = false;
                next.activated_at = None;
                next.zone_end = None;
                match zone {
                    Some(fix) if fix.time_to_entry <= LEAD_S && t < fix.zone.end_t => {
                        next.phase = Phase::Flashing;
                        next.activated_at = Some(fix.zone.entry_t - LEAD_S);
                        next.zone_end = Some(fix.zone.end_t);
                    }
                    _ => return Ok(next),
                }
            }
            Phase::Flashing => {
                let activated = next.activated_at.expect("flashing has an activation time");
                // An imminent or active zone is the one being flashed for, since
                // armed zones never overlap. Geofence ends are only known on exit.
                if let Some(fix) = zone.filter(|f| f.time_to_entry <= LEAD_S) {
                    next.zone_end = Some(fix.zone.end_t);
                }
                let end = next.zone_end.expect("flashing has a zone end");
                if t >= end {
                    next.phase = Phase::Cooldown;
                    continue;
                }
                let half_periods = ((t - activated) / BLINK_HALF_PERIOD_S).floor();
                next.symbol_visible = half_periods.rem_euclid(2.0) == 0.0;
                return Ok(next);
            }
            Phase::Cooldown => {
                let end = next.zone_end.expect("cooldown has a zone end");
                if t >= end + TAIL_S {
                    next.phase = Phase::Idle;
                    continue;
                }
                next.symbol_visible = true;
                return Ok(next);
            }
        }
    }
}

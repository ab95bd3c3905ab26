use std::path::Path;


use super::{Config, FramePacket, SessionHeader, SessionLog};
use crate::geo::GeoPoint;
use crate::geometry::make_frame;
use crate::kinematics::{derive_motion_with, smooth, MotionState};
use crate::prompts::{step_scheduler, PromptState, Route, ZoneLocator};
use crate::telemetry::{despike, parse_log, resample, RawSample, UniformSeries};
use crate::{Error, Result};

/// Cleaned series written next to a replayed session.
pub const SERIES_FILE: &str = "series.jsonl";

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub log: SessionLog,
    /// Resampled and despiked telemetry the frames were derived from.
    pub series: UniformSeries,
}

/// Resamples and despikes a raw ride log per `config`.
pub fn prepare_series(samples: &[RawSample], config: &Config) -> Result<UniformSeries> {
    let series = resample(samples, config.resample_rate_hz)?;
    despike(&series, config.despike_window, config.despike_clamp)
}

pub fn replay(samples: &[RawSample], route: &Route, route_sha256: &str, config: &Config) -> Result<SessionLog> {
    replay_detailed(samples, route, route_sha256, config).map(|out| out.log)
}

/// Runs a recorded ride through the whole display pipeline, one frame every
/// `1 / frame_rate_hz` seconds from the first sample.
pub fn replay_detailed(samples: &[RawSample], route: &Route, route_sha256: &str, config: &Config) -> Result<ReplayOutput> {
    config.validate()?;
    let series = prepare_series(samples, config)?;
    let states = smooth(&derive_motion_with(&series, config.yaw_sign)?, config.alpha)?;

    let start = series.start().expect("resampled series is never empty");
    let end = series.samples().last().expect("non-empty").t;
    let rate = series.rate_hz();
    let frame_rate = config.frame_rate_hz;
    let frame_count = ((end - start) * frame_rate + 1e-9).floor() as usize + 1;

    let mut locator = ZoneLocator::new(route);
    let mut prompt = PromptState::idle();
    let mut log = SessionLog::new(SessionHeader::new(config.clone(), route_sha256.to_string(), None));
    log.frames.reserve(frame_count);
    for i in 0..frame_count {
        let t = start + i as f64 / frame_rate;
        let (state, position) = sample_at(&series, &states, start, rate, t);
        let zone = locator.locate(t, position, state.v);
        prompt = step_scheduler(&prompt, t, zone.as_ref()).map_err(|e| e.at(t))?;
        let frame = make_frame(&state, prompt.symbol_visible, &config.base_points, &config.params).map_err(|e| e.at(t))?;
        log.frames.push(FramePacket::new(i as u64, frame));
    }
    Ok(ReplayOutput { log, series })
}

/// Linear interpolation of the smoothed state and GPS position at `t`.
fn sample_at(
    series: &UniformSeries,
    states: &[MotionState],
    start: f64,
    rate: f64,
    t: f64,
) -> (MotionState, Option<GeoPoint>) {
    let pos = ((t - start) * rate).max(0.0);
    let j = (pos.floor() as usize).min(states.len() - 1);
    let frac = pos - j as f64;
    let samples = series.samples();
    let geo = |i: usize| samples[i].gps.map(|g| GeoPoint { lat: g.lat, lon: g.lon });
    if j + 1 >= states.len() || frac <= 1e-9 {
        return (MotionState { t, ..states[j] }, geo(j));
    }
    let state = MotionState { t, ..states[j].lerp(&states[j + 1], frac) };
    let position = match (geo(j), geo(j + 1)) {
        (Some(a), Some(b)) => Some(GeoPoint { lat: a.lat + (b.lat - a.lat) * frac, lon: a.lon + (b.lon - a.lon) * frac }),
        (a, _) => a,
    };
    (state, position)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads the ride log, route and optional params file, then replays.
pub fn replay_files(ride: &Path, route: &Path, params: Option<&Path>) -> Result<ReplayOutput> {
    let config = match params {
        Some(p) => Config::from_json(&read(p)?)?,
        None => Config::default(),
    };
    let route_text = read(route)?;
    let route_sha256 = super::sha256_hex(route_text.as_bytes());
    let route = Route::from_json(&route_text)?;
    let file = std::fs::File::open(ride).map_err(|e| Error::io(ride, e))?;
    let samples = parse_log(std::io::BufReader::new(file))?;
    replay_detailed(&samples, &route, &route_sha256, &config)
}

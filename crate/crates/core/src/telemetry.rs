//! Ride-log ingestion: JSON Lines parsing, uniform resampling and spike removal.
//!
//! Axes follow the vehicle frame: X forward, Y lateral, Z vertical. Gyro
//! channels are in °/s, accelerations in m/s².

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default resampling rate.
pub const DEFAULT_RATE_HZ: f64 = 50.0;
/// Highest accepted resampling rate.
pub const MAX_RATE_HZ: f64 = 1000.0;
/// Longest stretch without samples that resampling will bridge.
pub const MAX_GAP_S: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub lat: f64,
    pub lon: f64,
    /// m/s
    pub speed: f64,
}

/// One timestamped reading. A sensor group that was missing from the record
/// is `None` and cannot be read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawSample {
    pub t: f64,
    pub accel: Option<[f64; 3]>,
    pub gyro: Option<[f64; 3]>,
    pub gps: Option<GpsFix>,
}

impl RawSample {
    pub fn new(t: f64, accel: [f64; 3], gyro: [f64; 3], gps: GpsFix) -> Self {
        Self { t, accel: Some(accel), gyro: Some(gyro), gps: Some(gps) }
    }
}

/// Wire form of a ride-log line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RideRecord {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ax: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub az: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
}

fn group3(a: Option<f64>, b: Option<f64>, c: Option<f64>) -> Option<[f64; 3]> {
    Some([a?, b?, c?])
}

impl From<RideRecord> for RawSample {
    fn from(r: RideRecord) -> Self {
        let gps = match (r.lat, r.lon, r.v) {
            (Some(lat), Some(lon), Some(speed)) => Some(GpsFix { lat, lon, speed }),
            _ => None,
        };
        RawSample {
            t: r.t,
            accel: group3(r.ax, r.ay, r.az),
            gyro: group3(r.gx, r.gy, r.gz),
            gps,
        }
    }
}

impl From<&RawSample> for RideRecord {
    fn from(s: &RawSample) -> Self {
        let [ax, ay, az] = s.accel.map_or([None; 3], |a| a.map(Some));
        let [gx, gy, gz] = s.gyro.map_or([None; 3], |g| g.map(Some));
        RideRecord {
            t: s.t,
            ax,
            ay,
            az,
            gx,
            gy,
            gz,
            lat: s.gps.map(|g| g.lat),
            lon: s.gps.map(|g| g.lon),
            v: s.gps.map(|g| g.speed),
        }
    }
}

/// Streaming ride-log reader. Yields samples in input order and stops at the
/// first error.
pub struct RideLogReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    prev_t: Option<f64>,
    failed: bool,
}

impl<R: BufRead> RideLogReader<R> {
    pub fn new(reader: R) -> Self {
        Self { lines: reader.lines(), line_no: 0, prev_t: None, failed: false }
    }

    fn next_sample(&mut self) -> Option<Result<RawSample>> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(Error::Parse { line: self.line_no + 1, message: e.to_string() }))
                }
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.decode(&line));
        }
    }

    fn decode(&mut self, line: &str) -> Result<RawSample> {
        let line_no = self.line_no;
        let record: RideRecord = serde_json::from_str(line)
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if !record.t.is_finite() || record.t < 0.0 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("timestamp {} must be finite and non-negative", record.t),
            });
        }
        if let Some(prev) = self.prev_t {
            if record.t <= prev {
                return Err(Error::Ordering { line: line_no, t: record.t, prev });
            }
        }
        self.prev_t = Some(record.t);
        Ok(record.into())
    }
}

impl<R: BufRead> Iterator for RideLogReader<R> {
    type Item = Result<RawSample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let item = self.next_sample();
        if matches!(item, Some(Err(_))) {
            self.failed = true;
        }
        item
    }
}

/// Parses a whole ride log.
pub fn parse_log<R: BufRead>(reader: R) -> Result<Vec<RawSample>> {
    RideLogReader::new(reader).collect()
}

pub fn parse_log_str(text: &str) -> Result<Vec<RawSample>> {
    parse_log(text.as_bytes())
}

/// Serializes samples as ride-log lines, one per sample, each ending in `\n`.
pub fn serialize_log(samples: &[RawSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(&serde_json::to_string(&RideRecord::from(s)).expect("ride record serializes"));
        out.push('\n');
    }
    out
}

/// Samples on an exact uniform grid: sample `i` sits at `start + i / rate_hz`.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    rate_hz: f64,
    samples: Vec<RawSample>,
}

impl UniformSeries {
    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn samples(&self) -> &[RawSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    pub fn start(&self) -> Option<f64> {
        self.samples.first().map(|s| s.t)
    }

    /// Accelerometer channel for `axis` (0 = X, 1 = Y, 2 = Z).
    pub fn accel_channel(&self, axis: usize) -> Result<Vec<f64>> {
        self.samples
            .iter()
            .map(|s| s.accel.map(|a| a[axis]).ok_or(Error::MissingChannel { channel: "accel", t: s.t }))
            .collect()
    }
}

fn grid_time(start: f64, i: usize, rate_hz: f64) -> f64 {
    start + i as f64 / rate_hz
}

fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a + (b - a) * f
}

/// Interpolates one sensor group onto the grid using only samples where the
/// group is present. Slots outside the group's coverage, or inside a gap longer
/// than [`MAX_GAP_S`], come out as `None`.
fn interpolate_group<const N: usize>(
    samples: &[RawSample],
    grid: &[f64],
    get: impl Fn(&RawSample) -> Option<[f64; N]>,
) -> Vec<Option<[f64; N]>> {
    let points: Vec<(f64, [f64; N])> = samples.iter().filter_map(|s| get(s).map(|v| (s.t, v))).collect();
    let mut out = Vec::with_capacity(grid.len());
    let mut j = 0;
    for &t in grid {
        while j + 1 < points.len() && points[j + 1].0 <= t {
            j += 1;
        }
        let value = match points.get(j) {
            Some(&(tj, vj)) if tj == t => Some(vj),
            Some(&(tj, vj)) if tj < t => points.get(j + 1).and_then(|&(tk, vk)| {
                if tk - tj > MAX_GAP_S {
                    return None;
                }
                let f = (t - tj) / (tk - tj);
                let mut v = [0.0; N];
                for c in 0..N {
                    v[c] = lerp(vj[c], vk[c], f);
                }
                Some(v)
            }),
            _ => None,
        };
        out.push(value);
    }
    out
}

/// Linearly interpolates every channel onto a uniform grid spanning
/// `[t_first, t_last]`.
pub fn resample(samples: &[RawSample], rate_hz: f64) -> Result<UniformSeries> {
    if !(rate_hz > 0.0 && rate_hz <= MAX_RATE_HZ) {
        return Err(Error::Argument(format!("rate {rate_hz} Hz outside (0, {MAX_RATE_HZ}]")));
    }
    if samples.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "resampling needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    for w in samples.windows(2) {
        if w[1].t <= w[0].t {
            return Err(Error::Argument(format!("timestamps not increasing at t={}", w[1].t)));
        }
        if w[1].t - w[0].t > MAX_GAP_S {
            return Err(Error::Gap { from: w[0].t, to: w[1].t, max: MAX_GAP_S });
        }
    }
    let start = samples[0].t;
    let end = samples[samples.len() - 1].t;
    let slots = ((end - start) * rate_hz + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..slots).map(|i| grid_time(start, i, rate_hz)).collect();

    let accel = interpolate_group(samples, &grid, |s| s.accel);
    let gyro = interpolate_group(samples, &grid, |s| s.gyro);
    let gps = interpolate_group(samples, &grid, |s| s.gps.map(|g| [g.lat, g.lon, g.speed]));

    let samples = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| RawSample {
            t,
            accel: accel[i],
            gyro: gyro[i],
            gps: gps[i].map(|[lat, lon, speed]| GpsFix { lat, lon, speed }),
        })
        .collect();
    Ok(UniformSeries { rate_hz, samples })
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Centered running median with edge replication. `None` slots are skipped
/// and stay `None`.
pub fn median_filter(channel: &[Option<f64>], window: usize) -> Vec<Option<f64>> {
    let half = window / 2;
    let n = channel.len();
    let mut buf = Vec::with_capacity(window);
    (0..n)
        .map(|i| {
            channel[i]?;
            buf.clear();
            for k in 0..window {
                let idx = (i + k).saturating_sub(half).min(n - 1);
                if let Some(v) = channel[idx] {
                    buf.push(v);
                }
            }
            Some(median(&mut buf))
        })
        .collect()
}

/// Median-filters every accelerometer and gyro channel with a centered window
/// of `window` samples, then clamps to `[-clamp, clamp]`. GPS channels and
/// timestamps pass through untouched.
pub fn despike(series: &UniformSeries, window: usize, clamp: f64) -> Result<UniformSeries> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::Argument(format!("median window must be odd and positive, got {window}")));
    }
    if clamp.is_nan() || clamp <= 0.0 {
        return Err(Error::Argument(format!("clamp must be positive, got {clamp}")));
    }
    let mut samples = series.samples.clone();
    for c in 0..3 {
        let accel: Vec<Option<f64>> = series.samples.iter().map(|s| s.accel.map(|a| a[c])).collect();
        let gyro: Vec<Option<f64>> = series.samples.iter().map(|s| s.gyro.map(|g| g[c])).collect();
        let accel = median_filter(&accel, window);
        let gyro = median_filter(&gyro, window);
        for (i, s) in samples.iter_mut().enumerate() {
            if let (Some(a), Some(v)) = (s.accel.as_mut(), accel[i]) {
                a[c] = v.clamp(-clamp, clamp);
            }
            if let (Some(g), Some(v)) = (s.gyro.as_mut(), gyro[i]) {
                g[c] = v.clamp(-clamp, clamp);
            }
        }
    }
    Ok(UniformSeries { rate_hz: series.rate_hz, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, gz: f64, v: f64) -> RawSample {
        RawSample::new(t, [0.0, 0.0, 9.81], [0.0, 0.0, gz], GpsFix { lat: 34.2, lon: 108.9, speed: v })
    }

    #[test]
    fn parses_single_record() {
        let line = r#"{"t":0.0,"ax":0,"ay":0,"az":9.81,"gx":0,"gy":0,"gz":0,"lat":34.2,"lon":108.9,"v":0}"#;
        let samples = parse_log_str(line).unwrap();
        assert_eq!(samples, vec![sample(0.0, 0.0, 0.0)]);
    }

    #[test]
    fn empty_input_is_empty() {
        assert!(parse_log_str("").unwrap().is_empty());
    }

    #[test]
    fn rejects_out_of_order() {
        let text = "{\"t\":1.0}\n{\"t\":0.5}\n";
        match parse_log_str(text) {
            Err(Error::Ordering { line, t, prev }) => {
                assert_eq!(line, 2);
                assert_eq!((t, prev), (0.5, 1.0));
            }
            other => panic!("expected ordering error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_number() {
        let text = "{\"t\":0.0}\n\n{\"t\":oops}\n";
        match parse_log_str(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_keys_flag_groups_invalid_and_unknown_keys_ignored() {
        let s = parse_log_str(r#"{"t":2,"ax":1,"ay":2,"az":3,"lat":1,"lon":2,"extra":"x"}"#).unwrap();
        assert_eq!(s[0].accel, Some([1.0, 2.0, 3.0]));
        assert_eq!(s[0].gyro, None);
        assert_eq!(s[0].gps, None);
    }

    #[test]
    fn negative_time_rejected() {
        assert!(matches!(parse_log_str(r#"{"t":-1}"#), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn resample_two_points() {
        let s = resample(&[sample(0.0, 0.0, 0.0), sample(1.0, 0.0, 10.0)], 2.0).unwrap();
        let t: Vec<f64> = s.samples().iter().map(|s| s.t).collect();
        let v: Vec<f64> = s.samples().iter().map(|s| s.gps.unwrap().speed).collect();
        assert_eq!(t, vec![0.0, 0.5, 1.0]);
        assert_eq!(v, vec![0.0, 5.0, 10.0]);
    }

    #[test]
    fn resample_quarter_point() {
        let raw = [sample(0.0, 0.0, 0.0), sample(1.0, 0.0, 10.0), sample(2.0, 0.0, 0.0)];
        let s = resample(&raw, 4.0).unwrap();
        assert_eq!(s.len(), 9);
        assert_eq!(s.samples()[1].t, 0.25);
        assert_eq!(s.samples()[1].gps.unwrap().speed, 2.5);
        assert_eq!(s.samples()[6].gps.unwrap().speed, 5.0);
    }

    #[test]
    fn resample_errors() {
        assert!(matches!(resample(&[sample(0.0, 0.0, 0.0)], 50.0), Err(Error::InsufficientData(_))));
        let raw = [sample(0.0, 0.0, 0.0), sample(2.5, 0.0, 0.0)];
        assert!(matches!(resample(&raw, 50.0), Err(Error::Gap { .. })));
        let raw = [sample(0.0, 0.0, 0.0), sample(1.0, 0.0, 0.0)];
        assert!(matches!(resample(&raw, 2000.0), Err(Error::Argument(_))));
    }

    #[test]
    fn resample_skips_invalid_groups() {
        let mut mid = sample(0.5, 4.0, 99.0);
        mid.gps = None;
        let raw = [sample(0.0, 0.0, 0.0), mid, sample(1.0, 0.0, 10.0)];
        let s = resample(&raw, 4.0).unwrap();
        assert_eq!(s.samples()[2].gps.unwrap().speed, 5.0);
        assert_eq!(s.samples()[2].gyro.unwrap()[2], 4.0);
    }

    #[test]
    fn despike_removes_single_spike() {
        let raw: Vec<RawSample> =
            [0.0, 0.0, 9.0, 0.0, 0.0].iter().enumerate().map(|(i, &g)| sample(i as f64, g, 0.0)).collect();
        let s = resample(&raw, 1.0).unwrap();
        let d = despike(&s, 3, 100.0).unwrap();
        let gz: Vec<f64> = d.samples().iter().map(|s| s.gyro.unwrap()[2]).collect();
        assert_eq!(gz, vec![0.0; 5]);
    }

    #[test]
    fn despike_window_one_is_identity() {
        let raw: Vec<RawSample> =
            [3.0, -1.0, 9.0, 0.5, 7.0].iter().enumerate().map(|(i, &g)| sample(i as f64, g, 1.0)).collect();
        let s = resample(&raw, 1.0).unwrap();
        assert_eq!(despike(&s, 1, f64::INFINITY).unwrap(), s);
    }

    #[test]
    fn despike_constant_unchanged() {
        let raw: Vec<RawSample> = (0..8).map(|i| sample(i as f64, 5.0, 1.0)).collect();
        let s = resample(&raw, 1.0).unwrap();
        assert_eq!(despike(&s, 5, 100.0).unwrap(), s);
    }

    #[test]
    fn despike_rejects_even_window() {
        let raw: Vec<RawSample> = (0..3).map(|i| sample(i as f64, 5.0, 1.0)).collect();
        let s = resample(&raw, 1.0).unwrap();
        assert!(matches!(despike(&s, 4, 100.0), Err(Error::Argument(_))));
        assert!(matches!(despike(&s, 3, 0.0), Err(Error::Argument(_))));
    }

    #[test]
    fn clamp_applies_after_median() {
        let raw: Vec<RawSample> = (0..5).map(|i| sample(i as f64, 250.0, 1.0)).collect();
        let s = resample(&raw, 1.0).unwrap();
        let d = despike(&s, 3, 100.0).unwrap();
        assert!(d.samples().iter().all(|s| s.gyro.unwrap()[2] == 100.0));
    }
}

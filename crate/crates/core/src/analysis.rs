//! Offline motion sickness metrics.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geo::{meters_per_deg_lat, meters_per_deg_lon, GeoPoint};
use crate::{Error, Result};

pub const LIKERT_MAX: u8 = 7;
/// Aggregate scale factor, in hundredths (3.74).
const SCORE_SCALE_CENTI: u32 = 374;
pub const DEFAULT_CELL_SIZE_M: f64 = 25.0;

/// One self-report of eye, head and stomach discomfort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsReport {
    pub t: f64,
    pub lat: Option<f64>,
    pub lon: Option<f64>,
    pub eye: u8,
    pub head: u8,
    pub stomach: u8,
    #[serde(default = "default_participant")]
    pub participant: String,
}

pub fn default_participant() -> String {
    "anonymous".to_string()
}

impl MsReport {
    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t >= 0.0) {
            return Err(Error::Validation(format!("report time {} must be finite and >= 0", self.t)));
        }
        for (name, v) in [("eye", self.eye), ("head", self.head), ("stomach", self.stomach)] {
            if v > LIKERT_MAX {
                return Err(Error::Validation(format!("{name} rating {v} outside 0..={LIKERT_MAX}")));
            }
        }
        Ok(())
    }

    pub fn position(&self) -> Option<GeoPoint> {
        match (self.lat, self.lon) {
            (Some(lat), Some(lon)) if lat.is_finite() && lon.is_finite() => Some(GeoPoint { lat, lon }),
            _ => None,
        }
    }
}

/// `(eye + stomach + head) * 3.74`.
pub fn ms_score(report: &MsReport) -> Result<f64> {
    report.validate()?;
    let sum = u32::from(report.eye) + u32::from(report.head) + u32::from(report.stomach);
    // Integer hundredths then one division: the result is the correctly
    // rounded decimal product.
    Ok(f64::from(sum * SCORE_SCALE_CENTI) / 100.0)
}

/// Reads an MS-report JSON Lines file.
pub fn parse_reports(text: &str) -> Result<Vec<MsReport>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let r: MsReport =
                serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            r.validate().map_err(|e| Error::Parse { line: i + 1, message: e.to_string() })?;
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsdvResult {
    pub axis: Axis,
    /// m/s^1.5
    pub value: f64,
    /// s
    pub duration: f64,
}

/// Transposed direct form II biquad.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn butterworth(cutoff_hz: f64, rate_hz: f64, high_pass: bool) -> Self {
        let k = (std::f64::consts::PI * cutoff_hz / rate_hz).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b = if high_pass {
            [norm, -2.0 * norm, norm]
        } else {
            let b0 = k * k * norm;
            [b0, 2.0 * b0, b0]
        };
        let a = [2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm];
        Self { b, a }
    }

    fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let num = self.b[0] + self.b[1] * zi + self.b[2] * zi * zi;
        let den = 1.0 + self.a[0] * zi + self.a[1] * zi * zi;
        num / den
    }

    fn run(&self, input: &[f64]) -> Vec<f64> {
        let (mut s1, mut s2) = (0.0, 0.0);
        input
            .iter()
            .map(|&x| {
                let y = self.b[0] * x + s1;
                s1 = self.b[1] * x - self.a[0] * y + s2;
                s2 = self.b[2] * x - self.a[1] * y;
                y
            })
            .collect()
    }
}

/// Motion sickness band-pass: 2nd-order Butterworth high-pass at 0.08 Hz in
/// cascade with a 2nd-order Butterworth low-pass at 0.63 Hz, scaled to unit
/// gain at 0.16 Hz. An approximation of the standard's W_f weighting.
#[derive(Debug, Clone)]
pub struct MotionSicknessWeighting {
    rate_hz: f64,
    high: Biquad,
    low: Biquad,
    gain: f64,
}

impl MotionSicknessWeighting {
    pub const HIGH_PASS_HZ: f64 = 0.08;
    pub const LOW_PASS_HZ: f64 = 0.63;
    pub const REFERENCE_HZ: f64 = 0.16;

    pub fn new(rate_hz: f64) -> Result<Self> {
        if !(rate_hz.is_finite() && rate_hz > 2.0 * Self::LOW_PASS_HZ) {
            return Err(Error::Argument(format!(
                "sample rate {rate_hz} Hz too low for the weighting filter"
            )));
        }
        let high = Biquad::butterworth(Self::HIGH_PASS_HZ, rate_hz, true);
        let low = Biquad::butterworth(Self::LOW_PASS_HZ, rate_hz, false);
        let mut w = Self { rate_hz, high, low, gain: 1.0 };
        w.gain = 1.0 / w.response(Self::REFERENCE_HZ).norm();
        Ok(w)
    }

    fn response(&self, freq_hz: f64) -> Complex64 {
        let omega = 2.0 * std::f64::consts::PI * freq_hz / self.rate_hz;
        let z = Complex64::from_polar(1.0, omega);
        self.high.response(z) * self.low.response(z) * self.gain
    }

    /// Magnitude response at `freq_hz`.
    pub fn gain_at(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }

    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        let mut out = self.low.run(&self.high.run(input));
        for v in &mut out {
            *v *= self.gain;
        }
        out
    }
}

/// Motion sickness dose value `sqrt(Σ a² Δt)` of one uniformly sampled
/// acceleration channel.
pub fn msdv(channel: &[f64], rate_hz: f64, axis: Axis, weighting: Weighting) -> Result<MsdvResult> {
    if channel.is_empty() {
        return Err(Error::InsufficientData("empty acceleration channel".into()));
    }
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(Error::Argument(format!("sample rate must be positive, got {rate_hz}")));
    }
    let weighted;
    let signal = match weighting {
        Weighting::Off => channel,
        Weighting::On => {
            weighted = MotionSicknessWeighting::new(rate_hz)?.apply(channel);
            &weighted[..]
        }
    };
    let sum_sq: f64 = signal.iter().map(|a| a * a).sum();
    Ok(MsdvResult {
        axis,
        value: (sum_sq / rate_hz).sqrt(),
        duration: channel.len() as f64 / rate_hz,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anova {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// One-way analysis of variance. `f` is `+inf` when every group is constant
/// but the group means differ.
pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::Argument(format!("need at least 2 groups, got {}", groups.len())));
    }
    if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(Error::Argument(format!("group {i} has {} values, need at least 2", g.len())));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite value in groups".into()));
    }
    let total: usize = groups.iter().map(Vec::len).sum();
    let means: Vec<f64> = groups.iter().map(|g| mean(g)).collect();
    let grand = groups.iter().flatten().sum::<f64>() / total as f64;
    let ss_between: f64 = groups.iter().zip(&means).map(|(g, m)| g.len() as f64 * (m - grand).powi(2)).sum();
    let ss_within: f64 =
        groups.iter().zip(&means).map(|(g, m)| g.iter().map(|v| (v - m).powi(2)).sum::<f64>()).sum();
    let df_between = groups.len() - 1;
    let df_within = total - groups.len();
    let f = if ss_within == 0.0 {
        if ss_between == 0.0 {
            return Err(Error::Argument("all values identical, F undefined".into()));
        }
        f64::INFINITY
    } else {
        (ss_between / df_between as f64) / (ss_within / df_within as f64)
    };
    Ok(Anova { f, df_between, df_within })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Argument(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Argument(format!("need at least 3 pairs, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite value".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation("zero variance input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Modification events binned by location.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub cell_size_m: f64,
    pub cell_lat_deg: f64,
    pub cell_lon_deg: f64,
    /// South-west corner of cell (0, 0).
    pub origin: Option<GeoPoint>,
    pub cells: BTreeMap<(i64, i64), u32>,
    /// Modification events without a usable position.
    pub skipped: usize,
}

#[derive(Serialize, Deserialize)]
struct CellSizeDoc {
    meters: f64,
    lat_deg: f64,
    lon_deg: f64,
}

#[derive(Serialize, Deserialize)]
struct CellDoc {
    row: i64,
    col: i64,
    count: u32,
}

#[derive(Serialize, Deserialize)]
struct HeatmapDoc {
    cell_size: CellSizeDoc,
    origin: Option<GeoPoint>,
    cells: Vec<CellDoc>,
}

impl HeatmapGrid {
    /// Grid document for mapping layers.
    pub fn to_json(&self) -> String {
        let doc = HeatmapDoc {
            cell_size: CellSizeDoc { meters: self.cell_size_m, lat_deg: self.cell_lat_deg, lon_deg: self.cell_lon_deg },
            origin: self.origin,
            cells: self.cells.iter().map(|(&(row, col), &count)| CellDoc { row, col, count }).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("heatmap serializes")
    }

    /// Center of a cell.
    pub fn cell_center(&self, row: i64, col: i64) -> Option<GeoPoint> {
        self.origin.map(|o| GeoPoint {
            lat: o.lat + (row as f64 + 0.5) * self.cell_lat_deg,
            lon: o.lon + (col as f64 + 0.5) * self.cell_lon_deg,
        })
    }
}

/// Counts, per grid cell, the reports whose score differs from the same
/// participant's previous report. The first report of each participant is a
/// baseline. Cell size is given in meters and converted to degrees at the mean
/// latitude of the positioned reports.
pub fn heatmap(reports: &[MsReport], cell_size_m: f64) -> Result<HeatmapGrid> {
    if !(cell_size_m.is_finite() && cell_size_m > 0.0) {
        return Err(Error::Argument(format!("cell size must be positive, got {cell_size_m}")));
    }
    let positioned: Vec<GeoPoint> = reports.iter().filter_map(MsReport::position).collect();
    let origin = positioned.iter().copied().reduce(|a, b| GeoPoint { lat: a.lat.min(b.lat), lon: a.lon.min(b.lon) });
    let mean_lat = if positioned.is_empty() {
        0.0
    } else {
        positioned.iter().map(|p| p.lat).sum::<f64>() / positioned.len() as f64
    };
    let cell_lat_deg = cell_size_m / meters_per_deg_lat();
    let cell_lon_deg = cell_size_m / meters_per_deg_lon(mean_lat);

    let mut grid = HeatmapGrid {
        cell_size_m,
        cell_lat_deg,
        cell_lon_deg,
        origin,
        cells: BTreeMap::new(),
        skipped: 0,
    };
    let mut last_score: HashMap<&str, f64> = HashMap::new();
    for r in reports {
        let score = ms_score(r)?;
        let changed = last_score.insert(r.participant.as_str(), score).is_some_and(|prev| prev != score);
        if !changed {
            continue;
        }
        match (r.position(), origin) {
            (Some(p), Some(o)) => {
                let row = ((p.lat - o.lat) / cell_lat_deg).floor() as i64;
                let col = ((p.lon - o.lon) / cell_lon_deg).floor() as i64;
                *grid.cells.entry((row, col)).or_insert(0) += 1;
            }
            _ => grid.skipped += 1,
        }
    }
    if grid.skipped > 0 {
        log::warn!("heatmap: {} modification events had no position", grid.skipped);
    }
    Ok(grid)
}

//! GPS track ingestion and planar reconstruction.
//!
//! Records are projected onto a local equirectangular tangent plane
//! (easting `x`, northing `y`, meters) and speed/bearing pairs become
//! velocity components. Bearings are degrees clockwise from true north.

use crate::error::{Result, VsplineError};
use crate::model::{FittedVSpline, ObservationSet, TimeGrid};
use crate::penalty::{interval_lambdas, IntervalPenalties};
use crate::selection::{select_parameters, SearchSpec, Selection};
use crate::solver::fit;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS: f64 = 6_371_000.0;
/// Tracks reaching farther than this from the reference trigger a warning.
pub const MAX_PLANAR_SPAN: f64 = 100_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsRecord {
    /// Seconds.
    pub timestamp: f64,
    pub lon: f64,
    pub lat: f64,
    /// Meters per second.
    pub speed: f64,
    /// Degrees in `[0, 360)`, clockwise from north.
    pub bearing: f64,
    /// `true` when the boom is down; `None` if the file has no boom column.
    pub boom: Option<bool>,
}

impl GpsRecord {
    /// `(v_x, v_y)` in meters per second.
    pub fn velocity(&self) -> (f64, f64) {
        let b = self.bearing.to_radians();
        (self.speed * b.sin(), self.speed * b.cos())
    }
}

/// What to do with records that share a timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DedupePolicy {
    #[default]
    Reject,
    /// Average position and velocity; the boom is down if any record has it
    /// down.
    Merge,
}

/// Header names for each field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMap {
    pub timestamp: String,
    pub lon: String,
    pub lat: String,
    pub speed: String,
    pub bearing: String,
    pub boom: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            lon: "lon".into(),
            lat: "lat".into(),
            speed: "speed".into(),
            bearing: "bearing".into(),
            boom: "boom".into(),
        }
    }
}

impl ColumnMap {
    /// Parse overrides of the form `field=header,field=header`.
    pub fn parse_overrides(spec: &str) -> Result<Self> {
        let mut map = Self::default();
        for pair in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (field, header) = pair.split_once('=').ok_or_else(|| {
                VsplineError::InvalidParameter(format!("column mapping '{pair}' is not field=header"))
            })?;
            let header = header.trim().to_string();
            match field.trim() {
                "timestamp" => map.timestamp = header,
                "lon" => map.lon = header,
                "lat" => map.lat = header,
                "speed" => map.speed = header,
                "bearing" => map.bearing = header,
                "boom" => map.boom = header,
                other => {
                    return Err(VsplineError::InvalidParameter(format!(
                        "unknown track field '{other}'"
                    )))
                }
            }
        }
        Ok(map)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOptions {
    pub dedupe: DedupePolicy,
    pub columns: ColumnMap,
}

/// Parse a GPS CSV track. Errors carry 1-based file line numbers.
pub fn parse_track(text: &str, options: &ParseOptions) -> Result<Vec<GpsRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| VsplineError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let cols = &options.columns;
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let column = |name: &str| {
        index.get(name).copied().ok_or_else(|| VsplineError::Parse {
            line: 1,
            message: format!("missing column '{name}'"),
        })
    };
    let fields = [
        column(&cols.timestamp)?,
        column(&cols.lon)?,
        column(&cols.lat)?,
        column(&cols.speed)?,
        column(&cols.bearing)?,
    ];
    let boom_col = index.get(cols.boom.as_str()).copied();

    let mut records: Vec<(usize, GpsRecord)> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| VsplineError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let number = |col: usize, name: &str| -> Result<f64> {
            let raw = row.get(col).unwrap_or("");
            let value: f64 = raw.parse().map_err(|_| VsplineError::Parse {
                line,
                message: format!("field '{name}': '{raw}' is not a number"),
            })?;
            if !value.is_finite() {
                return Err(VsplineError::Parse {
                    line,
                    message: format!("field '{name}' is not finite"),
                });
            }
            Ok(value)
        };
        let timestamp = number(fields[0], &cols.timestamp)?;
        let lon = number(fields[1], &cols.lon)?;
        let lat = number(fields[2], &cols.lat)?;
        let speed = number(fields[3], &cols.speed)?;
        let mut bearing = number(fields[4], &cols.bearing)?;
        let invalid = |name: &str, why: &str| VsplineError::Parse {
            line,
            message: format!("field '{name}' {why}"),
        };
        if !(-180.0..=180.0).contains(&lon) {
            return Err(invalid(&cols.lon, "must lie in [-180, 180]"));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(invalid(&cols.lat, "must lie in [-90, 90]"));
        }
        if speed < 0.0 {
            return Err(invalid(&cols.speed, "must be nonnegative"));
        }
        if bearing == 360.0 {
            bearing = 0.0;
        }
        if !(0.0..360.0).contains(&bearing) {
            return Err(invalid(&cols.bearing, "must lie in [0, 360)"));
        }
        let boom = match boom_col {
            None => None,
            Some(c) => match row.get(c).unwrap_or("") {
                "1" => Some(true),
                "0" => Some(false),
                other => {
                    return Err(invalid(&cols.boom, &format!("must be 0 or 1, got '{other}'")))
                }
            },
        };
        records.push((
            line,
            GpsRecord {
                timestamp,
                lon,
                lat,
                speed,
                bearing,
                boom,
            },
        ));
    }
    if records.is_empty() {
        return Err(VsplineError::NoRecords);
    }
    resolve_timestamps(records, options.dedupe)
}

fn resolve_timestamps(records: Vec<(usize, GpsRecord)>, policy: DedupePolicy) -> Result<Vec<GpsRecord>> {
    let mut out: Vec<GpsRecord> = Vec::with_capacity(records.len());
    let mut group: Vec<GpsRecord> = Vec::new();
    for (line, rec) in records {
        if let Some(prev) = group.last() {
            if rec.timestamp < prev.timestamp
                || (rec.timestamp == prev.timestamp && policy == DedupePolicy::Reject)
            {
                return Err(VsplineError::Parse {
                    line,
                    message: format!(
                        "timestamp {} does not increase (previous {})",
                        rec.timestamp, prev.timestamp
                    ),
                });
            }
            if rec.timestamp > prev.timestamp {
                out.push(merge(&group));
                group.clear();
            }
        }
        group.push(rec);
    }
    out.push(merge(&group));
    Ok(out)
}

fn merge(group: &[GpsRecord]) -> GpsRecord {
    if group.len() == 1 {
        return group[0];
    }
    let k = group.len() as f64;
    let mean = |f: fn(&GpsRecord) -> f64| group.iter().map(f).sum::<f64>() / k;
    let vx = mean(|r| r.velocity().0);
    let vy = mean(|r| r.velocity().1);
    GpsRecord {
        timestamp: group[0].timestamp,
        lon: mean(|r| r.lon),
        lat: mean(|r| r.lat),
        speed: vx.hypot(vy),
        bearing: bearing_of(vx, vy),
        boom: group
            .iter()
            .try_fold(false, |acc, r| r.boom.map(|b| acc || b)),
    }
}

/// Bearing in degrees `[0, 360)` of a planar velocity.
pub fn bearing_of(vx: f64, vy: f64) -> f64 {
    let b = vx.atan2(vy).to_degrees();
    let b = if b < 0.0 { b + 360.0 } else { b };
    if b >= 360.0 {
        0.0
    } else {
        b
    }
}

/// Tangent-plane origin in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    pub lon: f64,
    pub lat: f64,
}

impl Reference {
    pub fn to_plane(&self, lon: f64, lat: f64) -> (f64, f64) {
        let x = EARTH_RADIUS * (lon - self.lon).to_radians() * self.lat.to_radians().cos();
        let y = EARTH_RADIUS * (lat - self.lat).to_radians();
        (x, y)
    }

    pub fn to_lon_lat(&self, x: f64, y: f64) -> (f64, f64) {
        let lon = self.lon + (x / (EARTH_RADIUS * self.lat.to_radians().cos())).to_degrees();
        let lat = self.lat + (y / EARTH_RADIUS).to_degrees();
        (lon, lat)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarTrack {
    /// `d = 2`: easting then northing.
    pub obs: ObservationSet,
    /// Per interval, from the left record; `None` without a boom column.
    pub boom: Option<Vec<bool>>,
    pub reference: Reference,
    pub warnings: Vec<String>,
}

pub fn project(records: &[GpsRecord], reference: Option<Reference>) -> Result<PlanarTrack> {
    if records.len() < 2 {
        return Err(VsplineError::InvalidGrid(format!(
            "a track needs at least 2 records, got {}",
            records.len()
        )));
    }
    let reference = reference.unwrap_or(Reference {
        lon: records[0].lon,
        lat: records[0].lat,
    });
    let n = records.len();
    let (mut x, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let (mut vx, mut vy) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut span: f64 = 0.0;
    for r in records {
        let (px, py) = reference.to_plane(r.lon, r.lat);
        let (ux, uy) = r.velocity();
        span = span.max(px.hypot(py));
        x.push(px);
        y.push(py);
        vx.push(ux);
        vy.push(uy);
    }
    let mut warnings = Vec::new();
    if span > MAX_PLANAR_SPAN {
        let msg = format!(
            "track reaches {:.1} km from the reference; planar distortion is not negligible",
            span / 1000.0
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let grid = TimeGrid::new(records.iter().map(|r| r.timestamp).collect())?;
    let boom = records[..n - 1]
        .iter()
        .map(|r| r.boom)
        .collect::<Option<Vec<bool>>>();
    Ok(PlanarTrack {
        obs: ObservationSet::new(grid, vec![x, y], vec![vx, vy])?,
        boom,
        reference,
        warnings,
    })
}

/// Planar point back to `(lon, lat)`.
pub fn unproject(x: f64, y: f64, reference: Reference) -> (f64, f64) {
    reference.to_lon_lat(x, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackReconstruction {
    pub spline: FittedVSpline,
    pub lambdas: IntervalPenalties,
    pub selection: Selection,
}

/// Select parameters on the 2-D cross-validation score and fit.
pub fn reconstruct_track(track: &PlanarTrack, spec: &SearchSpec) -> Result<TrackReconstruction> {
    if spec.family.is_boom() && track.boom.is_none() {
        return Err(VsplineError::InvalidParameter(format!(
            "{} penalty needs a boom column in the track",
            spec.family
        )));
    }
    let boom = track.boom.as_deref();
    let selection = select_parameters(&track.obs, spec, boom)?;
    let lambdas = interval_lambdas(&selection.penalty, &track.obs, boom)?;
    let spline = fit(&track.obs, selection.gamma, &lambdas, None)?;
    Ok(TrackReconstruction {
        spline,
        lambdas,
        selection,
    })
}

/// Generators for synthetic tracks with known ground truth.
pub mod synthetic {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    /// Default origin used by the generators.
    pub const ORIGIN: Reference = Reference {
        lon: 175.61,
        lat: -40.36,
    };

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
    pub enum Segment {
        Row,
        Turn,
        Pause,
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct SyntheticTrack {
        pub records: Vec<GpsRecord>,
        /// Per interval.
        pub segments: Vec<Segment>,
        /// True planar positions per record.
        pub truth: Vec<(f64, f64)>,
    }

    /// Constant speed and bearing, one record per `dt` seconds, no noise.
    pub fn straight(n: usize, speed: f64, bearing: f64, dt: f64) -> SyntheticTrack {
        let b = bearing.to_radians();
        let mut records = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for i in 0..n {
            let t = i as f64 * dt;
            let (x, y) = (speed * t * b.sin(), speed * t * b.cos());
            let (lon, lat) = ORIGIN.to_lon_lat(x, y);
            truth.push((x, y));
            records.push(GpsRecord {
                timestamp: t,
                lon,
                lat,
                speed,
                bearing,
                boom: Some(true),
            });
        }
        SyntheticTrack {
            records,
            segments: vec![Segment::Row; n.saturating_sub(1)],
            truth,
        }
    }

    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct BoustrophedonOptions {
        pub rows: usize,
        /// Meters.
        pub row_length: f64,
        /// Meters between rows; the U-turn is a half circle of this diameter.
        pub row_spacing: f64,
        pub row_speed: f64,
        pub turn_speed: f64,
        /// Seconds stationary at the end of each row.
        pub pause: f64,
        /// Seconds between records.
        pub dt: f64,
        /// Standard deviation of position noise in meters.
        pub position_noise: f64,
        /// Standard deviation of speed noise in meters per second.
        pub speed_noise: f64,
        pub seed: u64,
    }

    impl Default for BoustrophedonOptions {
        fn default() -> Self {
            Self {
                rows: 4,
                row_length: 150.0,
                row_spacing: 20.0,
                row_speed: 3.0,
                turn_speed: 1.0,
                pause: 10.0,
                dt: 1.0,
                position_noise: 0.5,
                speed_noise: 0.05,
                seed: 0,
            }
        }
    }

    /// Back-and-forth field coverage: rows with the boom down, then a
    /// stationary pause and a U-turn with the boom up. During a pause the
    /// receiver repeats its first stationary fix.
    pub fn boustrophedon(opts: &BoustrophedonOptions) -> Result<SyntheticTrack> {
        let positive = [
            opts.row_length,
            opts.row_spacing,
            opts.row_speed,
            opts.turn_speed,
            opts.dt,
        ];
        if opts.rows == 0 || positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(VsplineError::InvalidParameter(
                "boustrophedon needs at least one row and positive lengths, speeds and dt".into(),
            ));
        }
        if !(opts.pause >= 0.0 && opts.position_noise >= 0.0 && opts.speed_noise >= 0.0) {
            return Err(VsplineError::InvalidParameter(
                "pause and noise levels must be nonnegative".into(),
            ));
        }

        let row_time = opts.row_length / opts.row_speed;
        let radius = opts.row_spacing / 2.0;
        let turn_time = PI * radius / opts.turn_speed;
        let cycle = row_time + opts.pause + turn_time;
        let total = opts.rows as f64 * row_time + (opts.rows - 1) as f64 * (opts.pause + turn_time);

        // State at time t: position, velocity, segment, boom.
        let state = |t: f64| -> ((f64, f64), (f64, f64), Segment) {
            let k = ((t / cycle).floor() as usize).min(opts.rows - 1);
            let local = t - k as f64 * cycle;
            let dir = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
            let y0 = k as f64 * opts.row_spacing;
            let x_start = if dir > 0.0 { 0.0 } else { opts.row_length };
            if local < row_time || k == opts.rows - 1 {
                let s = local.min(row_time);
                let speed = if local <= row_time { opts.row_speed } else { 0.0 };
                ((x_start + dir * opts.row_speed * s, y0), (dir * speed, 0.0), Segment::Row)
            } else if local < row_time + opts.pause {
                ((x_start + dir * opts.row_length, y0), (0.0, 0.0), Segment::Pause)
            } else {
                let phi = (local - row_time - opts.pause) * opts.turn_speed / radius;
                let cx = x_start + dir * opts.row_length;
                let cy = y0 + radius;
                let pos = (cx + dir * radius * phi.sin(), cy - radius * phi.cos());
                let w = opts.turn_speed;
                ((pos.0, pos.1), (dir * w * phi.cos(), w * phi.sin()), Segment::Turn)
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let pos_noise = Normal::new(0.0, opts.position_noise.max(f64::MIN_POSITIVE))
            .map_err(|e| VsplineError::InvalidParameter(e.to_string()))?;
        let speed_noise = Normal::new(0.0, opts.speed_noise.max(f64::MIN_POSITIVE))
            .map_err(|e| VsplineError::InvalidParameter(e.to_string()))?;

        let count = (total / opts.dt).floor() as usize + 1;
        let mut records = Vec::with_capacity(count);
        let mut truth = Vec::with_capacity(count);
        let mut point_segments = Vec::with_capacity(count);
        for i in 0..count {
            let t = i as f64 * opts.dt;
            let ((x, y), (vx, vy), seg) = state(t);
            truth.push((x, y));
            point_segments.push(seg);
            let (mut nx, mut ny) = (x, y);
            let mut speed = vx.hypot(vy);
            if seg == Segment::Pause && i > 0 && point_segments[i - 1] == Segment::Pause {
                // Receivers hold the last fix while stationary.
                let prev: &GpsRecord = &records[i - 1];
                records.push(GpsRecord {
                    timestamp: t,
                    speed: 0.0,
                    bearing: 0.0,
                    boom: Some(false),
                    ..*prev
                });
                continue;
            }
            if opts.position_noise > 0.0 {
                nx += pos_noise.sample(&mut rng);
                ny += pos_noise.sample(&mut rng);
            }
            if opts.speed_noise > 0.0 && speed > 0.0 {
                speed = (speed + speed_noise.sample(&mut rng)).max(0.0);
            }
            let (lon, lat) = ORIGIN.to_lon_lat(nx, ny);
            records.push(GpsRecord {
                timestamp: t,
                lon,
                lat,
                speed,
                bearing: if speed > 0.0 { bearing_of(vx, vy) } else { 0.0 },
                boom: Some(seg == Segment::Row),
            });
        }
        // An interval belongs to a turn or pause if either end does.
        let segments = point_segments
            .windows(2)
            .map(|w| match (w[0], w[1]) {
                (Segment::Row, Segment::Row) => Segment::Row,
                (Segment::Pause, _) | (_, Segment::Pause) => Segment::Pause,
                _ => Segment::Turn,
            })
            .collect();
        Ok(SyntheticTrack {
            records,
            segments,
            truth,
        })
    }
}

//! File formats: observation and spline readers, CSV/JSON/GeoJSON writers.
//!
//! Numbers are written with Rust's shortest round-trip formatting, so
//! identical inputs give byte-identical files.

use crate::error::{Result, VsplineError};
use crate::geo::{GpsRecord, Reference};
use crate::model::{FittedVSpline, ObservationSet, SampleRow, TimeGrid};
use crate::penalty::{IntervalPenalties, PenaltySpec};
use crate::selection::{Selection, TraceRow};
use crate::signals::{EvalReport, SimulatedTrajectory};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Shortest round-tripping decimal, switching to exponent form for very
/// small or large magnitudes.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("writing to memory");
    for row in rows {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv output is UTF-8")
}

/// Observations with dimension labels taken from the column suffixes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledObservations {
    pub obs: ObservationSet,
    /// Empty for a plain `t,y,v` file.
    pub labels: Vec<String>,
    /// Per interval from the optional `boom` column (left endpoint).
    pub boom: Option<Vec<bool>>,
}

/// Read `t,y,v` or `t,y_<s>,v_<s>,...` observations, with an optional
/// `boom` column of 0/1 flags.
pub fn parse_observations(text: &str) -> Result<LabeledObservations> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| VsplineError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let missing = |name: &str| VsplineError::Parse {
        line: 1,
        message: format!("missing column '{name}'"),
    };
    let t_col = *index.get("t").ok_or_else(|| missing("t"))?;

    let (labels, pairs): (Vec<String>, Vec<(usize, usize)>) = if let Some(&y) = index.get("y") {
        let v = *index.get("v").ok_or_else(|| missing("v"))?;
        (Vec::new(), vec![(y, v)])
    } else {
        let mut labels = Vec::new();
        let mut pairs = Vec::new();
        for h in &headers {
            if let Some(label) = h.strip_prefix("y_") {
                let vname = format!("v_{label}");
                let v = *index.get(vname.as_str()).ok_or_else(|| missing(&vname))?;
                labels.push(label.to_string());
                pairs.push((index[h.as_str()], v));
            }
        }
        if pairs.is_empty() {
            return Err(missing("y"));
        }
        (labels, pairs)
    };

    let boom_col = index.get("boom").copied();
    let mut boom = Vec::new();
    let mut times = Vec::new();
    let mut positions = vec![Vec::new(); pairs.len()];
    let mut velocities = vec![Vec::new(); pairs.len()];
    for row in reader.records() {
        let row = row.map_err(|e| VsplineError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let field = |col: usize| -> Result<f64> {
            let raw = row.get(col).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(x),
                _ => Err(VsplineError::Parse {
                    line,
                    message: format!("column '{}': '{raw}' is not a finite number", headers[col]),
                }),
            }
        };
        times.push(field(t_col)?);
        if let Some(c) = boom_col {
            boom.push(match row.get(c).unwrap_or("") {
                "1" => true,
                "0" => false,
                other => {
                    return Err(VsplineError::Parse {
                        line,
                        message: format!("column 'boom' must be 0 or 1, got '{other}'"),
                    })
                }
            });
        }
        for (d, &(y, v)) in pairs.iter().enumerate() {
            positions[d].push(field(y)?);
            velocities[d].push(field(v)?);
        }
    }
    if times.is_empty() {
        return Err(VsplineError::NoRecords);
    }
    let grid = TimeGrid::new(times)?;
    boom.pop();
    Ok(LabeledObservations {
        obs: ObservationSet::new(grid, positions, velocities)?,
        labels,
        boom: boom_col.map(|_| boom),
    })
}

/// Default labels for a `dims`-dimensional spline: none for one dimension,
/// `x, y, z` up to three, indices beyond that.
pub fn default_labels(dims: usize) -> Vec<String> {
    match dims {
        1 => Vec::new(),
        2 | 3 => ["x", "y", "z"][..dims].iter().map(|s| s.to_string()).collect(),
        _ => (0..dims).map(|d| d.to_string()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplineDocument {
    grid: Vec<f64>,
    gamma: f64,
    lambdas: Vec<f64>,
    dims: usize,
    /// One row per dimension, `2n` interleaved (value, slope) entries each.
    theta: Vec<Vec<f64>>,
}

pub fn spline_to_json(spline: &FittedVSpline) -> String {
    let doc = SplineDocument {
        grid: spline.grid().times().to_vec(),
        gamma: spline.gamma(),
        lambdas: spline.lambdas().to_vec(),
        dims: spline.dims(),
        theta: (0..spline.dims()).map(|d| spline.theta(d).to_vec()).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("spline serializes") + "\n"
}

pub fn spline_from_json(text: &str) -> Result<FittedVSpline> {
    let doc: SplineDocument =
        serde_json::from_str(text).map_err(|e| VsplineError::Format(format!("spline JSON: {e}")))?;
    if doc.dims != doc.theta.len() {
        return Err(VsplineError::ShapeMismatch(format!(
            "dims is {} but theta has {} rows",
            doc.dims,
            doc.theta.len()
        )));
    }
    if !doc.gamma.is_finite() || doc.gamma < 0.0 {
        return Err(VsplineError::InvalidParameter(format!(
            "gamma must be finite and nonnegative, got {}",
            doc.gamma
        )));
    }
    FittedVSpline::new(TimeGrid::new(doc.grid)?, doc.theta, doc.gamma, doc.lambdas)
}

/// `t,f,df,d2f`, or `t,f_<s>,...,df_<s>,...,d2f_<s>,...` when labels are given.
pub fn samples_csv(rows: &[SampleRow], labels: &[String]) -> String {
    let header: Vec<String> = if labels.is_empty() {
        vec!["t".into(), "f".into(), "df".into(), "d2f".into()]
    } else {
        std::iter::once("t".to_string())
            .chain(["f", "df", "d2f"].iter().flat_map(|p| labels.iter().map(move |l| format!("{p}_{l}"))))
            .collect()
    };
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_text(
        &header_refs,
        rows.iter().map(|r| {
            std::iter::once(num(r.t))
                .chain(r.f.iter().chain(&r.df).chain(&r.d2f).map(|x| num(*x)))
                .collect()
        }),
    )
}

/// `t_left,t_right,lambda` per interval.
pub fn penalty_csv(grid: &TimeGrid, lambdas: &IntervalPenalties) -> String {
    let t = grid.times();
    csv_text(
        &["t_left", "t_right", "lambda"],
        lambdas
            .as_slice()
            .iter()
            .enumerate()
            .map(|(i, l)| vec![num(t[i]), num(t[i + 1]), num(*l)]),
    )
}

/// `gamma,param,score,degenerate_count`; two-parameter families get a
/// `param2` column after `param`.
pub fn trace_csv(trace: &[TraceRow]) -> String {
    let two = trace.iter().any(|r| r.params.len() > 1);
    let header: &[&str] = if two {
        &["gamma", "param", "param2", "score", "degenerate_count"]
    } else {
        &["gamma", "param", "score", "degenerate_count"]
    };
    csv_text(
        header,
        trace.iter().map(|r| {
            let mut row = vec![num(r.gamma)];
            row.extend(r.params.iter().map(|p| num(*p)));
            row.push(num(r.score));
            row.push(r.degenerate_count.to_string());
            row
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub penalty: PenaltySpec,
    pub gamma: f64,
    pub score: f64,
    pub refined: bool,
    pub candidates: usize,
    pub skipped: usize,
}

pub fn selection_json(selection: &Selection) -> String {
    let summary = SelectionSummary {
        penalty: selection.penalty,
        gamma: selection.gamma,
        score: selection.score,
        refined: selection.refined,
        candidates: selection.trace.len() + selection.skipped.len(),
        skipped: selection.skipped.len(),
    };
    serde_json::to_string_pretty(&summary).expect("selection serializes") + "\n"
}

/// `t,g_true,f_true,y,v`.
pub fn simulation_csv(sim: &SimulatedTrajectory) -> String {
    let t = sim.grid.times();
    csv_text(
        &["t", "g_true", "f_true", "y", "v"],
        (0..t.len()).map(|i| {
            vec![
                num(t[i]),
                num(sim.true_g[i]),
                num(sim.true_f[i]),
                num(sim.y[i]),
                num(sim.v[i]),
            ]
        }),
    )
}

/// `signal,snr,method,seed,tmse,retrieved_snr`; failed cells have empty
/// metric fields.
pub fn benchmark_csv(reports: &[EvalReport]) -> String {
    csv_text(
        &["signal", "snr", "method", "seed", "tmse", "retrieved_snr"],
        reports.iter().map(|r| {
            let (tmse, rsnr) = match &r.outcome {
                Ok((a, b)) => (num(*a), num(*b)),
                Err(_) => (String::new(), String::new()),
            };
            vec![
                r.signal.to_string(),
                num(r.snr),
                r.method.to_string(),
                r.seed.to_string(),
                tmse,
                rsnr,
            ]
        }),
    )
}

/// `t,x,y,vx,vy` from samples of a 2-D spline.
pub fn track_csv(rows: &[SampleRow]) -> Result<String> {
    if rows.iter().any(|r| r.f.len() != 2) {
        return Err(VsplineError::ShapeMismatch("track output needs a 2-D spline".into()));
    }
    Ok(csv_text(
        &["t", "x", "y", "vx", "vy"],
        rows.iter()
            .map(|r| vec![num(r.t), num(r.f[0]), num(r.f[1]), num(r.df[0]), num(r.df[1])]),
    ))
}

/// `timestamp,lon,lat,speed,bearing,boom`; the boom field is empty when
/// unknown.
pub fn gps_csv(records: &[GpsRecord]) -> String {
    csv_text(
        &["timestamp", "lon", "lat", "speed", "bearing", "boom"],
        records.iter().map(|r| {
            vec![
                num(r.timestamp),
                num(r.lon),
                num(r.lat),
                num(r.speed),
                num(r.bearing),
                r.boom.map_or(String::new(), |b| u8::from(b).to_string()),
            ]
        }),
    )
}

/// GeoJSON `Feature` holding the sampled path as a `LineString`.
pub fn track_geojson(rows: &[SampleRow], reference: Reference) -> Result<String> {
    if rows.iter().any(|r| r.f.len() != 2) {
        return Err(VsplineError::ShapeMismatch("track output needs a 2-D spline".into()));
    }
    let coordinates: Vec<[f64; 2]> = rows
        .iter()
        .map(|r| {
            let (lon, lat) = reference.to_lon_lat(r.f[0], r.f[1]);
            [lon, lat]
        })
        .collect();
    let feature = serde_json::json!({
        "type": "Feature",
        "properties": {
            "t_start": rows.first().map(|r| r.t),
            "t_end": rows.last().map(|r| r.t),
        },
        "geometry": {
            "type": "LineString",
            "coordinates": coordinates,
        },
    });
    Ok(serde_json::to_string_pretty(&feature).expect("geojson serializes") + "\n")
}

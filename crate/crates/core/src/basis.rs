//! Cubic Hermite basis on a single knot interval.
//!
//! Each interval `[t_i, t_{i+1})` carries four cubics: `h00`/`h01` carry the
//! value at the left/right knot, `h10`/`h11` the slope. The global basis
//! `N_k` glues these so that coefficient `2i` is the value at knot `i` and
//! coefficient `2i + 1` the derivative (0-based, interleaved).

use crate::error::{Result, VsplineError};
use crate::model::TimeGrid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HermiteKind {
    H00,
    H10,
    H01,
    H11,
}

impl HermiteKind {
    pub const ALL: [HermiteKind; 4] = [
        HermiteKind::H00,
        HermiteKind::H10,
        HermiteKind::H01,
        HermiteKind::H11,
    ];

    /// Offset of the global coefficient this piece multiplies, relative to
    /// `2 * interval`.
    pub fn coefficient_offset(self) -> usize {
        match self {
            HermiteKind::H00 => 0,
            HermiteKind::H10 => 1,
            HermiteKind::H01 => 2,
            HermiteKind::H11 => 3,
        }
    }
}

/// A Hermite piece on one interval (0-based interval index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisId {
    pub kind: HermiteKind,
    pub interval: usize,
}

/// Value and derivatives of a Hermite piece in local coordinates.
///
/// `s` is the normalized position in `[0, 1]` and `dt` the interval length.
/// Slope pieces scale with `dt` so that their first derivative in `t` is
/// exactly one at the matching endpoint.
#[inline]
pub fn hermite_local(kind: HermiteKind, s: f64, dt: f64, order: u8) -> f64 {
    let s2 = s * s;
    let s3 = s2 * s;
    match (kind, order) {
        (HermiteKind::H00, 0) => 2.0 * s3 - 3.0 * s2 + 1.0,
        (HermiteKind::H00, 1) => (6.0 * s2 - 6.0 * s) / dt,
        (HermiteKind::H00, _) => (12.0 * s - 6.0) / (dt * dt),
        (HermiteKind::H10, 0) => dt * (s3 - 2.0 * s2 + s),
        (HermiteKind::H10, 1) => 3.0 * s2 - 4.0 * s + 1.0,
        (HermiteKind::H10, _) => (6.0 * s - 4.0) / dt,
        (HermiteKind::H01, 0) => -2.0 * s3 + 3.0 * s2,
        (HermiteKind::H01, 1) => (6.0 * s - 6.0 * s2) / dt,
        (HermiteKind::H01, _) => (6.0 - 12.0 * s) / (dt * dt),
        (HermiteKind::H11, 0) => dt * (s3 - s2),
        (HermiteKind::H11, 1) => 3.0 * s2 - 2.0 * s,
        (HermiteKind::H11, _) => (6.0 * s - 2.0) / dt,
    }
}

/// Evaluate a Hermite piece (or its first/second derivative) at `t`.
///
/// The piece is supported on `[t_i, t_{i+1})`, except on the last interval
/// where the right knot is included. Outside its support it is exactly zero.
pub fn eval_hermite_basis(id: BasisId, grid: &TimeGrid, t: f64, order: u8) -> Result<f64> {
    if order > 2 {
        return Err(VsplineError::DerivativeOrder(order));
    }
    if !t.is_finite() {
        return Err(VsplineError::NonFinite("evaluation point".into()));
    }
    let intervals = grid.intervals();
    if id.interval >= intervals {
        return Err(VsplineError::IntervalOutOfRange {
            index: id.interval,
            intervals,
        });
    }
    let left = grid.times()[id.interval];
    let right = grid.times()[id.interval + 1];
    let last = id.interval + 1 == intervals;
    let inside = t >= left && (t < right || (last && t == right));
    if !inside {
        return Ok(0.0);
    }
    let dt = right - left;
    Ok(hermite_local(id.kind, (t - left) / dt, dt, order))
}

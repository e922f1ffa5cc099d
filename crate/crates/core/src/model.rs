//! Domain types: knot grid, paired observations, and the fitted spline.

use crate::basis::{hermite_local, HermiteKind};
use crate::error::{Result, VsplineError};
use serde::{Deserialize, Serialize};

/// Strictly increasing knot times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(VsplineError::InvalidGrid(format!(
                "need at least 2 knots, got {}",
                times.len()
            )));
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite()) {
            return Err(VsplineError::InvalidGrid(format!("knot {i} is not finite")));
        }
        for (i, w) in times.windows(2).enumerate() {
            if w[1] - w[0] <= 0.0 {
                return Err(VsplineError::InvalidGrid(format!(
                    "knots {i} and {} are not strictly increasing ({} >= {})",
                    i + 1,
                    w[0],
                    w[1]
                )));
            }
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn delta(&self, interval: usize) -> f64 {
        self.times[interval + 1] - self.times[interval]
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Interval containing `t` under the half-open convention, with the
    /// final knot assigned to the last interval. `None` outside `[t_1, t_n]`.
    pub fn locate(&self, t: f64) -> Option<usize> {
        if t < self.start() || t > self.end() {
            return None;
        }
        let upper = self.times.partition_point(|&k| k <= t);
        Some(upper.saturating_sub(1).min(self.intervals() - 1))
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = VsplineError;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        TimeGrid::new(value)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(value: TimeGrid) -> Self {
        value.times
    }
}

/// Paired position/velocity observations, stored per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    grid: TimeGrid,
    positions: Vec<Vec<f64>>,
    velocities: Vec<Vec<f64>>,
}

impl ObservationSet {
    /// `positions[dim][i]` and `velocities[dim][i]`.
    pub fn new(grid: TimeGrid, positions: Vec<Vec<f64>>, velocities: Vec<Vec<f64>>) -> Result<Self> {
        if positions.is_empty() {
            return Err(VsplineError::ShapeMismatch("at least one dimension required".into()));
        }
        if positions.len() != velocities.len() {
            return Err(VsplineError::ShapeMismatch(format!(
                "{} position dimensions but {} velocity dimensions",
                positions.len(),
                velocities.len()
            )));
        }
        let n = grid.len();
        for (d, (p, v)) in positions.iter().zip(&velocities).enumerate() {
            if p.len() != n || v.len() != n {
                return Err(VsplineError::ShapeMismatch(format!(
                    "dimension {d}: expected {n} rows, got {} positions and {} velocities",
                    p.len(),
                    v.len()
                )));
            }
            if p.iter().chain(v).any(|x| !x.is_finite()) {
                return Err(VsplineError::NonFinite(format!("observations (dimension {d})")));
            }
        }
        Ok(Self {
            grid,
            positions,
            velocities,
        })
    }

    pub fn one_dimensional(times: Vec<f64>, y: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        Self::new(TimeGrid::new(times)?, vec![y], vec![v])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self, dim: usize) -> &[f64] {
        &self.positions[dim]
    }

    pub fn velocities(&self, dim: usize) -> &[f64] {
        &self.velocities[dim]
    }

    /// Euclidean average speed `‖y_{i+1} - y_i‖ / ΔT_i` on one interval.
    pub fn mean_speed(&self, interval: usize) -> f64 {
        let step: f64 = self
            .positions
            .iter()
            .map(|p| {
                let d = p[interval + 1] - p[interval];
                d * d
            })
            .sum::<f64>()
            .sqrt();
        step / self.grid.delta(interval)
    }

    /// Observation set restricted to one coordinate.
    pub fn dimension(&self, dim: usize) -> ObservationSet {
        ObservationSet {
            grid: self.grid.clone(),
            positions: vec![self.positions[dim].clone()],
            velocities: vec![self.velocities[dim].clone()],
        }
    }

    /// Same observations with knot `index` removed.
    pub fn without(&self, index: usize) -> Result<ObservationSet> {
        let drop = |xs: &Vec<f64>| {
            xs.iter()
                .enumerate()
                .filter(|(i, _)| *i != index)
                .map(|(_, x)| *x)
                .collect::<Vec<_>>()
        };
        let times = drop(&self.grid.times);
        ObservationSet::new(
            TimeGrid::new(times)?,
            self.positions.iter().map(drop).collect(),
            self.velocities.iter().map(drop).collect(),
        )
    }
}

/// A fitted spline: interleaved (value, slope) coefficients per knot and
/// per dimension, plus the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedVSpline {
    pub(crate) grid: TimeGrid,
    pub(crate) theta: Vec<Vec<f64>>,
    pub(crate) gamma: f64,
    pub(crate) lambdas: Vec<f64>,
}

/// One row of a sampled trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub t: f64,
    pub f: Vec<f64>,
    pub df: Vec<f64>,
    pub d2f: Vec<f64>,
}

impl FittedVSpline {
    /// Build from explicit coefficients; `theta[dim]` has length `2n`.
    pub fn new(grid: TimeGrid, theta: Vec<Vec<f64>>, gamma: f64, lambdas: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        if theta.is_empty() {
            return Err(VsplineError::ShapeMismatch("theta has no dimensions".into()));
        }
        if let Some(bad) = theta.iter().find(|c| c.len() != 2 * n) {
            return Err(VsplineError::ShapeMismatch(format!(
                "theta column has {} entries, expected {}",
                bad.len(),
                2 * n
            )));
        }
        if lambdas.len() != grid.intervals() {
            return Err(VsplineError::ShapeMismatch(format!(
                "{} lambdas for {} intervals",
                lambdas.len(),
                grid.intervals()
            )));
        }
        if !(gamma >= 0.0) || lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(VsplineError::InvalidParameter(
                "gamma and lambdas must be nonnegative".into(),
            ));
        }
        Ok(Self {
            grid,
            theta,
            gamma,
            lambdas,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dims(&self) -> usize {
        self.theta.len()
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn theta(&self, dim: usize) -> &[f64] {
        &self.theta[dim]
    }

    /// Fitted values at the knots for one dimension.
    pub fn knot_values(&self, dim: usize) -> Vec<f64> {
        self.theta[dim].iter().step_by(2).copied().collect()
    }

    /// Fitted slopes at the knots for one dimension.
    pub fn knot_slopes(&self, dim: usize) -> Vec<f64> {
        self.theta[dim].iter().skip(1).step_by(2).copied().collect()
    }

    /// Value, first or second derivative at `t`, one entry per dimension.
    ///
    /// Outside `[t_1, t_n]` the spline continues linearly from the nearest
    /// boundary knot.
    pub fn eval(&self, t: f64, order: u8) -> Result<Vec<f64>> {
        if order > 2 {
            return Err(VsplineError::DerivativeOrder(order));
        }
        if !t.is_finite() {
            return Err(VsplineError::NonFinite("evaluation point".into()));
        }
        Ok((0..self.dims()).map(|d| self.eval_dim(d, t, order)).collect())
    }

    pub(crate) fn eval_dim(&self, dim: usize, t: f64, order: u8) -> f64 {
        let theta = &self.theta[dim];
        let n = self.grid.len();
        let (knot, outside) = if t < self.grid.start() {
            (0, true)
        } else if t > self.grid.end() {
            (n - 1, true)
        } else {
            (0, false)
        };
        if outside {
            let value = theta[2 * knot];
            let slope = theta[2 * knot + 1];
            return match order {
                0 => value + slope * (t - self.grid.times()[knot]),
                1 => slope,
                _ => 0.0,
            };
        }
        let i = self.grid.locate(t).expect("t inside grid");
        let left = self.grid.times()[i];
        let dt = self.grid.delta(i);
        let s = (t - left) / dt;
        HermiteKind::ALL
            .iter()
            .map(|&k| hermite_local(k, s, dt, order) * theta[2 * i + k.coefficient_offset()])
            .sum()
    }

    /// One-sided second derivatives at knot `i` as `(f''(t_i^-), f''(t_i^+))`,
    /// taken from the neighbouring cubic pieces.
    pub(crate) fn second_derivative_sides(&self, dim: usize, knot: usize) -> (f64, f64) {
        let theta = &self.theta[dim];
        let piece = |i: usize, s: f64| {
            let dt = self.grid.delta(i);
            HermiteKind::ALL
                .iter()
                .map(|&k| hermite_local(k, s, dt, 2) * theta[2 * i + k.coefficient_offset()])
                .sum::<f64>()
        };
        let left = if knot == 0 { 0.0 } else { piece(knot - 1, 1.0) };
        let right = if knot + 1 == self.grid.len() {
            0.0
        } else {
            piece(knot, 0.0)
        };
        (left, right)
    }

    /// Uniform samples over `[t_1, t_n]` including both ends.
    pub fn sample(&self, resolution: usize) -> Result<Vec<SampleRow>> {
        if resolution < 2 {
            return Err(VsplineError::InvalidParameter(format!(
                "resolution must be at least 2, got {resolution}"
            )));
        }
        let (a, b) = (self.grid.start(), self.grid.end());
        let step = (b - a) / (resolution - 1) as f64;
        Ok((0..resolution)
            .map(|k| {
                let t = if k + 1 == resolution { b } else { a + step * k as f64 };
                let at = |order| (0..self.dims()).map(|d| self.eval_dim(d, t, order)).collect();
                SampleRow {
                    t,
                    f: at(0),
                    df: at(1),
                    d2f: at(2),
                }
            })
            .collect())
    }
}

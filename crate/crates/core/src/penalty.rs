//! Piecewise-constant acceleration penalties and the banded penalty matrix.
//!
//! The penalty on interval `i` is `λ_i ∫ f''(t)² dt`. Summed over intervals
//! it is the quadratic form `θᵀ Ω_λ θ` where `Ω_λ` has half-bandwidth 3 in the
//! interleaved (value, slope) coefficient layout.

use crate::banded::BandedSym;
use crate::error::{Result, VsplineError};
use crate::model::{ObservationSet, TimeGrid};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Relative floor on the average speed used by the adaptive families.
pub const SPEED_FLOOR_FRACTION: f64 = 1e-3;
/// Upper cap on any `λ_i`, relative to the median `λ`.
pub const LAMBDA_CAP_RATIO: f64 = 1e12;

/// Rule producing the per-interval penalties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PenaltySpec {
    /// `λ_i = λ₀` everywhere.
    Constant { lambda: f64 },
    /// `λ_i = η ΔT_i / v̄_i²`.
    Adaptive { eta: f64 },
    /// `λ_d` on boom-down intervals, `λ_u` on boom-up intervals.
    BoomConstant { lambda_down: f64, lambda_up: f64 },
    /// Adaptive rule with `η_d` / `η_u` selected by boom state.
    BoomAdaptive { eta_down: f64, eta_up: f64 },
}

/// The four penalty families without their parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyFamily {
    Constant,
    Adaptive,
    BoomConstant,
    BoomAdaptive,
}

impl PenaltyFamily {
    pub fn is_boom(self) -> bool {
        matches!(self, PenaltyFamily::BoomConstant | PenaltyFamily::BoomAdaptive)
    }

    /// Number of scalar penalty parameters (1 or 2).
    pub fn parameter_count(self) -> usize {
        if self.is_boom() {
            2
        } else {
            1
        }
    }

    /// Build a spec from parameters in `(down, up)` order for boom families.
    pub fn with_parameters(self, params: &[f64]) -> Result<PenaltySpec> {
        if params.len() != self.parameter_count() {
            return Err(VsplineError::InvalidParameter(format!(
                "{self} takes {} parameter(s), got {}",
                self.parameter_count(),
                params.len()
            )));
        }
        let spec = match self {
            PenaltyFamily::Constant => PenaltySpec::Constant { lambda: params[0] },
            PenaltyFamily::Adaptive => PenaltySpec::Adaptive { eta: params[0] },
            PenaltyFamily::BoomConstant => PenaltySpec::BoomConstant {
                lambda_down: params[0],
                lambda_up: params[1],
            },
            PenaltyFamily::BoomAdaptive => PenaltySpec::BoomAdaptive {
                eta_down: params[0],
                eta_up: params[1],
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for PenaltyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PenaltyFamily::Constant => "constant",
            PenaltyFamily::Adaptive => "adaptive",
            PenaltyFamily::BoomConstant => "boom_constant",
            PenaltyFamily::BoomAdaptive => "boom_adaptive",
        })
    }
}

impl FromStr for PenaltyFamily {
    type Err = VsplineError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "constant" | "nonadaptive" | "non_adaptive" => Ok(PenaltyFamily::Constant),
            "adaptive" => Ok(PenaltyFamily::Adaptive),
            "boom_constant" => Ok(PenaltyFamily::BoomConstant),
            "boom_adaptive" => Ok(PenaltyFamily::BoomAdaptive),
            other => Err(VsplineError::InvalidParameter(format!(
                "unknown penalty family '{other}'"
            ))),
        }
    }
}

impl PenaltySpec {
    pub fn family(&self) -> PenaltyFamily {
        match self {
            PenaltySpec::Constant { .. } => PenaltyFamily::Constant,
            PenaltySpec::Adaptive { .. } => PenaltyFamily::Adaptive,
            PenaltySpec::BoomConstant { .. } => PenaltyFamily::BoomConstant,
            PenaltySpec::BoomAdaptive { .. } => PenaltyFamily::BoomAdaptive,
        }
    }

    /// Parameters in `(down, up)` order for boom families.
    pub fn parameters(&self) -> Vec<f64> {
        match *self {
            PenaltySpec::Constant { lambda } => vec![lambda],
            PenaltySpec::Adaptive { eta } => vec![eta],
            PenaltySpec::BoomConstant {
                lambda_down,
                lambda_up,
            } => vec![lambda_down, lambda_up],
            PenaltySpec::BoomAdaptive { eta_down, eta_up } => vec![eta_down, eta_up],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parameters().iter().all(|p| p.is_finite() && *p > 0.0) {
            Ok(())
        } else {
            Err(VsplineError::InvalidParameter(format!(
                "penalty parameters must be finite and positive: {self:?}"
            )))
        }
    }

    /// Parse the JSON form, e.g. `{"family": "adaptive", "eta": 0.1}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: PenaltySpec =
            serde_json::from_str(text).map_err(|e| VsplineError::Format(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Per-interval penalty weights, `n - 1` positive values.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalPenalties {
    lambdas: Vec<f64>,
}

impl IntervalPenalties {
    pub fn new(lambdas: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(VsplineError::ShapeMismatch("no intervals".into()));
        }
        if let Some(i) = lambdas.iter().position(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(VsplineError::InvalidParameter(format!(
                "lambda[{i}] = {} is not finite and positive",
                lambdas[i]
            )));
        }
        Ok(Self { lambdas })
    }

    pub fn constant(intervals: usize, lambda: f64) -> Result<Self> {
        Self::new(vec![lambda; intervals])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.lambdas
    }

    pub(crate) fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.lambdas.len() != grid.intervals() {
            return Err(VsplineError::ShapeMismatch(format!(
                "{} lambdas for {} intervals",
                self.lambdas.len(),
                grid.intervals()
            )));
        }
        Ok(())
    }
}

/// Per-interval `λ_i` for a penalty rule.
///
/// `boom` holds one flag per interval (`true` = boom down) and is required
/// by the boom families; other families ignore it.
pub fn interval_lambdas(
    spec: &PenaltySpec,
    obs: &ObservationSet,
    boom: Option<&[bool]>,
) -> Result<IntervalPenalties> {
    spec.validate()?;
    let grid = obs.grid();
    let m = grid.intervals();
    if let Some(i) = (0..m).find(|&i| !(grid.delta(i) > 0.0)) {
        return Err(VsplineError::InvalidGrid(format!("interval {i} has nonpositive length")));
    }
    let flags = if spec.family().is_boom() {
        let flags = boom.ok_or_else(|| {
            VsplineError::InvalidParameter(format!(
                "{} penalty requires boom flags",
                spec.family()
            ))
        })?;
        if flags.len() != m {
            return Err(VsplineError::ShapeMismatch(format!(
                "{} boom flags for {m} intervals",
                flags.len()
            )));
        }
        Some(flags)
    } else {
        None
    };
    let pick = |i: usize, down: f64, up: f64| {
        if flags.expect("boom family")[i] {
            down
        } else {
            up
        }
    };

    let lambdas: Vec<f64> = match *spec {
        PenaltySpec::Constant { lambda } => vec![lambda; m],
        PenaltySpec::BoomConstant {
            lambda_down,
            lambda_up,
        } => (0..m).map(|i| pick(i, lambda_down, lambda_up)).collect(),
        PenaltySpec::Adaptive { eta } => {
            let base = adaptive_base(obs);
            base.iter().map(|b| eta * b).collect()
        }
        PenaltySpec::BoomAdaptive { eta_down, eta_up } => {
            let base = adaptive_base(obs);
            base.iter()
                .enumerate()
                .map(|(i, b)| pick(i, eta_down, eta_up) * b)
                .collect()
        }
    };
    IntervalPenalties::new(cap_lambdas(lambdas))
}

/// `ΔT_i / max(v̄_i², ε_v²)` per interval.
fn adaptive_base(obs: &ObservationSet) -> Vec<f64> {
    let grid = obs.grid();
    let m = grid.intervals();
    let speeds: Vec<f64> = (0..m).map(|i| obs.mean_speed(i)).collect();
    let path: f64 = (0..m).map(|i| speeds[i] * grid.delta(i)).sum();
    let overall = path / (grid.end() - grid.start());
    let floor = SPEED_FLOOR_FRACTION * if overall > 0.0 { overall } else { 1.0 };
    let floor2 = floor * floor;
    (0..m)
        .map(|i| grid.delta(i) / (speeds[i] * speeds[i]).max(floor2))
        .collect()
}

fn cap_lambdas(mut lambdas: Vec<f64>) -> Vec<f64> {
    let mut sorted = lambdas.clone();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let cap = LAMBDA_CAP_RATIO * median;
    for l in &mut lambdas {
        if *l > cap {
            *l = cap;
        }
    }
    lambdas
}

/// `Ω^{(i)}` restricted to the four coefficients active on an interval of
/// length `dt`, ordered (left value, left slope, right value, right slope).
pub fn interval_block(dt: f64) -> [[f64; 4]; 4] {
    let d1 = 1.0 / dt;
    let d2 = d1 * d1;
    let d3 = d2 * d1;
    [
        [12.0 * d3, 6.0 * d2, -12.0 * d3, 6.0 * d2],
        [6.0 * d2, 4.0 * d1, -6.0 * d2, 2.0 * d1],
        [-12.0 * d3, -6.0 * d2, 12.0 * d3, -6.0 * d2],
        [6.0 * d2, 2.0 * d1, -6.0 * d2, 4.0 * d1],
    ]
}

/// `Ω_λ = Σ λ_i Ω^{(i)}` in banded storage.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyMatrix {
    band: BandedSym,
}

impl PenaltyMatrix {
    pub fn band(&self) -> &BandedSym {
        &self.band
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.band.get(i, j)
    }

    pub fn size(&self) -> usize {
        self.band.size()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.band.to_dense()
    }

    /// `θᵀ Ω_λ θ`, the exact integrated weighted squared curvature.
    pub fn quad_form(&self, theta: &[f64]) -> f64 {
        self.band.quad_form(theta)
    }

    pub fn mul_vec(&self, theta: &[f64]) -> Vec<f64> {
        self.band.mul_vec(theta)
    }
}

pub fn assemble_omega(grid: &TimeGrid, lambdas: &IntervalPenalties) -> Result<PenaltyMatrix> {
    lambdas.check_grid(grid)?;
    Ok(PenaltyMatrix {
        band: assemble_band(grid, lambdas.as_slice()),
    })
}

pub(crate) fn assemble_band(grid: &TimeGrid, lambdas: &[f64]) -> BandedSym {
    let mut band = BandedSym::zeros(2 * grid.len(), 3);
    for (i, &lambda) in lambdas.iter().enumerate() {
        let block = interval_block(grid.delta(i));
        let base = 2 * i;
        for a in 0..4 {
            for b in 0..=a {
                band.add(base + a, base + b, lambda * block[a][b]);
            }
        }
    }
    band
}

/// Endpoint velocity mismatch on one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    /// `v_i - v̄_i`
    pub eps_plus: f64,
    /// `v_{i+1} - v̄_i`
    pub eps_minus: f64,
    /// `ε⁺² + ε⁺ε⁻ + ε⁻²`
    pub squared: f64,
}

impl Discrepancy {
    pub fn from_endpoints(y0: f64, y1: f64, v0: f64, v1: f64, dt: f64) -> Self {
        let mean = (y1 - y0) / dt;
        let eps_plus = v0 - mean;
        let eps_minus = v1 - mean;
        Self {
            eps_plus,
            eps_minus,
            squared: eps_plus * eps_plus + eps_plus * eps_minus + eps_minus * eps_minus,
        }
    }

    /// `∫ f''²` over the interval for the interpolating Hermite cubic.
    pub fn curvature_energy(&self, dt: f64) -> f64 {
        4.0 * self.squared / dt
    }
}

/// Discrepancy of a one-dimensional observation set on `interval`.
pub fn discrepancy(obs: &ObservationSet, interval: usize) -> Result<Discrepancy> {
    if obs.dims() != 1 {
        return Err(VsplineError::ShapeMismatch(format!(
            "discrepancy is per dimension; observation set has {} dimensions",
            obs.dims()
        )));
    }
    let m = obs.grid().intervals();
    if interval >= m {
        return Err(VsplineError::IntervalOutOfRange {
            index: interval,
            intervals: m,
        });
    }
    let y = obs.positions(0);
    let v = obs.velocities(0);
    Ok(Discrepancy::from_endpoints(
        y[interval],
        y[interval + 1],
        v[interval],
        v[interval + 1],
        obs.grid().delta(interval),
    ))
}

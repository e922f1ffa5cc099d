//! Parameter selection by leave-one-out cross-validation.
//!
//! [`cv_score`] evaluates the deleted-residual score from a single fit and
//! the smoother diagonals. [`cv_oracle`] computes the same score by literally
//! refitting without each point, and exists to check the shortcut.

use crate::error::{Result, VsplineError};
use crate::model::ObservationSet;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::penalty::{interval_lambdas, IntervalPenalties, PenaltyFamily, PenaltySpec};
use crate::solver::{fit_with_diagonals, fit_with_penalty_scale, PrecisionPair};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Denominators smaller than this mark a point as degenerate.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-8;
/// Candidates with more than this fraction of degenerate points are rejected.
pub const MAX_DEGENERATE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct CvScore {
    /// Mean of the per-point terms over non-degenerate points.
    pub value: f64,
    /// Squared deleted residual per point; `NaN` at degenerate points.
    pub per_point_terms: Vec<f64>,
    pub degenerate_points: Vec<usize>,
}

impl CvScore {
    fn from_terms(terms: Vec<f64>, degenerate_points: Vec<usize>) -> Result<Self> {
        let valid: Vec<f64> = terms.iter().copied().filter(|t| !t.is_nan()).collect();
        if valid.is_empty() {
            return Err(VsplineError::CvUndefined);
        }
        Ok(Self {
            value: valid.iter().sum::<f64>() / valid.len() as f64,
            per_point_terms: terms,
            degenerate_points,
        })
    }
}

/// Closed-form leave-one-out score.
///
/// For `d > 1` the numerator is the Euclidean norm of the per-point vector.
pub fn cv_score(obs: &ObservationSet, gamma: f64, lambdas: &IntervalPenalties) -> Result<CvScore> {
    let (spline, diag) = fit_with_diagonals(obs, gamma, lambdas, None)?;
    let n = obs.len();
    let mut terms = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for i in 0..n {
        let slope_gap = 1.0 - gamma * diag.v[i];
        if slope_gap.abs() < DEGENERATE_DENOMINATOR {
            degenerate.push(i);
            terms.push(f64::NAN);
            continue;
        }
        let coupling = gamma * diag.t[i] / slope_gap;
        let denom = 1.0 - diag.s[i] - coupling * diag.u[i];
        if denom.abs() < DEGENERATE_DENOMINATOR {
            degenerate.push(i);
            terms.push(f64::NAN);
            continue;
        }
        let mut sq = 0.0;
        for d in 0..obs.dims() {
            let theta = spline.theta(d);
            let r_pos = obs.positions(d)[i] - theta[2 * i];
            let r_vel = obs.velocities(d)[i] - theta[2 * i + 1];
            let num = r_pos + coupling * r_vel;
            sq += num * num;
        }
        terms.push(sq / (denom * denom));
    }
    CvScore::from_terms(terms, degenerate)
}

/// Penalties for the grid with knot `index` removed: the two intervals
/// around an interior knot merge and keep the left interval's `λ`; an
/// endpoint simply loses its interval.
fn lambdas_without(lambdas: &[f64], index: usize) -> Vec<f64> {
    let m = lambdas.len();
    let mut out = lambdas.to_vec();
    if index == 0 {
        out.remove(0);
    } else if index >= m {
        out.truncate(m - 1);
    } else {
        out.remove(index);
    }
    out
}

/// Leave-one-out score by brute-force refitting.
///
/// Each refit keeps the full-data `1/n` weighting of the objective, so the
/// penalty is scaled by the full `n`.
pub fn cv_oracle(obs: &ObservationSet, gamma: f64, lambdas: &IntervalPenalties) -> Result<CvScore> {
    let n = obs.len();
    if n < 3 {
        return Err(VsplineError::InvalidGrid(format!(
            "leave-one-out refits need at least 3 knots, got {n}"
        )));
    }
    if lambdas.len() != n - 1 {
        return Err(VsplineError::ShapeMismatch(format!(
            "{} lambdas for {} intervals",
            lambdas.len(),
            n - 1
        )));
    }
    let terms = (0..n)
        .map(|i| {
            let reduced = obs.without(i)?;
            let l = IntervalPenalties::new(lambdas_without(lambdas.as_slice(), i))?;
            let refit = fit_with_penalty_scale(&reduced, gamma, &l, n as f64)?;
            let t = obs.grid().times()[i];
            Ok((0..obs.dims())
                .map(|d| (obs.positions(d)[i] - refit.eval_dim(d, t, 0)).powi(2))
                .sum())
        })
        .collect::<Result<Vec<f64>>>()?;
    CvScore::from_terms(terms, Vec::new())
}

/// Generalized cross-validation for diagonal precision weights.
///
/// Smoother diagonals are replaced by their traces:
/// numerator `rᵀW₁r + 2c rᵀW₁^{1/2}W₂^{1/2}r' + c² r'ᵀW₂r'` with
/// `c = tr(γT) / tr(I - γV)`, denominator `tr(I - S - cU)²`, where `r` and
/// `r'` are the position and slope residuals.
pub fn gcv_score(
    obs: &ObservationSet,
    gamma: f64,
    lambdas: &IntervalPenalties,
    weights: &PrecisionPair,
) -> Result<f64> {
    let (w1, w2) = weights.diagonals().ok_or_else(|| {
        VsplineError::Unsupported("GCV requires diagonal precision weights".into())
    })?;
    let (spline, diag) = fit_with_diagonals(obs, gamma, lambdas, Some(weights))?;
    let n = obs.len() as f64;
    let tr_t: f64 = gamma * diag.t.iter().sum::<f64>();
    let tr_v = n - gamma * diag.v.iter().sum::<f64>();
    let c = tr_t / tr_v;
    let denom = n - diag.s.iter().sum::<f64>() - c * diag.u.iter().sum::<f64>();
    let mut num = 0.0;
    for d in 0..obs.dims() {
        let theta = spline.theta(d);
        for i in 0..obs.len() {
            let r = theta[2 * i] - obs.positions(d)[i];
            let rp = theta[2 * i + 1] - obs.velocities(d)[i];
            num += w1[i] * r * r
                + 2.0 * c * (w1[i].sqrt() * w2[i].sqrt()) * r * rp
                + c * c * w2[i] * rp * rp;
        }
    }
    Ok(num / (denom * denom))
}

/// `count` log-spaced values from `10^lo` to `10^hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![10f64.powf(lo)],
        _ => (0..count)
            .map(|k| 10f64.powf(lo + (hi - lo) * k as f64 / (count - 1) as f64))
            .collect(),
    }
}

/// Grid (and optional local refinement) over `γ` and the penalty parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpec {
    pub family: PenaltyFamily,
    pub gamma_grid: Vec<f64>,
    /// First penalty parameter (`λ₀`, `η`, or the boom-down value).
    pub param_grid: Vec<f64>,
    /// Boom-up parameter grid; defaults to `param_grid` for boom families.
    pub param_up_grid: Option<Vec<f64>>,
    pub refine: bool,
    pub refine_options: RefineOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub max_evals: usize,
    pub rel_tol: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            max_evals: 200,
            rel_tol: 1e-4,
        }
    }
}

impl SearchSpec {
    /// `γ ∈ 10^[-3, 3]` (13 points), parameter `∈ 10^[-8, 2]` (21 points).
    pub fn with_defaults(family: PenaltyFamily) -> Self {
        Self {
            family,
            gamma_grid: log_grid(-3.0, 3.0, 13),
            param_grid: log_grid(-8.0, 2.0, 21),
            param_up_grid: None,
            refine: true,
            refine_options: RefineOptions::default(),
        }
    }

    fn up_grid(&self) -> Option<&[f64]> {
        if self.family.is_boom() {
            Some(self.param_up_grid.as_deref().unwrap_or(&self.param_grid))
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_grid.is_empty() || self.param_grid.is_empty() {
            return Err(VsplineError::InvalidParameter("search grids must be nonempty".into()));
        }
        if self.gamma_grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            return Err(VsplineError::InvalidParameter(
                "gamma candidates must be finite and nonnegative".into(),
            ));
        }
        let params = self.param_grid.iter().chain(self.up_grid().unwrap_or(&[]));
        if params.clone().any(|p| !(p.is_finite() && *p > 0.0)) || self.up_grid().is_some_and(|g| g.is_empty()) {
            return Err(VsplineError::InvalidParameter(
                "penalty candidates must be finite and positive".into(),
            ));
        }
        Ok(())
    }

    /// Candidates in deterministic order: `γ` outermost, then the parameters.
    fn candidates(&self) -> Vec<(f64, Vec<f64>)> {
        let mut out = Vec::new();
        for &g in &self.gamma_grid {
            for &p in &self.param_grid {
                match self.up_grid() {
                    None => out.push((g, vec![p])),
                    Some(up) => out.extend(up.iter().map(|&u| (g, vec![p, u]))),
                }
            }
        }
        out
    }
}

/// One evaluated grid candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub gamma: f64,
    pub params: Vec<f64>,
    pub score: f64,
    pub degenerate_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub penalty: PenaltySpec,
    pub gamma: f64,
    pub score: f64,
    /// Whether the optimum came from refinement rather than the grid.
    pub refined: bool,
    /// Successful grid candidates, in grid order.
    pub trace: Vec<TraceRow>,
    /// Grid candidates that failed, with the reason.
    pub skipped: Vec<(f64, Vec<f64>, String)>,
}

/// Evaluate one `(γ, parameters)` candidate, rejecting it when too many
/// points are degenerate.
pub fn evaluate_candidate(
    obs: &ObservationSet,
    family: PenaltyFamily,
    gamma: f64,
    params: &[f64],
    boom: Option<&[bool]>,
) -> Result<CvScore> {
    let spec = family.with_parameters(params)?;
    let lambdas = interval_lambdas(&spec, obs, boom)?;
    let score = cv_score(obs, gamma, &lambdas)?;
    let n = obs.len();
    if score.degenerate_points.len() as f64 > MAX_DEGENERATE_FRACTION * n as f64 {
        return Err(VsplineError::CandidateRejected {
            degenerate: score.degenerate_points.len(),
            n,
        });
    }
    Ok(score)
}

fn better(a: (f64, f64, &[f64]), b: (f64, f64, &[f64])) -> bool {
    if a.0 != b.0 {
        return a.0 < b.0;
    }
    if a.1 != b.1 {
        return a.1 < b.1;
    }
    a.2.iter()
        .zip(b.2)
        .find(|(x, y)| x != y)
        .is_some_and(|(x, y)| x < y)
}

/// Candidates whose score leaves out degenerate points rank after every
/// candidate scored on all points: dropping the worst-conditioned points
/// biases the mean downward, and the bias favors near-interpolants.
fn ranks_before(a: &TraceRow, b: &TraceRow) -> bool {
    let (a_partial, b_partial) = (a.degenerate_count > 0, b.degenerate_count > 0);
    if a_partial != b_partial {
        return b_partial;
    }
    better((a.score, a.gamma, &a.params), (b.score, b.gamma, &b.params))
}

/// Minimize the CV score over the search grid, then optionally polish the
/// best point with Nelder–Mead in log-parameter space.
///
/// Candidates scored on every point are preferred; ties go to the smaller
/// `γ`, then the smaller penalty parameter.
pub fn select_parameters(
    obs: &ObservationSet,
    spec: &SearchSpec,
    boom: Option<&[bool]>,
) -> Result<Selection> {
    spec.validate()?;
    if spec.family.is_boom() && boom.is_none() {
        return Err(VsplineError::InvalidParameter(format!(
            "{} search requires boom flags",
            spec.family
        )));
    }
    let candidates = spec.candidates();
    let results: Vec<Result<CvScore>> = candidates
        .par_iter()
        .map(|(g, p)| evaluate_candidate(obs, spec.family, *g, p, boom))
        .collect();

    let mut trace = Vec::new();
    let mut skipped = Vec::new();
    for ((g, p), r) in candidates.iter().zip(results) {
        match r {
            Ok(s) => trace.push(TraceRow {
                gamma: *g,
                params: p.clone(),
                score: s.value,
                degenerate_count: s.degenerate_points.len(),
            }),
            Err(e) => skipped.push((*g, p.clone(), e.to_string())),
        }
    }
    let best = trace
        .iter()
        .filter(|r| r.score.is_finite())
        .fold(None::<&TraceRow>, |acc, r| match acc {
            Some(b) if !ranks_before(r, b) => Some(b),
            _ => Some(r),
        })
        .cloned();
    let Some(best) = best else {
        let diagnostics = skipped
            .iter()
            .map(|(g, p, e)| format!("gamma={g} params={p:?}: {e}"))
            .collect::<Vec<_>>()
            .join("\n");
        return Err(VsplineError::SearchFailed(diagnostics));
    };

    let mut gamma = best.gamma;
    let mut params = best.params.clone();
    let mut score = best.score;
    let mut refined = false;
    if spec.refine {
        if let Some((g, p, s)) = refine(obs, spec, &best, boom) {
            if s < score {
                gamma = g;
                params = p;
                score = s;
                refined = true;
            }
        }
    }
    Ok(Selection {
        penalty: spec.family.with_parameters(&params)?,
        gamma,
        score,
        refined,
        trace,
        skipped,
    })
}

fn refine(
    obs: &ObservationSet,
    spec: &SearchSpec,
    best: &TraceRow,
    boom: Option<&[bool]>,
) -> Option<(f64, Vec<f64>, f64)> {
    // Axes with a single grid value (or γ = 0) stay fixed.
    let free_gamma = spec.gamma_grid.len() > 1 && best.gamma > 0.0;
    let mut free_params = vec![spec.param_grid.len() > 1];
    if let Some(up) = spec.up_grid() {
        free_params.push(up.len() > 1);
    }
    let mut start = Vec::new();
    if free_gamma {
        start.push(best.gamma.ln());
    }
    for (p, free) in best.params.iter().zip(&free_params) {
        if *free {
            start.push(p.ln());
        }
    }
    if start.is_empty() {
        return None;
    }
    let unpack = |x: &[f64]| {
        let mut it = x.iter();
        let g = if free_gamma {
            it.next().expect("gamma coordinate").exp()
        } else {
            best.gamma
        };
        let params: Vec<f64> = best
            .params
            .iter()
            .zip(&free_params)
            .map(|(p, free)| if *free { it.next().expect("coordinate").exp() } else { *p })
            .collect();
        (g, params)
    };
    let step = grid_log_step(&spec.param_grid).unwrap_or(1.0) * 0.5;
    let result = nelder_mead(
        |x| {
            let (g, p) = unpack(x);
            match evaluate_candidate(obs, spec.family, g, &p, boom) {
                Ok(s) if s.degenerate_points.is_empty() || best.degenerate_count > 0 => s.value,
                _ => f64::INFINITY,
            }
        },
        &start,
        NelderMeadOptions {
            max_evals: spec.refine_options.max_evals,
            rel_tol: spec.refine_options.rel_tol,
            initial_step: step,
        },
    );
    if !result.value.is_finite() {
        return None;
    }
    let (g, p) = unpack(&result.x);
    Some((g, p, result.value))
}

fn grid_log_step(grid: &[f64]) -> Option<f64> {
    if grid.len() < 2 {
        return None;
    }
    let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some((hi / lo).ln() / (grid.len() - 1) as f64)
}

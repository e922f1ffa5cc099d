//! Generalized ridge solve for the spline coefficients.
//!
//! The coefficients minimize
//! `(y - Bθ)ᵀW₁(y - Bθ) + γ(v - Cθ)ᵀW₂(v - Cθ) + n θᵀΩ_λθ`
//! where `B` and `C` pick the value and slope entries of the interleaved
//! coefficient vector. With diagonal weights the system matrix
//! `G = BᵀW₁B + γCᵀW₂C + nΩ_λ` keeps the half-bandwidth of `Ω_λ`, so one
//! banded `LDLᵀ` factorization serves every dimension and also yields the
//! smoother-matrix diagonals.

use crate::banded::{BandedLdl, BandedSym};
use crate::error::{Result, VsplineError};
use crate::model::{FittedVSpline, ObservationSet, TimeGrid};
use crate::penalty::{assemble_band, IntervalPenalties};
use nalgebra::DMatrix;

/// Known precision matrices for correlated position / velocity errors.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionPair {
    weights: Weights,
}

#[derive(Debug, Clone, PartialEq)]
enum Weights {
    Diagonal { w1: Vec<f64>, w2: Vec<f64> },
    Dense { w1: DMatrix<f64>, w2: DMatrix<f64> },
}

impl PrecisionPair {
    pub fn identity(n: usize) -> Self {
        Self {
            weights: Weights::Diagonal {
                w1: vec![1.0; n],
                w2: vec![1.0; n],
            },
        }
    }

    pub fn diagonal(w1: Vec<f64>, w2: Vec<f64>) -> Result<Self> {
        if w1.len() != w2.len() {
            return Err(VsplineError::ShapeMismatch("weight vectors differ in length".into()));
        }
        if w1.iter().chain(&w2).any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(VsplineError::InvalidParameter(
                "diagonal precision weights must be finite and positive".into(),
            ));
        }
        Ok(Self {
            weights: Weights::Diagonal { w1, w2 },
        })
    }

    /// General symmetric positive-definite precision matrices. Matrices with
    /// no off-diagonal entries are stored as diagonals.
    pub fn dense(w1: DMatrix<f64>, w2: DMatrix<f64>) -> Result<Self> {
        for (name, w) in [("W1", &w1), ("W2", &w2)] {
            if !w.is_square() {
                return Err(VsplineError::ShapeMismatch(format!("{name} is not square")));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(VsplineError::NonFinite(name.into()));
            }
            if (w - w.transpose()).abs().max() > 1e-12 * w.abs().max().max(1.0) {
                return Err(VsplineError::InvalidParameter(format!("{name} is not symmetric")));
            }
            if w.clone().cholesky().is_none() {
                return Err(VsplineError::InvalidParameter(format!(
                    "{name} is not positive definite"
                )));
            }
        }
        if w1.nrows() != w2.nrows() {
            return Err(VsplineError::ShapeMismatch("W1 and W2 differ in size".into()));
        }
        let off_diagonal = |w: &DMatrix<f64>| {
            (0..w.nrows()).any(|i| (0..w.ncols()).any(|j| i != j && w[(i, j)] != 0.0))
        };
        if !off_diagonal(&w1) && !off_diagonal(&w2) {
            return Self::diagonal(w1.diagonal().iter().copied().collect(), w2.diagonal().iter().copied().collect());
        }
        Ok(Self {
            weights: Weights::Dense { w1, w2 },
        })
    }

    pub fn len(&self) -> usize {
        match &self.weights {
            Weights::Diagonal { w1, .. } => w1.len(),
            Weights::Dense { w1, .. } => w1.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.weights, Weights::Diagonal { .. })
    }

    /// Diagonal weights, if this pair is diagonal.
    pub fn diagonals(&self) -> Option<(&[f64], &[f64])> {
        match &self.weights {
            Weights::Diagonal { w1, w2 } => Some((w1, w2)),
            Weights::Dense { .. } => None,
        }
    }

    pub fn w1(&self) -> DMatrix<f64> {
        match &self.weights {
            Weights::Diagonal { w1, .. } => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(w1)),
            Weights::Dense { w1, .. } => w1.clone(),
        }
    }

    pub fn w2(&self) -> DMatrix<f64> {
        match &self.weights {
            Weights::Diagonal { w2, .. } => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(w2)),
            Weights::Dense { w2, .. } => w2.clone(),
        }
    }
}

/// Diagonals of the smoother matrices `S, T, U, V` mapping `(y, v)` to the
/// fitted values and slopes at the knots.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherDiagonals {
    pub s: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Banded system matrix `G` with its factorization.
#[derive(Debug, Clone)]
pub struct SystemMatrix {
    band: BandedSym,
    factor: BandedLdl,
    gamma: f64,
    w1: Vec<f64>,
    w2: Vec<f64>,
    ridge: f64,
}

impl SystemMatrix {
    /// Assemble and factor `G` for diagonal (or absent) weights.
    pub fn new(
        grid: &TimeGrid,
        gamma: f64,
        lambdas: &IntervalPenalties,
        weights: Option<&PrecisionPair>,
    ) -> Result<Self> {
        Self::with_penalty_scale(grid, gamma, lambdas, weights, grid.len() as f64)
    }

    pub(crate) fn with_penalty_scale(
        grid: &TimeGrid,
        gamma: f64,
        lambdas: &IntervalPenalties,
        weights: Option<&PrecisionPair>,
        penalty_scale: f64,
    ) -> Result<Self> {
        check_gamma(gamma)?;
        lambdas.check_grid(grid)?;
        let n = grid.len();
        let (w1, w2) = match weights {
            None => (vec![1.0; n], vec![1.0; n]),
            Some(p) => {
                if p.len() != n {
                    return Err(VsplineError::ShapeMismatch(format!(
                        "weights sized {} for {n} observations",
                        p.len()
                    )));
                }
                let (a, b) = p.diagonals().ok_or_else(|| {
                    VsplineError::Unsupported("non-diagonal weights require the dense path".into())
                })?;
                (a.to_vec(), b.to_vec())
            }
        };
        let scaled: Vec<f64> = lambdas.as_slice().iter().map(|l| penalty_scale * l).collect();
        let mut band = assemble_band(grid, &scaled);
        for i in 0..n {
            band.add(2 * i, 2 * i, w1[i]);
            band.add(2 * i + 1, 2 * i + 1, gamma * w2[i]);
        }
        let (factor, ridge) = match band.factor() {
            Ok(f) => (f, 0.0),
            Err(err) if gamma == 0.0 => {
                let ridge = 1e-12 * band.trace() / (2 * n) as f64;
                log::warn!("system matrix singular with gamma = 0 ({err}); adding ridge {ridge:e}");
                for k in 0..2 * n {
                    band.add(k, k, ridge);
                }
                (band.factor()?, ridge)
            }
            Err(err) => return Err(err),
        };
        Ok(Self {
            band,
            factor,
            gamma,
            w1,
            w2,
            ridge,
        })
    }

    pub fn band(&self) -> &BandedSym {
        &self.band
    }

    /// Ridge added to the diagonal to recover from a singular `γ = 0` system.
    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        self.band.to_dense()
    }

    /// Coefficients for one coordinate: `G⁻¹(BᵀW₁y + γCᵀW₂v)`.
    pub fn solve_coordinate(&self, y: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.w1.len();
        let mut rhs = vec![0.0; 2 * n];
        for i in 0..n {
            rhs[2 * i] = self.w1[i] * y[i];
            rhs[2 * i + 1] = self.gamma * (self.w2[i] * v[i]);
        }
        self.factor.solve(&rhs)
    }

    pub fn smoother_diagonals(&self) -> SmootherDiagonals {
        let z = self.factor.selected_inverse();
        let n = self.w1.len();
        let mut out = SmootherDiagonals {
            s: Vec::with_capacity(n),
            t: Vec::with_capacity(n),
            u: Vec::with_capacity(n),
            v: Vec::with_capacity(n),
        };
        for i in 0..n {
            let (a, b) = (2 * i, 2 * i + 1);
            out.s.push(z.get(a, a) * self.w1[i]);
            out.t.push(z.get(a, b) * self.w2[i]);
            out.u.push(z.get(b, a) * self.w1[i]);
            out.v.push(z.get(b, b) * self.w2[i]);
        }
        out
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma >= 0.0 {
        Ok(())
    } else {
        Err(VsplineError::InvalidParameter(format!(
            "gamma must be finite and nonnegative, got {gamma}"
        )))
    }
}

pub(crate) fn fit_banded(obs: &ObservationSet, system: &SystemMatrix, gamma: f64, lambdas: &IntervalPenalties) -> FittedVSpline {
    let theta = (0..obs.dims())
        .map(|d| system.solve_coordinate(obs.positions(d), obs.velocities(d)))
        .collect();
    FittedVSpline {
        grid: obs.grid().clone(),
        theta,
        gamma,
        lambdas: lambdas.as_slice().to_vec(),
    }
}

/// Fit the spline for fixed `γ` and penalties.
///
/// Every dimension shares one factorization. Non-diagonal weights go through
/// a dense Cholesky solve.
pub fn fit(
    obs: &ObservationSet,
    gamma: f64,
    lambdas: &IntervalPenalties,
    weights: Option<&PrecisionPair>,
) -> Result<FittedVSpline> {
    match weights {
        Some(p) if !p.is_diagonal() => dense::fit(obs, gamma, lambdas, p),
        _ => {
            let system = SystemMatrix::new(obs.grid(), gamma, lambdas, weights)?;
            Ok(fit_banded(obs, &system, gamma, lambdas))
        }
    }
}

/// Fit with the penalty multiplied by `penalty_scale` instead of `n`.
pub(crate) fn fit_with_penalty_scale(
    obs: &ObservationSet,
    gamma: f64,
    lambdas: &IntervalPenalties,
    penalty_scale: f64,
) -> Result<FittedVSpline> {
    let system = SystemMatrix::with_penalty_scale(obs.grid(), gamma, lambdas, None, penalty_scale)?;
    Ok(fit_banded(obs, &system, gamma, lambdas))
}

/// Diagonals of `S, T, U, V`. With weights these are the diagonals of
/// `BG⁻¹BᵀW₁`, `BG⁻¹CᵀW₂`, `CG⁻¹BᵀW₁` and `CG⁻¹CᵀW₂`.
pub fn smoother_diagonals(
    obs: &ObservationSet,
    gamma: f64,
    lambdas: &IntervalPenalties,
    weights: Option<&PrecisionPair>,
) -> Result<SmootherDiagonals> {
    match weights {
        Some(p) if !p.is_diagonal() => dense::smoother_diagonals(obs, gamma, lambdas, p),
        _ => Ok(SystemMatrix::new(obs.grid(), gamma, lambdas, weights)?.smoother_diagonals()),
    }
}

/// Fit and smoother diagonals from a single factorization.
pub(crate) fn fit_with_diagonals(
    obs: &ObservationSet,
    gamma: f64,
    lambdas: &IntervalPenalties,
    weights: Option<&PrecisionPair>,
) -> Result<(FittedVSpline, SmootherDiagonals)> {
    let system = SystemMatrix::new(obs.grid(), gamma, lambdas, weights)?;
    let spline = fit_banded(obs, &system, gamma, lambdas);
    Ok((spline, system.smoother_diagonals()))
}

/// The three terms of the objective and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    /// `(1/n) Σ ‖y_i - f(t_i)‖²`
    pub position: f64,
    /// `(γ/n) Σ ‖v_i - f'(t_i)‖²`
    pub velocity: f64,
    /// `Σ λ_i ∫ ‖f''‖²`
    pub penalty: f64,
    pub total: f64,
}

pub fn objective_terms(
    obs: &ObservationSet,
    spline: &FittedVSpline,
    gamma: f64,
    lambdas: &IntervalPenalties,
) -> Result<ObjectiveTerms> {
    check_gamma(gamma)?;
    lambdas.check_grid(obs.grid())?;
    if spline.grid() != obs.grid() || spline.dims() != obs.dims() {
        return Err(VsplineError::ShapeMismatch(
            "spline and observations use different grids or dimensions".into(),
        ));
    }
    let n = obs.len() as f64;
    let omega = assemble_band(obs.grid(), lambdas.as_slice());
    let mut position = 0.0;
    let mut velocity = 0.0;
    let mut penalty = 0.0;
    for d in 0..obs.dims() {
        let theta = spline.theta(d);
        for (i, (y, v)) in obs.positions(d).iter().zip(obs.velocities(d)).enumerate() {
            position += (y - theta[2 * i]).powi(2);
            velocity += (v - theta[2 * i + 1]).powi(2);
        }
        penalty += omega.quad_form(theta);
    }
    let position = position / n;
    let velocity = gamma * velocity / n;
    Ok(ObjectiveTerms {
        position,
        velocity,
        penalty,
        total: position + velocity + penalty,
    })
}

/// `J[f]` with the curvature integral evaluated exactly as `θᵀΩ_λθ`.
pub fn objective_value(
    obs: &ObservationSet,
    spline: &FittedVSpline,
    gamma: f64,
    lambdas: &IntervalPenalties,
) -> Result<f64> {
    Ok(objective_terms(obs, spline, gamma, lambdas)?.total)
}

/// `|f''(t_i⁺) - f''(t_i⁻)|` at each interior knot (Euclidean norm across
/// dimensions).
pub fn second_derivative_jumps(spline: &FittedVSpline) -> Vec<f64> {
    let n = spline.grid().len();
    (1..n.saturating_sub(1))
        .map(|k| {
            (0..spline.dims())
                .map(|d| {
                    let (l, r) = spline.second_derivative_sides(d, k);
                    (r - l).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

mod dense {
    use super::*;
    use nalgebra::DVector;

    fn system(
        grid: &TimeGrid,
        gamma: f64,
        lambdas: &IntervalPenalties,
        w: &PrecisionPair,
    ) -> Result<DMatrix<f64>> {
        check_gamma(gamma)?;
        lambdas.check_grid(grid)?;
        let n = grid.len();
        if w.len() != n {
            return Err(VsplineError::ShapeMismatch(format!(
                "weights sized {} for {n} observations",
                w.len()
            )));
        }
        let scaled: Vec<f64> = lambdas.as_slice().iter().map(|l| n as f64 * l).collect();
        let omega = assemble_band(grid, &scaled);
        let (w1, w2) = (w.w1(), w.w2());
        Ok(DMatrix::from_fn(2 * n, 2 * n, |a, b| {
            let fit = match (a % 2, b % 2) {
                (0, 0) => w1[(a / 2, b / 2)],
                (1, 1) => gamma * w2[(a / 2, b / 2)],
                _ => 0.0,
            };
            fit + omega.get(a, b)
        }))
    }

    fn factor(g: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let diag_min = g.diagonal().iter().copied().fold(f64::INFINITY, f64::min);
        g.cholesky().ok_or(VsplineError::NotPositiveDefinite {
            row: 0,
            pivot: diag_min,
        })
    }

    pub(super) fn fit(
        obs: &ObservationSet,
        gamma: f64,
        lambdas: &IntervalPenalties,
        w: &PrecisionPair,
    ) -> Result<FittedVSpline> {
        let n = obs.len();
        let chol = factor(system(obs.grid(), gamma, lambdas, w)?)?;
        let (w1, w2) = (w.w1(), w.w2());
        let theta = (0..obs.dims())
            .map(|d| {
                let wy = &w1 * DVector::from_column_slice(obs.positions(d));
                let wv = &w2 * DVector::from_column_slice(obs.velocities(d));
                let rhs = DVector::from_fn(2 * n, |k, _| {
                    if k % 2 == 0 {
                        wy[k / 2]
                    } else {
                        gamma * wv[k / 2]
                    }
                });
                chol.solve(&rhs).iter().copied().collect()
            })
            .collect();
        Ok(FittedVSpline {
            grid: obs.grid().clone(),
            theta,
            gamma,
            lambdas: lambdas.as_slice().to_vec(),
        })
    }

    pub(super) fn smoother_diagonals(
        obs: &ObservationSet,
        gamma: f64,
        lambdas: &IntervalPenalties,
        w: &PrecisionPair,
    ) -> Result<SmootherDiagonals> {
        let n = obs.len();
        let z = factor(system(obs.grid(), gamma, lambdas, w)?)?.inverse();
        let (w1, w2) = (w.w1(), w.w2());
        let entry = |row_off: usize, col_off: usize, wm: &DMatrix<f64>, i: usize| {
            (0..n).map(|j| z[(2 * i + row_off, 2 * j + col_off)] * wm[(j, i)]).sum::<f64>()
        };
        Ok(SmootherDiagonals {
            s: (0..n).map(|i| entry(0, 0, &w1, i)).collect(),
            t: (0..n).map(|i| entry(0, 1, &w2, i)).collect(),
            u: (0..n).map(|i| entry(1, 0, &w1, i)).collect(),
            v: (0..n).map(|i| entry(1, 1, &w2, i)).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_obs() -> ObservationSet {
        let t = vec![0.0, 0.3, 1.0, 1.4, 2.5];
        let y = t.iter().map(|t| 2.0 * t + 1.0).collect();
        ObservationSet::one_dimensional(t, y, vec![2.0; 5]).unwrap()
    }

    #[test]
    fn reproduces_lines() {
        let obs = line_obs();
        for (gamma, lambda) in [(0.5, 1e-3), (1.0, 10.0), (0.0, 1.0)] {
            let l = IntervalPenalties::constant(4, lambda).unwrap();
            let s = fit(&obs, gamma, &l, None).unwrap();
            for (i, t) in obs.grid().times().iter().enumerate() {
                assert!((s.theta(0)[2 * i] - (2.0 * t + 1.0)).abs() < 1e-10);
                assert!((s.theta(0)[2 * i + 1] - 2.0).abs() < 1e-10);
            }
            let j = objective_value(&obs, &s, gamma, &l).unwrap();
            assert!(j.abs() < 1e-10, "J = {j}");
        }
    }

    #[test]
    fn vanishing_penalty_interpolates() {
        let obs = ObservationSet::one_dimensional(
            vec![0.0, 0.5, 1.2, 2.0],
            vec![0.3, -1.0, 2.0, 0.5],
            vec![1.0, 0.0, -2.0, 3.0],
        )
        .unwrap();
        let l = IntervalPenalties::constant(3, 1e-14).unwrap();
        let s = fit(&obs, 1.0, &l, None).unwrap();
        for i in 0..4 {
            assert!((s.theta(0)[2 * i] - obs.positions(0)[i]).abs() < 1e-6);
            assert!((s.theta(0)[2 * i + 1] - obs.velocities(0)[i]).abs() < 1e-6);
        }
        let d = smoother_diagonals(&obs, 1.0, &l, None).unwrap();
        for i in 0..4 {
            assert!((d.s[i] - 1.0).abs() < 1e-6);
            assert!((d.v[i] - 1.0).abs() < 1e-6);
            assert!(d.t[i].abs() < 1e-6);
            assert_eq!(d.t[i], d.u[i]);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let obs = line_obs();
        let l = IntervalPenalties::constant(4, 1.0).unwrap();
        assert!(fit(&obs, f64::NAN, &l, None).is_err());
        assert!(fit(&obs, -1.0, &l, None).is_err());
        let short = IntervalPenalties::constant(3, 1.0).unwrap();
        assert!(fit(&obs, 1.0, &short, None).is_err());
        let w = PrecisionPair::identity(3);
        assert!(fit(&obs, 1.0, &l, Some(&w)).is_err());
    }

    #[test]
    fn dense_identity_becomes_diagonal() {
        let p = PrecisionPair::dense(DMatrix::identity(4, 4), DMatrix::identity(4, 4)).unwrap();
        assert!(p.is_diagonal());
        let mut w = DMatrix::identity(3, 3);
        w[(0, 1)] = 0.2;
        w[(1, 0)] = 0.2;
        assert!(!PrecisionPair::dense(w.clone(), w.clone()).unwrap().is_diagonal());
        w[(1, 0)] = 0.3;
        assert!(PrecisionPair::dense(w.clone(), w).is_err());
    }

    #[test]
    fn jumps_empty_without_interior_knots() {
        let obs = ObservationSet::one_dimensional(vec![0.0, 1.0], vec![0.0, 1.0], vec![0.0, 2.0]).unwrap();
        let s = fit(&obs, 1.0, &IntervalPenalties::constant(1, 1.0).unwrap(), None).unwrap();
        assert!(second_derivative_jumps(&s).is_empty());
    }
}

//! Independent reference implementations used by the integration tests.
//!
//! Everything here is dense and deliberately naive: basis second derivatives
//! are written out by hand, penalty entries come from Simpson quadrature and
//! systems are solved with LU.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vspline::{ObservationSet, TimeGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly increasing times with gaps in `[0.05, 1.5)`.
pub fn random_times(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut t = rng.random_range(-2.0..2.0);
    (0..n)
        .map(|_| {
            let cur = t;
            t += rng.random_range(0.05..1.5);
            cur
        })
        .collect()
}

pub fn random_obs(rng: &mut ChaCha8Rng, n: usize, dims: usize) -> ObservationSet {
    let times = random_times(rng, n);
    let pos = (0..dims)
        .map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    let vel = (0..dims)
        .map(|_| (0..n).map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    ObservationSet::new(TimeGrid::new(times).unwrap(), pos, vel).unwrap()
}

/// Second derivatives of the four cubic Hermite pieces on `[0, h]` at local
/// offset `x`, ordered (left value, left slope, right value, right slope).
pub fn hermite_d2(x: f64, h: f64) -> [f64; 4] {
    let s = x / h;
    [
        (12.0 * s - 6.0) / (h * h),
        (6.0 * s - 4.0) / h,
        (6.0 - 12.0 * s) / (h * h),
        (6.0 * s - 2.0) / h,
    ]
}

/// Composite Simpson rule with `panels` (even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for k in 1..panels {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + k as f64 * h);
    }
    acc * h / 3.0
}

/// `∫_0^h N_j'' N_k''` for the four local pieces, by quadrature.
pub fn quadrature_block(h: f64) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (j, row) in out.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            *cell = simpson(|x| hermite_d2(x, h)[j] * hermite_d2(x, h)[k], 0.0, h, 8);
        }
    }
    out
}

/// `Ω_λ` (2n × 2n) by quadrature.
pub fn dense_omega(times: &[f64], lambdas: &[f64]) -> DMatrix<f64> {
    let n = times.len();
    let mut omega = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n - 1 {
        let block = quadrature_block(times[i + 1] - times[i]);
        for a in 0..4 {
            for b in 0..4 {
                omega[(2 * i + a, 2 * i + b)] += lambdas[i] * block[a][b];
            }
        }
    }
    omega
}

/// Position (`B`) and slope (`C`) selectors.
pub fn selectors(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut b = DMatrix::zeros(n, 2 * n);
    let mut c = DMatrix::zeros(n, 2 * n);
    for i in 0..n {
        b[(i, 2 * i)] = 1.0;
        c[(i, 2 * i + 1)] = 1.0;
    }
    (b, c)
}

pub struct DenseSystem {
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub gamma: f64,
}

impl DenseSystem {
    pub fn new(times: &[f64], gamma: f64, lambdas: &[f64], w1: &[f64], w2: &[f64]) -> Self {
        let n = times.len();
        let (b, c) = selectors(n);
        let w1 = DMatrix::from_diagonal(&DVector::from_column_slice(w1));
        let w2 = DMatrix::from_diagonal(&DVector::from_column_slice(w2));
        let omega = dense_omega(times, lambdas);
        let g = b.transpose() * &w1 * &b + gamma * c.transpose() * &w2 * &c + n as f64 * &omega;
        Self {
            b,
            c,
            w1,
            w2,
            omega,
            g,
            gamma,
        }
    }

    pub fn unweighted(times: &[f64], gamma: f64, lambdas: &[f64]) -> Self {
        let ones = vec![1.0; times.len()];
        Self::new(times, gamma, lambdas, &ones, &ones)
    }

    pub fn rhs(&self, y: &[f64], v: &[f64]) -> DVector<f64> {
        let y = DVector::from_column_slice(y);
        let v = DVector::from_column_slice(v);
        self.b.transpose() * &self.w1 * y + self.gamma * self.c.transpose() * &self.w2 * v
    }

    pub fn solve(&self, y: &[f64], v: &[f64]) -> DVector<f64> {
        self.g.clone().lu().solve(&self.rhs(y, v)).expect("nonsingular system")
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.g.clone().lu().try_inverse().expect("nonsingular system")
    }

    /// `(S, T, U, V)` with `f = S y + γ T v`, `f' = U y + γ V v`.
    pub fn smoothers(&self) -> [DMatrix<f64>; 4] {
        let z = self.inverse();
        [
            &self.b * &z * self.b.transpose() * &self.w1,
            &self.b * &z * self.c.transpose() * &self.w2,
            &self.c * &z * self.b.transpose() * &self.w1,
            &self.c * &z * self.c.transpose() * &self.w2,
        ]
    }

    /// The objective scaled as written: weighted residual means plus the
    /// curvature quadratic form.
    pub fn objective(&self, theta: &DVector<f64>, y: &[f64], v: &[f64]) -> f64 {
        let n = y.len() as f64;
        let ry = DVector::from_column_slice(y) - &self.b * theta;
        let rv = DVector::from_column_slice(v) - &self.c * theta;
        (ry.transpose() * &self.w1 * &ry)[0] / n
            + self.gamma * (rv.transpose() * &self.w2 * &rv)[0] / n
            + (theta.transpose() * &self.omega * theta)[0]
    }
}

/// Leave-one-out score by deleting point `i` from the data terms while
/// keeping the grid, the penalty and the `1/n` scaling.
pub fn dense_loo(times: &[f64], y: &[f64], v: &[f64], gamma: f64, lambdas: &[f64]) -> Vec<f64> {
    let n = times.len();
    (0..n)
        .map(|i| {
            let mut w = vec![1.0; n];
            w[i] = 0.0;
            let sys = DenseSystem::new(times, gamma, lambdas, &w, &w);
            let theta = sys.solve(y, v);
            (y[i] - theta[2 * i]).powi(2)
        })
        .collect()
}

/// Natural cubic smoothing spline minimizing `Σ (y - g)² + α ∫ g''²`;
/// returns the fitted knot values.
pub fn reinsch(times: &[f64], y: &[f64], alpha: f64) -> Vec<f64> {
    let n = times.len();
    let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let m = n - 2;
    let mut q = DMatrix::zeros(n, m);
    let mut r = DMatrix::zeros(m, m);
    for j in 0..m {
        q[(j, j)] = 1.0 / h[j];
        q[(j + 1, j)] = -1.0 / h[j] - 1.0 / h[j + 1];
        q[(j + 2, j)] = 1.0 / h[j + 1];
        r[(j, j)] = (h[j] + h[j + 1]) / 3.0;
        if j + 1 < m {
            r[(j, j + 1)] = h[j + 1] / 6.0;
            r[(j + 1, j)] = h[j + 1] / 6.0;
        }
    }
    let yv = DVector::from_column_slice(y);
    let lhs = &r + alpha * q.transpose() * &q;
    let gam = lhs.lu().solve(&(q.transpose() * &yv)).expect("Reinsch system");
    let g = yv - alpha * &q * gam;
    g.iter().copied().collect()
}

/// The weighted GCV expression evaluated from dense smoother matrices.
pub fn dense_gcv(sys: &DenseSystem, y: &[f64], v: &[f64]) -> f64 {
    let n = y.len();
    let theta = sys.solve(y, v);
    let f = &sys.b * &theta;
    let fp = &sys.c * &theta;
    let r = f - DVector::from_column_slice(y);
    let rp = fp - DVector::from_column_slice(v);
    let [s, t, u, vv] = sys.smoothers();
    let eye = DMatrix::<f64>::identity(n, n);
    let c = (sys.gamma * &t).trace() / (&eye - sys.gamma * &vv).trace();
    let w1h = sys.w1.map(f64::sqrt);
    let w2h = sys.w2.map(f64::sqrt);
    let num = (r.transpose() * &sys.w1 * &r)[0]
        + 2.0 * c * (r.transpose() * &w1h * w2h.transpose() * &rp)[0]
        + c * c * (rp.transpose() * &sys.w2 * &rp)[0];
    let den = (&eye - s - c * u).trace();
    num / (den * den)
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

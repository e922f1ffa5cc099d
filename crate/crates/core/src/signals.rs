//! Simulation benchmark built on the Donoho–Johnstone test signals.
//!
//! A test signal is treated as the velocity `g(t)` of a trajectory; the
//! positions come from trapezoidal integration starting at zero. Gaussian
//! noise with standard deviation `σ/SNR` is added to both series.

use crate::error::{Result, VsplineError};
use crate::model::{FittedVSpline, ObservationSet, TimeGrid};
use crate::penalty::PenaltyFamily;
use crate::selection::{select_parameters, SearchSpec};
use crate::solver::fit;
use crate::penalty::interval_lambdas;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

const BLOCKS_POSITIONS: [f64; 11] = [
    0.1, 0.13, 0.15, 0.23, 0.25, 0.40, 0.44, 0.65, 0.76, 0.78, 0.81,
];
const BLOCKS_HEIGHTS: [f64; 11] = [4.0, -5.0, 3.0, -4.0, 5.0, -4.2, 2.1, 4.3, -3.1, 2.1, -4.2];
const BUMPS_HEIGHTS: [f64; 11] = [4.0, 5.0, 3.0, 4.0, 5.0, 4.2, 2.1, 4.3, 3.1, 5.1, 4.2];
const BUMPS_WIDTHS: [f64; 11] = [
    0.005, 0.005, 0.006, 0.01, 0.01, 0.03, 0.01, 0.01, 0.005, 0.008, 0.005,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestSignal {
    Blocks,
    Bumps,
    HeaviSine,
    Doppler,
}

impl TestSignal {
    pub const ALL: [TestSignal; 4] = [
        TestSignal::Blocks,
        TestSignal::Bumps,
        TestSignal::HeaviSine,
        TestSignal::Doppler,
    ];

    fn index(self) -> u64 {
        match self {
            TestSignal::Blocks => 0,
            TestSignal::Bumps => 1,
            TestSignal::HeaviSine => 2,
            TestSignal::Doppler => 3,
        }
    }

    /// Signal value on `[0, 1]`.
    pub fn eval(self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(VsplineError::InvalidParameter(format!(
                "test signals are defined on [0, 1], got t = {t}"
            )));
        }
        Ok(self.eval_unchecked(t))
    }

    fn eval_unchecked(self, t: f64) -> f64 {
        match self {
            TestSignal::Blocks => BLOCKS_POSITIONS
                .iter()
                .zip(BLOCKS_HEIGHTS)
                .map(|(&p, h)| h * 0.5 * (1.0 + sgn(t - p)))
                .sum(),
            TestSignal::Bumps => BLOCKS_POSITIONS
                .iter()
                .zip(BUMPS_HEIGHTS.iter().zip(BUMPS_WIDTHS))
                .map(|(&p, (&h, w))| h * (1.0 + ((t - p) / w).abs()).powi(-4))
                .sum(),
            TestSignal::HeaviSine => {
                4.0 * (4.0 * std::f64::consts::PI * t).sin() - sgn(t - 0.3) - sgn(0.72 - t)
            }
            TestSignal::Doppler => {
                (t * (1.0 - t)).sqrt() * (2.0 * std::f64::consts::PI * 1.05 / (t + 0.05)).sin()
            }
        }
    }
}

/// Sign function with `sgn(0) = 0`.
fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn eval_signal(signal: TestSignal, t: f64) -> Result<f64> {
    signal.eval(t)
}

impl fmt::Display for TestSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestSignal::Blocks => "Blocks",
            TestSignal::Bumps => "Bumps",
            TestSignal::HeaviSine => "HeaviSine",
            TestSignal::Doppler => "Doppler",
        })
    }
}

impl FromStr for TestSignal {
    type Err = VsplineError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "blocks" => Ok(TestSignal::Blocks),
            "bumps" => Ok(TestSignal::Bumps),
            "heavisine" => Ok(TestSignal::HeaviSine),
            "doppler" => Ok(TestSignal::Doppler),
            other => Err(VsplineError::InvalidParameter(format!("unknown signal '{other}'"))),
        }
    }
}

/// Which indices of the length-`n` mother simulation are kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampling {
    /// Every index.
    Full,
    /// Indices `1, 3, 5, …` (every other point, starting at the first).
    Regular,
    /// `k` indices drawn uniformly without replacement, always keeping the
    /// first and last.
    Irregular { k: usize },
}

impl fmt::Display for Sampling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampling::Full => f.write_str("full"),
            Sampling::Regular => f.write_str("regular"),
            Sampling::Irregular { k } => write!(f, "irregular:{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrajectory {
    pub signal: TestSignal,
    pub grid: TimeGrid,
    pub true_g: Vec<f64>,
    pub true_f: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub snr: f64,
    pub seed: u64,
}

impl SimulatedTrajectory {
    pub fn observations(&self) -> ObservationSet {
        ObservationSet::new(self.grid.clone(), vec![self.y.clone()], vec![self.v.clone()])
            .expect("simulated data is well formed")
    }
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Generator for one `(signal, snr, seed)` cell.
///
/// ChaCha8 seeded with `seed`, stream number derived from the signal and the
/// SNR bits so that cells never share a stream.
pub fn cell_rng(signal: TestSignal, snr: f64, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stream = (signal.index() << 60) ^ (snr.to_bits() >> 4);
    rng.set_stream(stream);
    rng
}

/// Simulate noisy positions and velocities on `n` equispaced points of
/// `[0, 1]`, then subsample. `snr = ∞` disables the noise.
pub fn simulate(
    signal: TestSignal,
    n: usize,
    snr: f64,
    seed: u64,
    sampling: Sampling,
) -> Result<SimulatedTrajectory> {
    if n < 2 {
        return Err(VsplineError::InvalidParameter(format!("need n >= 2, got {n}")));
    }
    if !(snr > 0.0) {
        return Err(VsplineError::InvalidParameter(format!("snr must be positive, got {snr}")));
    }
    if let Sampling::Irregular { k } = sampling {
        if k > n {
            return Err(VsplineError::InvalidParameter(format!(
                "cannot draw {k} indices from {n}"
            )));
        }
        if k < 2 {
            return Err(VsplineError::InvalidParameter(format!(
                "irregular sampling needs k >= 2, got {k}"
            )));
        }
    }
    let times: Vec<f64> = (0..n)
        .map(|i| if i + 1 == n { 1.0 } else { i as f64 / (n - 1) as f64 })
        .collect();
    let g: Vec<f64> = times.iter().map(|&t| signal.eval_unchecked(t)).collect();
    let mut f = vec![0.0; n];
    for i in 1..n {
        f[i] = f[i - 1] + 0.5 * (g[i - 1] + g[i]) * (times[i] - times[i - 1]);
    }

    let mut rng = cell_rng(signal, snr, seed);
    let (y, v) = if snr.is_infinite() {
        (f.clone(), g.clone())
    } else {
        let sd_f = sample_std(&f) / snr;
        let sd_g = sample_std(&g) / snr;
        let y: Vec<f64> = f
            .iter()
            .map(|x| x + sd_f * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        let v: Vec<f64> = g
            .iter()
            .map(|x| x + sd_g * Distribution::<f64>::sample(&StandardNormal, &mut rng))
            .collect();
        (y, v)
    };

    let keep: Vec<usize> = match sampling {
        Sampling::Full => (0..n).collect(),
        Sampling::Regular => (0..n).step_by(2).collect(),
        Sampling::Irregular { k } => {
            let mut idx: Vec<usize> = if n > 2 {
                sample(&mut rng, n - 2, k - 2).into_iter().map(|i| i + 1).collect()
            } else {
                Vec::new()
            };
            idx.push(0);
            idx.push(n - 1);
            idx.sort_unstable();
            idx
        }
    };
    let pick = |xs: &[f64]| keep.iter().map(|&i| xs[i]).collect::<Vec<_>>();
    Ok(SimulatedTrajectory {
        signal,
        grid: TimeGrid::new(pick(&times))?,
        true_g: pick(&g),
        true_f: pick(&f),
        y: pick(&y),
        v: pick(&v),
        snr,
        seed,
    })
}

/// `(1/n) Σ (f(t_i) - f̂(t_i))²` for the first dimension.
pub fn tmse(true_f: &[f64], fitted: &FittedVSpline) -> Result<f64> {
    if true_f.len() != fitted.grid().len() {
        return Err(VsplineError::ShapeMismatch(format!(
            "{} true values for a {}-knot fit",
            true_f.len(),
            fitted.grid().len()
        )));
    }
    let fitted_values = fitted.knot_values(0);
    Ok(true_f
        .iter()
        .zip(&fitted_values)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / true_f.len() as f64)
}

/// `σ_f̂ / σ_(f̂ - y)` for the first dimension.
pub fn retrieved_snr(fitted: &FittedVSpline, y: &[f64]) -> Result<f64> {
    if y.len() != fitted.grid().len() {
        return Err(VsplineError::ShapeMismatch(format!(
            "{} observations for a {}-knot fit",
            y.len(),
            fitted.grid().len()
        )));
    }
    let fhat = fitted.knot_values(0);
    let resid: Vec<f64> = fhat.iter().zip(y).map(|(a, b)| a - b).collect();
    let noise = sample_std(&resid);
    if !(noise > 0.0) {
        return Err(VsplineError::SnrUndefined);
    }
    Ok(sample_std(&fhat) / noise)
}

/// Reconstruction methods compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    /// Adaptive penalty, `γ` and `η` selected by CV.
    Adaptive,
    /// Adaptive penalty with `γ = 0` (positions only).
    AdaptiveGammaZero,
    /// Constant penalty, `γ` and `λ₀` selected by CV.
    NonAdaptive,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Adaptive, Method::AdaptiveGammaZero, Method::NonAdaptive];

    pub fn search(self, base: &SearchSpec) -> SearchSpec {
        let mut spec = base.clone();
        match self {
            Method::Adaptive => spec.family = PenaltyFamily::Adaptive,
            Method::AdaptiveGammaZero => {
                spec.family = PenaltyFamily::Adaptive;
                spec.gamma_grid = vec![0.0];
            }
            Method::NonAdaptive => spec.family = PenaltyFamily::Constant,
        }
        spec
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Adaptive => "adaptive",
            Method::AdaptiveGammaZero => "gamma0",
            Method::NonAdaptive => "nonadaptive",
        })
    }
}

impl FromStr for Method {
    type Err = VsplineError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "adaptive" => Ok(Method::Adaptive),
            "gamma0" | "gamma_0" | "adaptive_gamma0" => Ok(Method::AdaptiveGammaZero),
            "nonadaptive" | "non_adaptive" | "constant" => Ok(Method::NonAdaptive),
            other => Err(VsplineError::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub signals: Vec<TestSignal>,
    pub snrs: Vec<f64>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub sampling: Sampling,
    /// Grid and refinement settings; the family and `γ` grid are adjusted
    /// per method.
    pub search: SearchSpec,
}

impl BenchmarkConfig {
    pub fn new(signals: Vec<TestSignal>, snrs: Vec<f64>, methods: Vec<Method>, seeds: Vec<u64>) -> Self {
        Self {
            signals,
            snrs,
            methods,
            seeds,
            n: 1024,
            sampling: Sampling::Full,
            search: SearchSpec::with_defaults(PenaltyFamily::Adaptive),
        }
    }
}

/// One `(signal, snr, method, seed)` cell of the report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub signal: TestSignal,
    pub snr: f64,
    pub method: Method,
    pub seed: u64,
    /// Either `(tmse, retrieved_snr)` or the error that stopped this cell.
    pub outcome: std::result::Result<(f64, f64), String>,
    pub gamma: Option<f64>,
    pub params: Option<Vec<f64>>,
}

impl EvalReport {
    pub fn tmse(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|o| o.0)
    }

    pub fn retrieved_snr(&self) -> Option<f64> {
        self.outcome.as_ref().ok().map(|o| o.1)
    }
}

/// Run every cell; a failing cell is reported, not propagated.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<Vec<EvalReport>> {
    if config.signals.is_empty()
        || config.snrs.is_empty()
        || config.methods.is_empty()
        || config.seeds.is_empty()
    {
        return Err(VsplineError::InvalidParameter(
            "benchmark needs at least one signal, SNR, method and seed".into(),
        ));
    }
    let mut cells = Vec::new();
    for &signal in &config.signals {
        for &snr in &config.snrs {
            for &method in &config.methods {
                for &seed in &config.seeds {
                    cells.push((signal, snr, method, seed));
                }
            }
        }
    }
    Ok(cells
        .par_iter()
        .map(|&(signal, snr, method, seed)| {
            let mut row = EvalReport {
                signal,
                snr,
                method,
                seed,
                outcome: Err(String::new()),
                gamma: None,
                params: None,
            };
            match run_cell(config, signal, snr, method, seed) {
                Ok((tmse, rsnr, gamma, params)) => {
                    row.outcome = Ok((tmse, rsnr));
                    row.gamma = Some(gamma);
                    row.params = Some(params);
                }
                Err(e) => row.outcome = Err(e.to_string()),
            }
            row
        })
        .collect())
}

fn run_cell(
    config: &BenchmarkConfig,
    signal: TestSignal,
    snr: f64,
    method: Method,
    seed: u64,
) -> Result<(f64, f64, f64, Vec<f64>)> {
    let sim = simulate(signal, config.n, snr, seed, config.sampling)?;
    let obs = sim.observations();
    let spec = method.search(&config.search);
    let selection = select_parameters(&obs, &spec, None)?;
    let lambdas = interval_lambdas(&selection.penalty, &obs, None)?;
    let spline = fit(&obs, selection.gamma, &lambdas, None)?;
    Ok((
        tmse(&sim.true_f, &spline)?,
        retrieved_snr(&spline, &sim.y)?,
        selection.gamma,
        selection.penalty.parameters(),
    ))
}

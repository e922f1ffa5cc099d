//! Velocity-aware smoothing splines for trajectory reconstruction.
//!
//! A V-spline is fitted to paired position and velocity observations by
//! minimizing position residuals, `γ`-weighted velocity residuals and a
//! piecewise-constant acceleration penalty. The crate provides the fit,
//! exact leave-one-out cross-validation for parameter selection, a
//! simulation harness built on the Donoho–Johnstone test signals, and a GPS
//! ingestion pipeline for planar vehicle tracks.

// Index loops mirror the matrix algebra; `!(x > 0.0)` style checks are
// meant to reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod basis;
pub mod error;
pub mod geo;
pub mod io;
pub mod model;
pub mod optim;
pub mod penalty;
pub mod selection;
pub mod signals;
pub mod solver;

pub use basis::{eval_hermite_basis, BasisId, HermiteKind};
pub use error::{Result, VsplineError};
pub use geo::{
    parse_track, project, reconstruct_track, unproject, ColumnMap, DedupePolicy, GpsRecord,
    ParseOptions, PlanarTrack, Reference, TrackReconstruction,
};
pub use model::{FittedVSpline, ObservationSet, SampleRow, TimeGrid};
pub use penalty::{
    assemble_omega, discrepancy, interval_lambdas, Discrepancy, IntervalPenalties, PenaltyFamily,
    PenaltyMatrix, PenaltySpec,
};
pub use selection::{
    cv_oracle, cv_score, gcv_score, log_grid, select_parameters, CvScore, SearchSpec, Selection,
    TraceRow,
};
pub use signals::{
    eval_signal, retrieved_snr, run_benchmark, simulate, tmse, BenchmarkConfig, EvalReport, Method,
    Sampling, SimulatedTrajectory, TestSignal,
};
pub use solver::{
    fit, objective_terms, objective_value, second_derivative_jumps, smoother_diagonals,
    ObjectiveTerms, PrecisionPair, SmootherDiagonals, SystemMatrix,
};

/// Value or derivative of a fitted spline at `t`, one entry per dimension.
pub fn eval_spline(spline: &FittedVSpline, t: f64, derivative_order: u8) -> Result<Vec<f64>> {
    spline.eval(t, derivative_order)
}

/// Uniform `(t, f, f', f'')` samples over the knot range.
pub fn sample_spline(spline: &FittedVSpline, resolution: usize) -> Result<Vec<SampleRow>> {
    spline.sample(resolution)
}

use proptest::prelude::*;
use vspline::geo::bearing_of;
use vspline::io::{parse_observations, spline_from_json, spline_to_json};
use vspline::{
    assemble_omega, cv_score, fit, interval_lambdas, parse_track, simulate, smoother_diagonals, tmse,
    FittedVSpline, GpsRecord, IntervalPenalties, ObservationSet, ParseOptions, PenaltySpec, Sampling,
    TestSignal, TimeGrid,
};

fn times(n: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<f64>> {
    (-50.0..50.0f64, prop::collection::vec(0.05..3.0f64, n)).prop_map(|(start, gaps)| {
        let mut t = start;
        let mut out = vec![t];
        for g in gaps {
            t += g;
            out.push(t);
        }
        out
    })
}

/// 1-D observations with `2..=max` points.
fn observations(max: usize) -> impl Strategy<Value = ObservationSet> {
    times(1..max).prop_flat_map(|t| {
        let n = t.len();
        (
            Just(t),
            prop::collection::vec(-5.0..5.0f64, n),
            prop::collection::vec(-5.0..5.0f64, n),
        )
            .prop_map(|(t, y, v)| ObservationSet::one_dimensional(t, y, v).unwrap())
    })
}

fn penalties(intervals: usize) -> impl Strategy<Value = IntervalPenalties> {
    prop::collection::vec(1e-3..10.0f64, intervals).prop_map(|l| IntervalPenalties::new(l).unwrap())
}

fn obs_and_penalties(max: usize) -> impl Strategy<Value = (ObservationSet, IntervalPenalties)> {
    observations(max).prop_flat_map(|obs| {
        let m = obs.len() - 1;
        (Just(obs), penalties(m))
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knots_interpolate_coefficients(obs in observations(20), seed in any::<u64>()) {
        let n = obs.len();
        let theta: Vec<f64> = (0..2 * n).map(|k| ((seed.wrapping_add(k as u64) % 1000) as f64 - 500.0) / 97.0).collect();
        let spline = FittedVSpline::new(obs.grid().clone(), vec![theta.clone()], 1.0, vec![1.0; n - 1]).unwrap();
        for (i, &t) in obs.grid().times().iter().enumerate() {
            prop_assert_eq!(spline.eval(t, 0).unwrap()[0], theta[2 * i]);
            prop_assert_eq!(spline.eval(t, 1).unwrap()[0], theta[2 * i + 1]);
        }
    }

    #[test]
    fn lines_are_reproduced_everywhere(t in times(1..15), c in -10.0..10.0f64, m in -3.0..3.0f64, s in 0.0..1.0f64) {
        let theta: Vec<f64> = t.iter().flat_map(|&ti| [c + m * ti, m]).collect();
        let (lo, hi) = (t[0], *t.last().unwrap());
        let spline = FittedVSpline::new(TimeGrid::new(t.clone()).unwrap(), vec![theta], 0.0, vec![1.0; t.len() - 1]).unwrap();
        let x = lo + s * (hi - lo);
        let scale = c.abs() + m.abs() * x.abs().max(1.0);
        prop_assert!((spline.eval(x, 0).unwrap()[0] - (c + m * x)).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn penalty_is_symmetric_psd_and_ignores_lines((obs, pen) in obs_and_penalties(15), probe in prop::collection::vec(-1.0..1.0f64, 32), c in -5.0..5.0f64, m in -5.0..5.0f64) {
        let omega = assemble_omega(obs.grid(), &pen).unwrap();
        let size = omega.size();
        for i in 0..size {
            for j in 0..size {
                prop_assert_eq!(omega.get(i, j), omega.get(j, i));
            }
        }
        let theta: Vec<f64> = probe.iter().cycle().take(size).copied().collect();
        prop_assert!(omega.quad_form(&theta) >= -1e-9 * theta.iter().map(|x| x * x).sum::<f64>());
        let line: Vec<f64> = obs.grid().times().iter().flat_map(|&t| [c + m * t, m]).collect();
        let scale: f64 = omega.to_dense().iter().flatten().map(|x| x.abs()).fold(0.0, f64::max);
        prop_assert!(omega.quad_form(&line).abs() <= 1e-9 * scale * (1.0 + c.abs() + m.abs() * 200.0).powi(2));
    }

    #[test]
    fn adaptive_penalties_are_positive(obs in observations(25), eta in 1e-6..1e3f64) {
        let pen = interval_lambdas(&PenaltySpec::Adaptive { eta }, &obs, None).unwrap();
        prop_assert_eq!(pen.len(), obs.len() - 1);
        prop_assert!(pen.as_slice().iter().all(|l| l.is_finite() && *l > 0.0));
    }

    #[test]
    fn smoother_diagonals_are_bounded((obs, pen) in obs_and_penalties(20), gamma in 0.01..100.0f64) {
        let d = smoother_diagonals(&obs, gamma, &pen, None).unwrap();
        for i in 0..obs.len() {
            prop_assert_eq!(d.t[i], d.u[i]);
            prop_assert!(d.s[i] >= -1e-12 && d.s[i] <= 1.0 + 1e-12);
            prop_assert!(d.v[i] >= -1e-12);
        }
    }

    #[test]
    fn line_data_is_fitted_exactly(t in times(1..20), c in -5.0..5.0f64, m in -2.0..2.0f64, gamma in 0.0..10.0f64, lambda in 1e-4..10.0f64) {
        let n = t.len();
        let y: Vec<f64> = t.iter().map(|x| c + m * x).collect();
        let obs = ObservationSet::one_dimensional(t, y.clone(), vec![m; n]).unwrap();
        let spline = fit(&obs, gamma, &IntervalPenalties::constant(n - 1, lambda).unwrap(), None).unwrap();
        for (a, b) in spline.knot_values(0).iter().zip(&y) {
            prop_assert!(close(*a, *b, 1e-8));
        }
    }

    #[test]
    fn two_dimensional_fit_is_exactly_separable((a, pen) in obs_and_penalties(20), shift in prop::collection::vec(-1.0..1.0f64, 21), gamma in 0.0..10.0f64) {
        let n = a.len();
        let y2: Vec<f64> = a.positions(0).iter().zip(&shift).map(|(y, s)| y * s).collect();
        let v2: Vec<f64> = a.velocities(0).iter().zip(&shift).map(|(v, s)| v - s).collect();
        let joint = ObservationSet::new(
            a.grid().clone(),
            vec![a.positions(0).to_vec(), y2[..n].to_vec()],
            vec![a.velocities(0).to_vec(), v2[..n].to_vec()],
        ).unwrap();
        let both = fit(&joint, gamma, &pen, None).unwrap();
        for d in 0..2 {
            let single = fit(&joint.dimension(d), gamma, &pen, None).unwrap();
            prop_assert_eq!(single.theta(0), both.theta(d));
        }
    }

    #[test]
    fn cv_scales_quadratically((obs, pen) in obs_and_penalties(20), alpha in 0.1..10.0f64, gamma in 0.1..10.0f64) {
        prop_assume!(obs.len() >= 4);
        let Ok(base) = cv_score(&obs, gamma, &pen) else { return Ok(()) };
        let scaled = ObservationSet::one_dimensional(
            obs.grid().times().to_vec(),
            obs.positions(0).iter().map(|y| alpha * y).collect(),
            obs.velocities(0).iter().map(|v| alpha * v).collect(),
        ).unwrap();
        let other = cv_score(&scaled, gamma, &pen).unwrap();
        prop_assert!(close(other.value, alpha * alpha * base.value, 1e-9));
    }

    #[test]
    fn spline_json_round_trips((obs, pen) in obs_and_penalties(12), gamma in 0.0..10.0f64) {
        let spline = fit(&obs, gamma, &pen, None).unwrap();
        prop_assert_eq!(spline_from_json(&spline_to_json(&spline)).unwrap(), spline);
    }

    #[test]
    fn bearing_round_trips(speed in 0.01..50.0f64, bearing in 0.0..360.0f64) {
        let rec = GpsRecord { timestamp: 0.0, lon: 0.0, lat: 0.0, speed, bearing, boom: None };
        let (vx, vy) = rec.velocity();
        let back = bearing_of(vx, vy);
        let diff = (back - bearing).rem_euclid(360.0);
        prop_assert!(diff.min(360.0 - diff) <= 1e-9);
    }

    #[test]
    fn parsers_reject_without_panicking(text in "[ -~\n]{0,200}") {
        let _ = parse_track(&text, &ParseOptions::default());
        let _ = parse_observations(&text);
        let _ = spline_from_json(&text);
        let _ = PenaltySpec::from_json(&text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn simulation_is_deterministic_and_tmse_nonnegative(seed in any::<u64>(), snr in 1.0..20.0f64, which in 0usize..4) {
        let signal = TestSignal::ALL[which];
        let a = simulate(signal, 128, snr, seed, Sampling::Full).unwrap();
        let b = simulate(signal, 128, snr, seed, Sampling::Full).unwrap();
        prop_assert_eq!(&a.y, &b.y);
        prop_assert_eq!(&a.v, &b.v);
        prop_assert_eq!(a.true_f[0], 0.0);
        let obs = a.observations();
        let spline = fit(&obs, 1.0, &IntervalPenalties::constant(127, 1e-3).unwrap(), None).unwrap();
        prop_assert!(tmse(&a.true_f, &spline).unwrap() >= 0.0);
    }
}

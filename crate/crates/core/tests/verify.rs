use mrst_core::diffusion::Preset;
use mrst_core::presets::{lookup, suite, SuiteRate};
use mrst_core::verify::interior_grid;
use mrst_core::{
    compare_problems, compare_routes, rate_from_measure, regularity_probe, solve_analytic, solve_fd, CompareOptions,
    Convention, DiffusionSpec, Error, InterfaceRule, Interval, McConfig, MeasureSpec, PiecewiseFunction,
    PiecewiseRate, RewardProblem, Verdict,
};

#[test]
fn identity_payoff_passes_with_exact_ode_values() {
    let rate = PiecewiseRate::steps(vec![0.0, 0.5, 1.0], &[1.0, 4.0]).unwrap();
    let spec = DiffusionSpec::from_preset(&Preset::Bm).unwrap();
    let iv = Interval::new(&spec, 0.0, 1.0).unwrap();
    let p = RewardProblem::with_rate(spec, iv, PiecewiseFunction::identity(), 0.0, rate).unwrap();
    let grid = interior_grid(0.0, 1.0, 9);
    let rep = compare_routes(&p, &grid, &McConfig::new(20_000, 3), &CompareOptions::default()).unwrap();
    assert_eq!(rep.verdict, Verdict::Pass, "{rep:?}");
    for row in &rep.rows {
        assert!((row.j_ode - row.x).abs() < 1e-9);
        assert!((row.j_analytic.unwrap() - row.x).abs() < 1e-12);
    }
}

#[test]
fn continuous_rate_has_no_derivative_mismatch() {
    // A single piece has no breakpoints; add a spurious one to probe.
    let rate = PiecewiseRate::steps(vec![0.0, 0.37, 1.0], &[2.0, 2.0]).unwrap();
    let spec = DiffusionSpec::from_preset(&Preset::Bm).unwrap();
    let iv = Interval::new(&spec, 0.0, 1.0).unwrap();
    let p = RewardProblem::with_rate(spec, iv, PiecewiseFunction::constant(1.0), 1.0, rate).unwrap();
    let probe = regularity_probe(&solve_analytic(&p).unwrap(), &p);
    assert!(probe.pass);
    let bp = &probe.breakpoints[0];
    // The raw rows carry stencil truncation error; the limit does not.
    assert!(bp.extrapolated_mismatch.abs() < 1e-10, "{bp:?}");
    assert_eq!(bp.second_derivative.predicted, 0.0);
}

#[test]
fn mismatch_vanishes_at_second_order() {
    for sp in suite().into_iter().filter(|s| s.rate != SuiteRate::N1) {
        let p = sp.build::<f64>().unwrap();
        let sols = if mrst_core::bvp::analytic_applicable(&p) {
            vec![solve_fd(&p, 1e-4 * p.iv.width()).unwrap(), solve_analytic(&p).unwrap()]
        } else {
            vec![solve_fd(&p, 1e-4 * p.iv.width()).unwrap()]
        };
        for sol in sols {
            let probe = regularity_probe(&sol, &p);
            assert!(probe.pass, "{}: {probe:?}", sp.name());
            for bp in &probe.breakpoints {
                assert!(bp.extrapolated_mismatch.abs() <= 1e-6);
                for o in bp.orders.iter().flatten() {
                    assert!(*o >= 1.8 && *o < 2.5, "{}: order {o}", sp.name());
                }
                assert!((bp.second_derivative.measured - bp.second_derivative.predicted).abs() <= 1e-4);
            }
        }
    }
}

#[test]
fn zero_derivative_gluing_is_detected() {
    let sp = lookup("bm-n2-one").unwrap();
    let p = sp.build::<f64>().unwrap();
    let opts = CompareOptions {
        rule: InterfaceRule::ZeroDerivative,
        ..CompareOptions::default()
    };
    let rep = compare_routes(&p, &sp.grid::<f64>(), &McConfig::new(100_000, 0), &opts).unwrap();
    assert_eq!(rep.verdict, Verdict::Fail);
    assert!(rep.max_abs_z > 3.0, "{}", rep.max_abs_z);
    assert!(!rep.regularity.pass);
}

fn gbm_measure_problem(convention: Convention) -> RewardProblem {
    let spec = DiffusionSpec::from_preset(&Preset::Gbm { mu: 0.2, sigma: 1.0 }).unwrap();
    let iv = Interval::new(&spec, 0.5, 2.0).unwrap();
    let m = MeasureSpec::new(vec![(0.5, 2.0)], PiecewiseFunction::constant(2.0), vec![]).unwrap();
    let psi = rate_from_measure(&m, &spec, convention, 0.0).unwrap();
    RewardProblem::new(spec, iv, PiecewiseFunction::constant(1.0), 0.5, psi).unwrap()
}

#[test]
fn mismatched_conventions_fail() {
    let sig = gbm_measure_problem(Convention::PaperSigma);
    let semi = gbm_measure_problem(Convention::SemimartingaleSigma2);
    let grid = interior_grid(0.5, 2.0, 5);
    let mc = McConfig::new(50_000, 12);
    let opts = CompareOptions {
        mesh: 1e-4 * 1.5,
        ..CompareOptions::default()
    };
    let wrong = compare_problems(&semi, &sig, &grid, &mc, &opts).unwrap();
    assert_eq!(wrong.verdict, Verdict::Fail);
    assert!(wrong.max_abs_z > 3.0, "{}", wrong.max_abs_z);
    let right = compare_problems(&sig, &sig, &grid, &mc, &opts).unwrap();
    assert_eq!(right.verdict, Verdict::Pass, "{}", right.max_abs_z);
}

#[test]
fn verdicts_are_reproducible() {
    let sp = lookup("drifted-n2-call").unwrap();
    let p = sp.build::<f64>().unwrap();
    let mc = McConfig::new(10_000, 5);
    let a = compare_routes(&p, &sp.grid::<f64>(), &mc, &CompareOptions::default()).unwrap();
    let b = compare_routes(&p, &sp.grid::<f64>(), &mc, &CompareOptions::default()).unwrap();
    assert_eq!(a.verdict, b.verdict);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!(x.z.to_bits(), y.z.to_bits());
    }
}

#[test]
fn grid_must_lie_inside() {
    let p = lookup("bm-n1-one").unwrap().build::<f64>().unwrap();
    let mc = McConfig::new(100, 0);
    for grid in [vec![], vec![0.5, 1.0]] {
        let err = compare_routes(&p, &grid, &mc, &CompareOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_) | Error::Domain(_)));
    }
}

/// The full suite at the default path count; about twenty minutes on one core.
#[test]
#[ignore]
fn every_preset_passes_at_default_paths() {
    let mut failed = Vec::new();
    for sp in suite() {
        let p = sp.build::<f64>().unwrap();
        let opts = CompareOptions {
            mesh: 1e-4 * p.iv.width(),
            ..CompareOptions::default()
        };
        let rep = compare_routes(&p, &sp.grid::<f64>(), &McConfig::new(1_000_000, 0), &opts).unwrap();
        println!("{} max|z| = {:.2}", sp.name(), rep.max_abs_z);
        if rep.verdict != Verdict::Pass {
            failed.push(sp.name());
        }
    }
    assert!(failed.is_empty(), "{failed:?}");
}

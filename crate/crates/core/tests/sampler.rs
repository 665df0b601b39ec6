use mrst_core::diffusion::Preset;
use mrst_core::presets::lookup;
use mrst_core::rate::integrate_rate_along_path;
use mrst_core::sampler::{path_rng, sample_stopping, simulate_path_capped};
use mrst_core::{
    estimate_direct, estimate_rao_blackwell, simulate_path, solve_analytic, solve_fd, ClockIntegrand, DiffusionSpec,
    Error, ExitKind, Interval, McConfig, McEstimate, Path, Piece, PiecewiseFunction, PiecewiseRate, RewardProblem,
};

fn problem(preset: Preset<f64>, a: f64, b: f64, g: PiecewiseFunction, r: f64, rate: PiecewiseRate) -> RewardProblem {
    let spec = DiffusionSpec::from_preset(&preset).unwrap();
    let iv = Interval::new(&spec, a, b).unwrap();
    RewardProblem::with_rate(spec, iv, g, r, rate).unwrap()
}

fn bm(g: PiecewiseFunction, r: f64, rate: PiecewiseRate) -> RewardProblem {
    problem(Preset::Bm, 0.0, 1.0, g, r, rate)
}

fn halves() -> PiecewiseRate {
    PiecewiseRate::steps(vec![0.0, 0.5, 1.0], &[1.0, 4.0]).unwrap()
}

fn no_rate() -> PiecewiseRate {
    PiecewiseRate::zero(0.0, 1.0).unwrap()
}

fn within(est: &McEstimate, target: f64, k: f64) -> bool {
    (est.mean - target).abs() <= k * est.std_error
}

fn exit_high_frequency(p: &RewardProblem, n: usize) -> (f64, f64) {
    let hits = (0..n as u64)
        .filter(|&i| {
            let path = simulate_path(p, 0.5, 1e-3, &mut path_rng(7, i, 0)).unwrap();
            path.exit == ExitKind::ExitedHigh
        })
        .count();
    let q = hits as f64 / n as f64;
    (q, (q * (1.0 - q) / n as f64).sqrt())
}

#[test]
fn symmetric_exit_frequency() {
    let p = bm(PiecewiseFunction::constant(1.0), 0.0, no_rate());
    let (q, se) = exit_high_frequency(&p, 100_000);
    assert!((q - 0.5).abs() <= 4.0 * se, "{q} ± {se}");
}

#[test]
fn drifted_exit_frequency_matches_scale_ratio() {
    let p = problem(
        Preset::DriftedBm { mu: 1.0, sigma: 1.0 },
        0.0,
        1.0,
        PiecewiseFunction::constant(1.0),
        0.0,
        no_rate(),
    );
    let oracle = mrst_core::hit_probability(&p.spec, &p.iv, 0.5).unwrap();
    assert!((oracle - 0.731059).abs() < 1e-6);
    let (q, se) = exit_high_frequency(&p, 100_000);
    assert!((q - oracle).abs() <= 4.0 * se, "{q} ± {se} vs {oracle}");
}

#[test]
fn recorded_paths_are_well_formed() {
    let p = lookup("gbm-n3-call").unwrap().build::<f64>().unwrap();
    for i in 0..200 {
        let path = simulate_path(&p, 1.2, 2e-3, &mut path_rng(3, i, 0)).unwrap();
        assert!(path.times.windows(2).all(|w| w[1] > w[0]));
        let last = *path.times.last().unwrap();
        assert!(path.exit_time >= last - 2e-3 && path.exit_time <= last);
        let interior = &path.states[..path.states.len() - 1];
        assert!(interior.iter().all(|&x| x > 0.5 && x < 2.0));
        match path.exit {
            ExitKind::ExitedLow => assert_eq!(path.exit_state, 0.5),
            ExitKind::ExitedHigh => assert_eq!(path.exit_state, 2.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[test]
fn step_cap_censors_paths() {
    let p = bm(PiecewiseFunction::constant(1.0), 0.0, halves());
    let path = simulate_path_capped(&p, 0.5, 1e-6, &mut path_rng(0, 0, 0), 10).unwrap();
    assert_eq!(path.exit, ExitKind::Censored);
    let mut cfg = McConfig::new(500, 1).with_step(1e-6);
    cfg.max_steps = 10;
    let est = estimate_rao_blackwell(&p, 0.5, &cfg).unwrap();
    assert_eq!(est.n_censored, 500);
    assert!(!est.reliable);
}

#[test]
fn invalid_starts_and_steps_are_rejected() {
    let p = bm(PiecewiseFunction::constant(1.0), 0.0, halves());
    let cfg = McConfig::new(10, 0);
    assert!(matches!(estimate_rao_blackwell(&p, 0.0, &cfg), Err(Error::Domain(_))));
    assert!(matches!(estimate_direct(&p, 1.5, &cfg), Err(Error::Domain(_))));
    let bad = McConfig::new(10, 0).with_step(0.0);
    assert!(matches!(estimate_direct(&p, 0.5, &bad), Err(Error::InvalidInput(_))));
}

fn flat_path() -> Path {
    Path {
        times: vec![0.0, 0.01, 0.02],
        states: vec![0.5, 0.5, 0.6],
        exit: ExitKind::ExitedHigh,
        exit_time: 0.02,
        exit_state: 0.6,
    }
}

#[test]
fn silent_clock_returns_the_exit() {
    let p = bm(PiecewiseFunction::constant(1.0), 0.0, no_rate());
    let (t, x, kind) = sample_stopping(&p, &flat_path(), 1e-9);
    assert_eq!((t, x, kind), (0.02, 0.6, ExitKind::ExitedHigh));
}

#[test]
fn constant_rate_inverts_the_clock() {
    let rate = PiecewiseRate::constant(0.0, 1.0, 2.0).unwrap();
    let p = bm(PiecewiseFunction::constant(1.0), 0.0, rate);
    let (t, x, kind) = sample_stopping(&p, &flat_path(), 0.01);
    assert_eq!(kind, ExitKind::ClockFired);
    assert!((t - 0.005).abs() < 1e-15 && x == 0.5);
}

#[test]
fn clock_rings_as_often_as_the_weights_predict() {
    let p = bm(PiecewiseFunction::constant(1.0), 0.0, halves());
    let psi = ClockIntegrand::from_rate(halves());
    let n = 20_000u64;
    let (mut fired, mut weight, mut diff2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let path = simulate_path(&p, 0.5, 1e-3, &mut path_rng(11, i, 0)).unwrap();
        let phi = *integrate_rate_along_path(&psi, &path).last().unwrap();
        let e: f64 = rand_distr::Distribution::sample(&rand_distr::Exp1, &mut path_rng(11, i, 1));
        let rang = (sample_stopping(&p, &path, e).2 == ExitKind::ClockFired) as u8 as f64;
        let w = 1.0 - (-phi).exp();
        fired += rang;
        weight += w;
        diff2 += (rang - w).powi(2);
    }
    let n = n as f64;
    let se = (diff2 / n - ((fired - weight) / n).powi(2)).sqrt() / n.sqrt();
    assert!(((fired - weight) / n).abs() <= 4.0 * se, "{} vs {} (se {se})", fired / n, weight / n);
}

#[test]
fn unit_payoff_telescopes_to_one() {
    let p = bm(PiecewiseFunction::constant(1.0), 0.0, halves());
    let est = estimate_rao_blackwell(&p, 0.37, &McConfig::new(2_000, 5)).unwrap();
    assert!((est.mean - 1.0).abs() < 1e-12, "{}", est.mean);
    assert!(est.std_error < 1e-12);
    let direct = estimate_direct(&p, 0.37, &McConfig::new(2_000, 5)).unwrap();
    assert_eq!(direct.mean, 1.0);
}

#[test]
fn identity_payoff_is_a_martingale() {
    let rate = PiecewiseRate::steps(vec![0.0, 0.2, 0.7, 1.0], &[3.0, 0.5, 2.0]).unwrap();
    let p = bm(PiecewiseFunction::identity(), 0.0, rate);
    let cfg = McConfig::new(100_000, 9);
    assert!(within(&estimate_rao_blackwell(&p, 0.3, &cfg).unwrap(), 0.3, 4.0));
    assert!(within(&estimate_direct(&p, 0.3, &cfg).unwrap(), 0.3, 4.0));
}

#[test]
fn discounted_exit_matches_cosh() {
    let p = bm(PiecewiseFunction::constant(1.0), 1.0, no_rate());
    let oracle = (2f64.sqrt() / 2.0).cosh().recip();
    let cfg = McConfig::new(100_000, 2);
    let rb = estimate_rao_blackwell(&p, 0.5, &cfg).unwrap();
    let direct = estimate_direct(&p, 0.5, &cfg).unwrap();
    assert!(within(&rb, oracle, 4.0), "{rb:?}");
    assert!((rb.mean - direct.mean).abs() <= 1e-12 + 4.0 * rb.std_error);
}

#[test]
fn rao_blackwell_agrees_with_the_solver() {
    let p = bm(PiecewiseFunction::constant(1.0), 1.0, halves());
    let j = solve_analytic(&p).unwrap().value(0.5);
    let est = estimate_rao_blackwell(&p, 0.5, &McConfig::new(1_000_000, 4)).unwrap();
    assert!(within(&est, j, 3.0), "{} vs {j} (se {})", est.mean, est.std_error);
}

#[test]
fn estimators_agree_and_rao_blackwell_is_tighter() {
    for name in ["bm-n2-one", "drifted-n3-call", "gbm-n2-x"] {
        let sp = lookup(name).unwrap();
        let p = sp.build::<f64>().unwrap();
        let cfg = McConfig::new(20_000, 21);
        for x in sp.grid::<f64>() {
            let rb = estimate_rao_blackwell(&p, x, &cfg).unwrap();
            let d = estimate_direct(&p, x, &cfg).unwrap();
            let se = rb.std_error.hypot(d.std_error);
            assert!((rb.mean - d.mean).abs() <= 4.0 * se, "{name} at {x}");
            assert!(rb.std_error <= 1.01 * d.std_error, "{name} at {x}");
        }
    }
}

#[test]
fn halving_the_step_moves_the_estimate_by_first_order() {
    // Largest observed |bias|/h over the suite is about 0.16.
    const C: f64 = 0.25;
    for name in ["bm-n2-one", "drifted-n3-x", "gbm-n2-call"] {
        let p = lookup(name).unwrap().build::<f64>().unwrap();
        let x = p.iv.midpoint();
        for h in [1e-2, 5e-3] {
            let coarse = estimate_rao_blackwell(&p, x, &McConfig::new(50_000, 8).with_step(h)).unwrap();
            let fine = estimate_rao_blackwell(&p, x, &McConfig::new(50_000, 8).with_step(h / 2.0)).unwrap();
            let change = (coarse.mean - fine.mean).abs();
            let se = coarse.std_error.hypot(fine.std_error);
            assert!(change <= (4.0 * se).max(C * h), "{name} h={h}: {change:e}");
        }
    }
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let p = lookup("gbm-n3-call").unwrap().build::<f64>().unwrap();
    let cfg = McConfig::new(5_000, 77);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            (
                estimate_rao_blackwell(&p, 1.1, &cfg).unwrap(),
                estimate_direct(&p, 1.1, &cfg).unwrap(),
            )
        })
    };
    let (rb1, d1) = run(1);
    for threads in [2, 4, 8] {
        let (rb, d) = run(threads);
        assert_eq!(rb.mean.to_bits(), rb1.mean.to_bits());
        assert_eq!(rb.std_error.to_bits(), rb1.std_error.to_bits());
        assert_eq!(d.mean.to_bits(), d1.mean.to_bits());
    }
}

#[test]
fn seeds_change_the_sample() {
    let p = lookup("bm-n2-call").unwrap().build::<f64>().unwrap();
    let a = estimate_rao_blackwell(&p, 0.5, &McConfig::new(2_000, 1)).unwrap();
    let b = estimate_rao_blackwell(&p, 0.5, &McConfig::new(2_000, 2)).unwrap();
    assert_ne!(a.mean, b.mean);
}

#[test]
fn exit_payoff_is_read_from_inside() {
    // The payoff jumps at both ends; exits must see the inner values.
    let g = PiecewiseFunction::new(
        vec![-1.0, 0.0, 1.0, 2.0],
        vec![Piece::Const(9.0), Piece::Const(1.0), Piece::Const(9.0)],
    )
    .unwrap();
    let p = bm(g, 0.0, no_rate());
    let est = estimate_direct(&p, 0.5, &McConfig::new(1_000, 0)).unwrap();
    assert_eq!(est.mean, 1.0);
}

#[test]
fn single_precision_estimates() {
    let sp = lookup("drifted-n2-one").unwrap();
    let p32 = sp.build::<f32>().unwrap();
    let p64 = sp.build::<f64>().unwrap();
    let j = solve_fd(&p64, 1e-4).unwrap().value(0.5);
    let est = estimate_rao_blackwell(&p32, 0.5f32, &McConfig::new(20_000, 3)).unwrap();
    assert!(((est.mean as f64) - j).abs() <= 4.0 * est.std_error as f64 + 1e-4, "{est:?} vs {j}");
}

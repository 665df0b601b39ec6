//! Cross-validation of the differential and probabilistic routes, and
//! regularity probes at breakpoints.

use serde::Serialize;

use crate::bvp::{
    analytic_applicable, residual_report, second_derivative_jump, solve_analytic, solve_fd_with_rule,
    InterfaceRule, PiecewiseSolution, ResidualReport, SecondDerivativeJump,
};
use crate::error::{Error, Result};
use crate::problem::RewardProblem;
use crate::real::{Real, Side};
use crate::sampler::{estimate_rao_blackwell, McConfig};

/// Offsets of the derivative probe, as fractions of `b − a`.
pub const PROBE_OFFSETS: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const PROBE_MISMATCH_TOL: f64 = 1e-6;
pub const PROBE_MIN_ORDER: f64 = 1.8;
pub const JUMP_TOL: f64 = 1e-4;
pub const DEFAULT_Z_THRESHOLD: f64 = 3.0;
/// Relative floor on the Monte Carlo standard error used in z-scores.
pub const SE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct ProbeRow<T> {
    pub delta: T,
    /// Backward three-point estimate of `J'(x−)`.
    pub left: T,
    /// Forward three-point estimate of `J'(x+)`.
    pub right: T,
    pub mismatch: T,
    /// `|J(x + δ) − J(x − δ)|`.
    pub continuity_modulus: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct BreakpointProbe<T> {
    pub x: T,
    pub value_jump: T,
    pub rows: Vec<ProbeRow<T>>,
    /// Empirical order between consecutive offsets; `None` when either
    /// mismatch is below the noise floor.
    pub orders: Vec<Option<T>>,
    pub extrapolated_mismatch: T,
    pub second_derivative: SecondDerivativeJump<T>,
    pub derivative_ok: bool,
    pub jump_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeTolerances<T> {
    pub mismatch: T,
    pub min_order: T,
    pub jump: T,
    pub noise_floor: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityProbe<T> {
    pub breakpoints: Vec<BreakpointProbe<T>>,
    pub tolerances: ProbeTolerances<T>,
    pub pass: bool,
}

fn noise_floor<T: Real>() -> T {
    T::epsilon().sqrt() * T::lit(0.1)
}

/// One-sided derivative probe at every interior breakpoint of `sol`.
/// Offsets whose stencil would reach another breakpoint are skipped.
pub fn regularity_probe<T: Real>(sol: &PiecewiseSolution<T>, problem: &RewardProblem<T>) -> RegularityProbe<T> {
    let width = problem.iv.width();
    let floor = noise_floor::<T>();
    let tol = ProbeTolerances {
        mismatch: T::lit(PROBE_MISMATCH_TOL),
        min_order: T::lit(PROBE_MIN_ORDER),
        jump: T::lit(JUMP_TOL),
        noise_floor: floor,
    };
    let bps = &sol.breakpoints;
    let (two, three, four) = (T::lit(2.0), T::lit(3.0), T::lit(4.0));
    let mut probes = Vec::new();
    for i in 1..bps.len() - 1 {
        let x = bps[i];
        let room = (x - bps[i - 1]).min(bps[i + 1] - x);
        let rows: Vec<ProbeRow<T>> = PROBE_OFFSETS
            .iter()
            .map(|f| T::lit(*f) * width)
            .filter(|d| two * *d <= room)
            .map(|d| {
                let j0l = sol.value_side(x, Side::Left);
                let j0r = sol.value_side(x, Side::Right);
                let right = (-three * j0r + four * sol.value(x + d) - sol.value(x + two * d)) / (two * d);
                let left = (three * j0l - four * sol.value(x - d) + sol.value(x - two * d)) / (two * d);
                ProbeRow {
                    delta: d,
                    left,
                    right,
                    mismatch: right - left,
                    continuity_modulus: (sol.value(x + d) - sol.value(x - d)).abs(),
                }
            })
            .collect();
        let orders: Vec<Option<T>> = rows
            .windows(2)
            .map(|w| {
                let (m0, m1) = (w[0].mismatch.abs(), w[1].mismatch.abs());
                if m0 > floor && m1 > floor {
                    Some((m0 / m1).ln() / (w[0].delta / w[1].delta).ln())
                } else {
                    None
                }
            })
            .collect();
        let extrapolated = match rows.len() {
            0 => T::zero(),
            1 => rows[0].mismatch,
            n => {
                let (prev, last) = (&rows[n - 2], &rows[n - 1]);
                if last.mismatch.abs() > floor {
                    let ratio = prev.delta / last.delta;
                    last.mismatch + (last.mismatch - prev.mismatch) / (ratio * ratio - T::one())
                } else {
                    last.mismatch
                }
            }
        };
        let jump = second_derivative_jump(sol, problem, i).expect("interior index");
        let jump_ok = (jump.measured - jump.predicted).abs() <= tol.jump;
        let derivative_ok = !rows.is_empty()
            && extrapolated.abs() <= tol.mismatch
            && orders.iter().flatten().all(|p| *p >= tol.min_order);
        probes.push(BreakpointProbe {
            x,
            value_jump: (sol.value_side(x, Side::Right) - sol.value_side(x, Side::Left)).abs(),
            rows,
            orders,
            extrapolated_mismatch: extrapolated,
            second_derivative: jump,
            derivative_ok,
            jump_ok,
        });
    }
    let pass = probes.iter().all(|p| p.derivative_ok && p.jump_ok);
    RegularityProbe {
        breakpoints: probes,
        tolerances: tol,
        pass,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CompareOptions<T> {
    pub mesh: T,
    pub rule: InterfaceRule,
    pub z_threshold: T,
}

impl<T: Real> Default for CompareOptions<T> {
    fn default() -> Self {
        Self {
            mesh: T::lit(1e-4),
            rule: InterfaceRule::SmoothFit,
            z_threshold: T::lit(DEFAULT_Z_THRESHOLD),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow<T> {
    pub x: T,
    pub j_ode: T,
    pub j_analytic: Option<T>,
    pub j_mc: T,
    pub se_mc: T,
    pub z: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct McSettings<T> {
    pub n_paths: usize,
    pub h: T,
    pub seed: u64,
    pub estimator: &'static str,
    pub censored: usize,
    pub reliable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport<T> {
    pub rows: Vec<ComparisonRow<T>>,
    pub max_abs_z: T,
    pub regularity: RegularityProbe<T>,
    pub residual: ResidualReport<T>,
    pub options: CompareOptions<T>,
    pub se_floor: T,
    pub monte_carlo: McSettings<T>,
    pub z_ok: bool,
    pub verdict: Verdict,
}

/// Runs both routes on `problem` over `grid`.
pub fn compare_routes<T: Real>(
    problem: &RewardProblem<T>,
    grid: &[T],
    mc: &McConfig<T>,
    opts: &CompareOptions<T>,
) -> Result<ComparisonReport<T>> {
    compare_problems(problem, problem, grid, mc, opts)
}

/// As [`compare_routes`], with the differential route solving `ode_problem`
/// and the sampler simulating `mc_problem`.
pub fn compare_problems<T: Real>(
    ode_problem: &RewardProblem<T>,
    mc_problem: &RewardProblem<T>,
    grid: &[T],
    mc: &McConfig<T>,
    opts: &CompareOptions<T>,
) -> Result<ComparisonReport<T>> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("comparison grid is empty".into()));
    }
    let iv = ode_problem.iv;
    if let Some(x) = grid.iter().find(|x| !(**x > iv.a && **x < iv.b)) {
        return Err(Error::Domain(format!(
            "grid point {x} is not inside ({}, {})",
            iv.a, iv.b
        )));
    }
    let fd = solve_fd_with_rule(ode_problem, opts.mesh, opts.rule)?;
    let analytic = if analytic_applicable(ode_problem) && opts.rule == InterfaceRule::SmoothFit {
        Some(solve_analytic(ode_problem)?)
    } else {
        None
    };
    let regularity = regularity_probe(&fd, ode_problem);
    let residual = residual_report(&fd, ode_problem);
    let floor = T::lit(SE_FLOOR);

    let mut rows = Vec::with_capacity(grid.len());
    let mut reliable = true;
    let mut censored = 0;
    let mut h = mc.step_for(mc_problem);
    for &x in grid {
        let est = estimate_rao_blackwell(mc_problem, x, mc)?;
        reliable &= est.reliable;
        censored += est.n_censored;
        h = est.h;
        let j_ode = fd.value(x);
        let se_eff = est.std_error.max(floor * (T::one() + j_ode.abs()));
        rows.push(ComparisonRow {
            x,
            j_ode,
            j_analytic: analytic.as_ref().map(|s| s.value(x)),
            j_mc: est.mean,
            se_mc: est.std_error,
            z: (j_ode - est.mean) / se_eff,
        });
    }
    let max_abs_z = rows.iter().map(|r| r.z.abs()).fold(T::zero(), T::max);
    let z_ok = max_abs_z <= opts.z_threshold && rows.iter().all(|r| r.z.is_finite());
    let verdict = if z_ok && regularity.pass && reliable {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(ComparisonReport {
        rows,
        max_abs_z,
        regularity,
        residual,
        options: *opts,
        se_floor: floor,
        monte_carlo: McSettings {
            n_paths: mc.n_paths,
            h,
            seed: mc.seed,
            estimator: "rao-blackwell",
            censored,
            reliable,
        },
        z_ok,
        verdict,
    })
}

/// `n` equally spaced points strictly inside `(a, b)`.
pub fn interior_grid<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    (1..=n)
        .map(|k| a + (b - a) * T::from_count(k) / T::from_count(n + 1))
        .collect()
}

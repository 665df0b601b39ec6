//! The probabilistic route: Euler–Maruyama paths with a Brownian-bridge exit
//! test, the exponential clock, and two Monte Carlo estimators of `J`.

mod walk;

use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::stats::{reduce_pairwise, Moments};
use crate::problem::RewardProblem;
use crate::rate::{for_each_substep, Substep};
use crate::real::{Real, Side};

pub use walk::Outcome;
use walk::Walker;

/// Paths per work unit. Fixed so that the reduction tree never depends on
/// the number of worker threads.
pub const CHUNK_SIZE: usize = 1024;
pub const DEFAULT_MAX_STEPS: u64 = 100_000_000;
/// Fraction of censored paths above which an estimate is unreliable.
pub const CENSORED_LIMIT: f64 = 0.01;
pub const MIN_PATHS: usize = 100;
/// Rao–Blackwell paths stop once the discount-and-clock exponent exceeds
/// this value; the remaining weight is below `e^{-50}`.
const RB_TRUNCATION: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitKind {
    #[serde(rename = "exited-at-a")]
    ExitedLow,
    #[serde(rename = "exited-at-b")]
    ExitedHigh,
    ClockFired,
    Censored,
}

/// A discretized path up to exit. Exit times are refined inside the final
/// step, so the last timestamp can be off the uniform grid.
#[derive(Debug, Clone)]
pub struct Path<T> {
    pub times: Vec<T>,
    pub states: Vec<T>,
    pub exit: ExitKind,
    pub exit_time: T,
    pub exit_state: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Direct,
    #[default]
    RaoBlackwell,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Direct => "direct",
            EstimatorKind::RaoBlackwell => "rao-blackwell",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct McConfig<T> {
    pub n_paths: usize,
    /// Euler step. `None` selects `1e-3·(b − a)²`.
    pub h: Option<T>,
    pub seed: u64,
    pub max_steps: u64,
}

impl<T: Real> McConfig<T> {
    pub fn new(n_paths: usize, seed: u64) -> Self {
        Self {
            n_paths,
            h: None,
            seed,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_step(mut self, h: T) -> Self {
        self.h = Some(h);
        self
    }

    pub fn step_for(&self, problem: &RewardProblem<T>) -> T {
        self.h.unwrap_or_else(|| default_step(problem))
    }
}

pub fn default_step<T: Real>(problem: &RewardProblem<T>) -> T {
    let w = problem.iv.width();
    T::lit(1e-3) * w * w
}

#[derive(Debug, Clone, Serialize)]
pub struct McEstimate<T> {
    pub x0: T,
    pub mean: T,
    pub std_error: T,
    /// Paths entering the estimate (censored paths excluded).
    pub n_paths: usize,
    pub n_censored: usize,
    pub seed: u64,
    pub h: T,
    pub estimator_kind: EstimatorKind,
    pub reliable: bool,
}

/// Independent RNG stream for path `index`; `lane` 0 drives the path,
/// lane 1 the exponential variate.
pub fn path_rng(seed: u64, index: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index + lane);
    rng
}

fn check_start<T: Real>(problem: &RewardProblem<T>, x0: T) -> Result<()> {
    let (lo, hi) = problem.stopping_domain();
    if !(x0 > lo && x0 < hi) {
        return Err(Error::Domain(format!(
            "start point {x0} must lie strictly inside ({lo}, {hi})"
        )));
    }
    Ok(())
}

fn check_step<T: Real>(h: T) -> Result<()> {
    if h > T::zero() && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("time step must be positive, got {h}")))
    }
}

/// Payoff at the stopping domain boundary, read from inside.
fn exit_payoff<T: Real>(problem: &RewardProblem<T>, kind: ExitKind, x: T) -> T {
    match kind {
        ExitKind::ExitedLow => problem.g.eval_side(x, Side::Right),
        ExitKind::ExitedHigh => problem.g.eval_side(x, Side::Left),
        _ => problem.g.eval(x),
    }
}

/// Records one Euler–Maruyama path with bridge-corrected exit.
pub fn simulate_path<T: Real>(
    problem: &RewardProblem<T>,
    x0: T,
    h: T,
    rng: &mut ChaCha8Rng,
) -> Result<Path<T>> {
    simulate_path_capped(problem, x0, h, rng, DEFAULT_MAX_STEPS)
}

pub fn simulate_path_capped<T: Real>(
    problem: &RewardProblem<T>,
    x0: T,
    h: T,
    rng: &mut ChaCha8Rng,
    max_steps: u64,
) -> Result<Path<T>> {
    check_start(problem, x0)?;
    check_step(h)?;
    let walker = Walker::new(problem, h, max_steps);
    let mut times = vec![T::zero()];
    let mut states = vec![x0];
    let outcome = walker.walk(x0, rng, |_, _, t1, x1| {
        times.push(t1);
        states.push(x1);
        ControlFlow::Continue(())
    });
    let (exit, exit_time, exit_state) = match outcome {
        Outcome::Exited { kind, time, state } => (kind, time, state),
        Outcome::Censored { time, state } => (ExitKind::Censored, time, state),
        Outcome::Stopped => unreachable!("recording never stops early"),
    };
    Ok(Path {
        times,
        states,
        exit,
        exit_time,
        exit_state,
    })
}

/// Runs the exponential clock along a recorded path against the variate `e`.
/// Returns `(τ, X_τ, kind)`; without a ring the path's exit is returned.
pub fn sample_stopping<T: Real>(problem: &RewardProblem<T>, path: &Path<T>, e: T) -> (T, T, ExitKind) {
    let rate = problem.rate();
    let mut phi = T::zero();
    let mut hit = None;
    for k in 1..path.times.len() {
        let flow = for_each_substep(
            rate,
            path.times[k - 1],
            path.states[k - 1],
            path.times[k],
            path.states[k],
            |s| match clock_crossing(&s, phi, e) {
                Some(found) => {
                    hit = Some(found);
                    ControlFlow::Break(())
                }
                None => {
                    phi += s.clock_increment();
                    ControlFlow::Continue(())
                }
            },
        );
        if flow.is_break() {
            let (t, x) = hit.unwrap();
            return (t, x, ExitKind::ClockFired);
        }
    }
    (path.exit_time, path.exit_state, path.exit)
}

/// Time and state where the clock reaches `e` inside `s`, if it does.
#[inline]
fn clock_crossing<T: Real>(s: &Substep<T>, phi: T, e: T) -> Option<(T, T)> {
    let d = s.clock_increment();
    if phi + d < e || d <= T::zero() {
        return None;
    }
    let frac = ((e - phi) / d).max(T::zero()).min(T::one());
    Some((s.t0 + frac * (s.t1 - s.t0), s.x0 + frac * (s.x1 - s.x0)))
}

/// Per-path contribution; `None` for censored paths.
trait PathFunctional<T>: Sync {
    fn evaluate(&self, walker: &Walker<'_, T>, problem: &RewardProblem<T>, x0: T, seed: u64, index: u64) -> Option<T>;
}

struct Direct;

impl<T: Real> PathFunctional<T> for Direct {
    fn evaluate(&self, walker: &Walker<'_, T>, problem: &RewardProblem<T>, x0: T, seed: u64, index: u64) -> Option<T> {
        let mut path_rng = path_rng(seed, index, 0);
        let mut clock_rng = path_rng_for_clock(seed, index);
        let e = -T::open01(&mut clock_rng).ln();
        let rate = problem.rate();
        let mut phi = T::zero();
        let mut stop = None;
        let outcome = walker.walk(x0, &mut path_rng, |t0, xa, t1, xb| {
            for_each_substep(rate, t0, xa, t1, xb, |s| match clock_crossing(&s, phi, e) {
                Some(found) => {
                    stop = Some(found);
                    ControlFlow::Break(())
                }
                None => {
                    phi += s.clock_increment();
                    ControlFlow::Continue(())
                }
            })
        });
        let r = problem.r;
        match outcome {
            Outcome::Stopped => {
                let (t, x) = stop.unwrap();
                Some((-r * t).exp() * problem.g.eval(x))
            }
            Outcome::Exited { kind, time, state } => {
                Some((-r * time).exp() * exit_payoff(problem, kind, state))
            }
            Outcome::Censored { .. } => None,
        }
    }
}

fn path_rng_for_clock(seed: u64, index: u64) -> ChaCha8Rng {
    path_rng(seed, index, 1)
}

struct RaoBlackwell;

/// `((1 − e^{−z})/z, e^{−z} − 1)` for `z ≥ 0`. Small arguments use the
/// Taylor series, whose truncation error is below `z⁷/5040`.
#[inline]
fn decay_terms<T: Real>(z: T) -> (T, T) {
    if z < T::lit(1e-2) {
        let c = [1.0, -1.0 / 2.0, 1.0 / 6.0, -1.0 / 24.0, 1.0 / 120.0, -1.0 / 720.0, 1.0 / 5040.0];
        let phi = c.iter().rev().fold(T::zero(), |acc, &ck| acc * z + T::lit(ck));
        (phi, -z * phi)
    } else {
        let decay = (-z).exp_m1();
        (-decay / z, decay)
    }
}

impl<T: Real> PathFunctional<T> for RaoBlackwell {
    fn evaluate(&self, walker: &Walker<'_, T>, problem: &RewardProblem<T>, x0: T, seed: u64, index: u64) -> Option<T> {
        let mut rng = path_rng(seed, index, 0);
        let rate = problem.rate();
        let g = &problem.g;
        let r = problem.r;
        let half = T::lit(0.5);
        let cutoff = T::lit((-RB_TRUNCATION).exp());
        // weight = e^{−Λ}, Λ = r t + Φ_t.
        let mut weight = T::one();
        let mut running = T::zero();
        // Payoff at the end of the previous substep.
        let mut last = (x0, g.eval(x0));
        let outcome = walker.walk(x0, &mut rng, |t0, xa, t1, xb| {
            let flow = for_each_substep(rate, t0, xa, t1, xb, |s| {
                let dt = s.t1 - s.t0;
                let dl = r * dt + s.clock_increment();
                let (phi, decay) = decay_terms(dl);
                let g0 = if s.x0 == last.0 { last.1 } else { g.eval(s.x0) };
                let g1 = g.eval(s.x1);
                last = (s.x1, g1);
                let psi_g = half * (s.psi0 + s.psi1) * half * (g0 + g1);
                running += psi_g * weight * dt * phi;
                weight += weight * decay;
                ControlFlow::Continue(())
            });
            if weight < cutoff {
                ControlFlow::Break(())
            } else {
                flow
            }
        });
        match outcome {
            Outcome::Stopped => Some(running),
            Outcome::Exited { kind, state, .. } => {
                Some(running + weight * exit_payoff(problem, kind, state))
            }
            Outcome::Censored { .. } => None,
        }
    }
}

fn run_estimator<T: Real, F: PathFunctional<T>>(
    functional: &F,
    kind: EstimatorKind,
    problem: &RewardProblem<T>,
    x0: T,
    cfg: &McConfig<T>,
) -> Result<McEstimate<T>> {
    if cfg.n_paths < MIN_PATHS {
        return Err(Error::InvalidInput(format!(
            "at least {MIN_PATHS} paths are required, got {}",
            cfg.n_paths
        )));
    }
    check_start(problem, x0)?;
    let h = cfg.step_for(problem);
    check_step(h)?;
    let walker = Walker::new(problem, h, cfg.max_steps);
    let n = cfg.n_paths;
    let chunks = n.div_ceil(CHUNK_SIZE);
    let parts: Vec<(Moments<T>, usize)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::default();
            let mut censored = 0usize;
            let end = ((c + 1) * CHUNK_SIZE).min(n);
            for i in c * CHUNK_SIZE..end {
                match functional.evaluate(&walker, problem, x0, cfg.seed, i as u64) {
                    Some(v) => m.push(v),
                    None => censored += 1,
                }
            }
            (m, censored)
        })
        .collect();
    let moments: Vec<Moments<T>> = parts.iter().map(|p| p.0).collect();
    let censored: usize = parts.iter().map(|p| p.1).sum();
    let total = reduce_pairwise(&moments);
    let reliable = (censored as f64) <= CENSORED_LIMIT * n as f64 && total.count > 1;
    if censored > 0 {
        log::warn!("{censored} of {n} paths hit the step cap and were excluded");
    }
    Ok(McEstimate {
        x0,
        mean: total.mean,
        std_error: total.std_error(),
        n_paths: total.count as usize,
        n_censored: censored,
        seed: cfg.seed,
        h,
        estimator_kind: kind,
        reliable,
    })
}

/// Mean of `e^{−rτ} g(X_τ)` with the clock sampled explicitly.
pub fn estimate_direct<T: Real>(problem: &RewardProblem<T>, x0: T, cfg: &McConfig<T>) -> Result<McEstimate<T>> {
    check_inside_interval(problem, x0)?;
    run_estimator(&Direct, EstimatorKind::Direct, problem, x0, cfg)
}

/// Mean of the conditional expectation of `e^{−rτ} g(X_τ)` given the path.
pub fn estimate_rao_blackwell<T: Real>(
    problem: &RewardProblem<T>,
    x0: T,
    cfg: &McConfig<T>,
) -> Result<McEstimate<T>> {
    check_inside_interval(problem, x0)?;
    run_estimator(&RaoBlackwell, EstimatorKind::RaoBlackwell, problem, x0, cfg)
}

pub fn estimate<T: Real>(
    kind: EstimatorKind,
    problem: &RewardProblem<T>,
    x0: T,
    cfg: &McConfig<T>,
) -> Result<McEstimate<T>> {
    match kind {
        EstimatorKind::Direct => estimate_direct(problem, x0, cfg),
        EstimatorKind::RaoBlackwell => estimate_rao_blackwell(problem, x0, cfg),
    }
}

fn check_inside_interval<T: Real>(problem: &RewardProblem<T>, x0: T) -> Result<()> {
    if x0 > problem.iv.a && x0 < problem.iv.b {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "start point {x0} must lie strictly inside ({}, {})",
            problem.iv.a, problem.iv.b
        )))
    }
}

/// Experimental: Monte Carlo estimates of `J(a)` and `J(b)` when the stopping
/// domain strictly contains `[a, b]`, where neither value equals the payoff.
/// Endpoints lying on the boundary of the stopping domain return the payoff.
pub fn experimental_boundary_values<T: Real>(
    problem: &RewardProblem<T>,
    cfg: &McConfig<T>,
) -> Result<(McEstimate<T>, McEstimate<T>)> {
    let (lo, hi) = problem.stopping_domain();
    let at = |x: T, side: Side| -> Result<McEstimate<T>> {
        if x > lo && x < hi {
            run_estimator(&RaoBlackwell, EstimatorKind::RaoBlackwell, problem, x, cfg)
        } else {
            Ok(McEstimate {
                x0: x,
                mean: problem.g.eval_side(x, side),
                std_error: T::zero(),
                n_paths: cfg.n_paths,
                n_censored: 0,
                seed: cfg.seed,
                h: cfg.step_for(problem),
                estimator_kind: EstimatorKind::RaoBlackwell,
                reliable: true,
            })
        }
    };
    Ok((at(problem.iv.a, Side::Right)?, at(problem.iv.b, Side::Left)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_terms_match_expm1() {
        for z in [0.0f64, 1e-12, 1e-7, 3e-4, 9.99e-3, 1e-2, 0.5, 3.0] {
            let (phi, decay) = decay_terms(z);
            let exact = (-z).exp_m1();
            assert!((decay - exact).abs() <= 4.0 * f64::EPSILON * exact.abs(), "z {z}");
            if z > 0.0 {
                assert!((phi + exact / z).abs() <= 4.0 * f64::EPSILON, "z {z}");
            } else {
                assert_eq!(phi, 1.0);
            }
        }
    }

    #[test]
    fn streams_are_distinct() {
        use rand::Rng;
        let a: u64 = path_rng(7, 0, 0).random();
        let b: u64 = path_rng(7, 0, 1).random();
        let c: u64 = path_rng(7, 1, 0).random();
        assert!(a != b && a != c && b != c);
        let again: u64 = path_rng(7, 0, 0).random();
        assert_eq!(a, again);
    }
}

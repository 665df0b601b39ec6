//! Streaming Euler–Maruyama walk with a Brownian-bridge exit test.

use std::ops::ControlFlow;

use rand::Rng;

use super::ExitKind;
use crate::diffusion::DiffusionSpec;
use crate::problem::RewardProblem;
use crate::real::Real;

/// Bridge crossings whose probability is below `e^{-40}` are ignored.
const BRIDGE_EXPONENT_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome<T> {
    Exited { kind: ExitKind, time: T, state: T },
    Censored { time: T, state: T },
    /// The visitor ended the walk.
    Stopped,
}

pub(crate) struct Walker<'a, T> {
    spec: &'a DiffusionSpec<T>,
    lo: T,
    hi: T,
    h: T,
    sqrt_h: T,
    max_steps: u64,
}

impl<'a, T: Real> Walker<'a, T> {
    pub fn new(problem: &'a RewardProblem<T>, h: T, max_steps: u64) -> Self {
        let (lo, hi) = problem.stopping_domain();
        Self {
            spec: &problem.spec,
            lo,
            hi,
            h,
            sqrt_h: h.sqrt(),
            max_steps,
        }
    }

    /// Walks from `x0` and hands every linear step `(t0, x0) → (t1, x1)` to
    /// `visit`. The final step ends at the refined exit time on the barrier.
    pub fn walk<R: Rng>(
        &self,
        x0: T,
        rng: &mut R,
        mut visit: impl FnMut(T, T, T, T) -> ControlFlow<()>,
    ) -> Outcome<T> {
        let (lo, hi, h) = (self.lo, self.hi, self.h);
        let two = T::lit(2.0);
        let cutoff = T::lit(BRIDGE_EXPONENT_CUTOFF);
        let mut x = x0;
        let mut k: u64 = 0;
        loop {
            let t0 = T::lit(k as f64) * h;
            if k >= self.max_steps {
                return Outcome::Censored { time: t0, state: x };
            }
            let t1 = T::lit((k + 1) as f64) * h;
            let mu = self.spec.mu(x);
            let sigma = self.spec.sigma(x);
            let var_h = sigma * sigma * h;
            let x1 = x + mu * h + sigma * self.sqrt_h * T::standard_normal(rng);

            let crossed = if x1 <= lo {
                Some((ExitKind::ExitedLow, lo, x - lo, lo - x1))
            } else if x1 >= hi {
                Some((ExitKind::ExitedHigh, hi, hi - x, x1 - hi))
            } else {
                let (dl0, dl1) = (x - lo, x1 - lo);
                let (dh0, dh1) = (hi - x, hi - x1);
                let el = two * dl0 * dl1 / var_h;
                let eh = two * dh0 * dh1 / var_h;
                let pl = if el < cutoff { (-el).exp() } else { T::zero() };
                let ph = if eh < cutoff { (-eh).exp() } else { T::zero() };
                if pl + ph > T::zero() {
                    let u = T::open01(rng);
                    if u < pl {
                        Some((ExitKind::ExitedLow, lo, dl0, dl1))
                    } else if u < pl + ph {
                        Some((ExitKind::ExitedHigh, hi, dh0, dh1))
                    } else {
                        None
                    }
                } else {
                    None
                }
            };

            match crossed {
                Some((kind, barrier, d0, d1)) => {
                    let dt = bridge_passage_time(d0, d1, sigma, h, rng);
                    let time = (t0 + dt).min(t1);
                    if visit(t0, x, time, barrier).is_break() {
                        return Outcome::Stopped;
                    }
                    return Outcome::Exited {
                        kind,
                        time,
                        state: barrier,
                    };
                }
                None => {
                    if visit(t0, x, t1, x1).is_break() {
                        return Outcome::Stopped;
                    }
                    x = x1;
                    k += 1;
                }
            }
        }
    }
}

/// First passage time of a Brownian bridge with volatility `sigma` over a step
/// `h`, starting `d0` from the barrier and ending `d1` from it, conditional on
/// hitting. With `u ~ IG(d0·h/d1, d0²/σ²)` the passage time is `u·h/(h + u)`.
fn bridge_passage_time<T: Real, R: Rng>(d0: T, d1: T, sigma: T, h: T, rng: &mut R) -> T {
    if d0 <= T::zero() {
        return T::zero();
    }
    if d1 <= T::zero() {
        return h;
    }
    let mean = d0 * h / d1;
    let shape = d0 * d0 / (sigma * sigma);
    let u = inverse_gaussian(mean, shape, rng);
    if !u.is_finite() {
        return h;
    }
    (u * h / (h + u)).min(h)
}

/// Michael–Schucany–Haas sampler, written to avoid cancellation.
fn inverse_gaussian<T: Real, R: Rng>(mean: T, shape: T, rng: &mut R) -> T {
    let nu = T::standard_normal(rng);
    let q = mean * nu * nu / (T::lit(2.0) * shape);
    let x = mean / (T::one() + q + (q * q + T::lit(2.0) * q).sqrt());
    if T::open01(rng) <= mean / (mean + x) {
        x
    } else {
        mean * mean / x
    }
}

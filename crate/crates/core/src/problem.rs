//! The reward problem `J(x) = E_x[e^{−rτ} g(X_τ)]` shared by both routes.

use crate::diffusion::{DiffusionSpec, Interval};
use crate::error::{Error, Result};
use crate::rate::{ClockIntegrand, PiecewiseFunction, PiecewiseRate};
use crate::real::{Real, Side};

const PAYOFF_GRID: usize = 512;

#[derive(Debug, Clone)]
pub struct RewardProblem<T> {
    pub spec: DiffusionSpec<T>,
    pub iv: Interval<T>,
    pub g: PiecewiseFunction<T>,
    pub r: T,
    pub psi: ClockIntegrand<T>,
    active: usize,
}

impl<T: Real> RewardProblem<T> {
    pub fn new(
        spec: DiffusionSpec<T>,
        iv: Interval<T>,
        g: PiecewiseFunction<T>,
        r: T,
        psi: ClockIntegrand<T>,
    ) -> Result<Self> {
        if !(r >= T::zero()) || !r.is_finite() {
            return Err(Error::InvalidInput(format!(
                "discount rate must be finite and nonnegative, got {r}"
            )));
        }
        if !(g.lo() <= iv.a && g.hi() >= iv.b) {
            return Err(Error::Domain(format!(
                "payoff is defined on ({}, {}) which does not cover [{}, {}]",
                g.lo(),
                g.hi(),
                iv.a,
                iv.b
            )));
        }
        let active = psi.component_covering(iv.a, iv.b).ok_or_else(|| {
            Error::Domain(format!(
                "no component of the stopping domain covers [{}, {}]",
                iv.a, iv.b
            ))
        })?;
        let comp = &psi.components()[active];
        spec.check_on_grid(comp.lo(), comp.hi(), 256)?;
        let problem = Self {
            spec,
            iv,
            g,
            r,
            psi,
            active,
        };
        problem.check_payoff()?;
        Ok(problem)
    }

    /// Problem whose stopping domain is exactly `(a, b)` and whose clock is
    /// driven by `rate`.
    pub fn with_rate(
        spec: DiffusionSpec<T>,
        iv: Interval<T>,
        g: PiecewiseFunction<T>,
        r: T,
        rate: PiecewiseRate<T>,
    ) -> Result<Self> {
        Self::new(spec, iv, g, r, ClockIntegrand::from_rate(rate))
    }

    fn check_payoff(&self) -> Result<()> {
        let (lo, hi) = self.stopping_domain();
        let step = (hi - lo) / T::from_count(PAYOFF_GRID);
        for k in 0..=PAYOFF_GRID {
            let x = lo + step * T::from_count(k);
            for side in [Side::Left, Side::Right] {
                let v = self.g.eval_side(x, side);
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "payoff is not finite at x = {x}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rate on the component of the stopping domain that contains `[a, b]`.
    pub fn rate(&self) -> &PiecewiseRate<T> {
        &self.psi.components()[self.active]
    }

    /// Closure of the active component of the stopping domain.
    pub fn stopping_domain(&self) -> (T, T) {
        let c = self.rate();
        (c.lo(), c.hi())
    }

    /// True when the stopping domain component equals `(a, b)`.
    pub fn domain_is_interval(&self) -> bool {
        let (lo, hi) = self.stopping_domain();
        lo == self.iv.a && hi == self.iv.b
    }

    /// Rate breakpoints strictly inside `(a, b)`.
    pub fn rate_knots(&self) -> Vec<T> {
        let bps = self.rate().breakpoints();
        bps[1..bps.len() - 1]
            .iter()
            .copied()
            .filter(|x| *x > self.iv.a && *x < self.iv.b)
            .collect()
    }

    /// `a`, the rate breakpoints inside `(a, b)`, and `b`.
    pub fn segments(&self) -> Vec<T> {
        let mut out = vec![self.iv.a];
        out.extend(self.rate_knots());
        out.push(self.iv.b);
        out
    }

    pub fn with_discount(&self, r: T) -> Result<Self> {
        Self::new(self.spec.clone(), self.iv, self.g.clone(), r, self.psi.clone())
    }

    pub(crate) fn require_interval_domain(&self) -> Result<()> {
        if self.domain_is_interval() {
            Ok(())
        } else {
            let (lo, hi) = self.stopping_domain();
            Err(Error::NotApplicable(format!(
                "the differential route needs the stopping domain to equal (a, b); got ({lo}, {hi}) for ({}, {})",
                self.iv.a, self.iv.b
            )))
        }
    }
}

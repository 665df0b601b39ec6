//! The fixed problem suite: three diffusions, three rates, three payoffs,
//! each with discount `r = 1`.

use serde::{Deserialize, Serialize};

use crate::diffusion::{DiffusionSpec, Interval, Preset};
use crate::error::{Error, Result};
use crate::problem::RewardProblem;
use crate::rate::{PiecewiseFunction, PiecewiseRate};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteDiffusion {
    /// Standard Brownian motion on `(0, 1)`.
    Bm,
    /// `μ = 1, σ = 1` on `(0, 1)`.
    Drifted,
    /// Geometric Brownian motion `μ = 0.2, σ = 1` on `(0.5, 2)`.
    Gbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteRate {
    /// `ψ ≡ 2`.
    N1,
    /// `ψ = 1, 4` on the two halves.
    N2,
    /// `ψ = 3, 0.5, 2` on the three thirds.
    N3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuitePayoff {
    One,
    X,
    /// `(x − K)⁺`, `K = a + 0.4(b − a)`.
    Call,
}

pub const SUITE_DISCOUNT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteProblem {
    pub diffusion: SuiteDiffusion,
    pub rate: SuiteRate,
    pub payoff: SuitePayoff,
}

impl SuiteDiffusion {
    pub const ALL: [SuiteDiffusion; 3] = [SuiteDiffusion::Bm, SuiteDiffusion::Drifted, SuiteDiffusion::Gbm];

    pub fn name(self) -> &'static str {
        match self {
            SuiteDiffusion::Bm => "bm",
            SuiteDiffusion::Drifted => "drifted",
            SuiteDiffusion::Gbm => "gbm",
        }
    }

    pub fn preset<T: Real>(self) -> Preset<T> {
        match self {
            SuiteDiffusion::Bm => Preset::Bm,
            SuiteDiffusion::Drifted => Preset::DriftedBm {
                mu: T::one(),
                sigma: T::one(),
            },
            SuiteDiffusion::Gbm => Preset::Gbm {
                mu: T::lit(0.2),
                sigma: T::one(),
            },
        }
    }

    pub fn interval(self) -> (f64, f64) {
        match self {
            SuiteDiffusion::Bm | SuiteDiffusion::Drifted => (0.0, 1.0),
            SuiteDiffusion::Gbm => (0.5, 2.0),
        }
    }
}

impl SuiteRate {
    pub const ALL: [SuiteRate; 3] = [SuiteRate::N1, SuiteRate::N2, SuiteRate::N3];

    pub fn name(self) -> &'static str {
        match self {
            SuiteRate::N1 => "n1",
            SuiteRate::N2 => "n2",
            SuiteRate::N3 => "n3",
        }
    }

    pub fn build<T: Real>(self, a: T, b: T) -> Result<PiecewiseRate<T>> {
        let w = b - a;
        match self {
            SuiteRate::N1 => PiecewiseRate::constant(a, b, T::lit(2.0)),
            SuiteRate::N2 => PiecewiseRate::steps(vec![a, a + T::lit(0.5) * w, b], &[T::one(), T::lit(4.0)]),
            SuiteRate::N3 => PiecewiseRate::steps(
                vec![a, a + w / T::lit(3.0), a + T::lit(2.0) * w / T::lit(3.0), b],
                &[T::lit(3.0), T::lit(0.5), T::lit(2.0)],
            ),
        }
    }
}

impl SuitePayoff {
    pub const ALL: [SuitePayoff; 3] = [SuitePayoff::One, SuitePayoff::X, SuitePayoff::Call];

    pub fn name(self) -> &'static str {
        match self {
            SuitePayoff::One => "one",
            SuitePayoff::X => "x",
            SuitePayoff::Call => "call",
        }
    }

    pub fn build<T: Real>(self, a: T, b: T) -> PiecewiseFunction<T> {
        match self {
            SuitePayoff::One => PiecewiseFunction::constant(T::one()),
            SuitePayoff::X => PiecewiseFunction::identity(),
            SuitePayoff::Call => PiecewiseFunction::call(a + T::lit(0.4) * (b - a)),
        }
    }
}

impl SuiteProblem {
    pub fn name(&self) -> String {
        format!("{}-{}-{}", self.diffusion.name(), self.rate.name(), self.payoff.name())
    }

    pub fn interval(&self) -> (f64, f64) {
        self.diffusion.interval()
    }

    pub fn build<T: Real>(&self) -> Result<RewardProblem<T>> {
        self.build_with_discount(T::lit(SUITE_DISCOUNT))
    }

    pub fn build_with_discount<T: Real>(&self, r: T) -> Result<RewardProblem<T>> {
        let spec = DiffusionSpec::from_preset(&self.diffusion.preset::<T>())?;
        let (a, b) = self.interval();
        let (a, b) = (T::lit(a), T::lit(b));
        let iv = Interval::new(&spec, a, b)?;
        let rate = self.rate.build(a, b)?;
        RewardProblem::with_rate(spec, iv, self.payoff.build(a, b), r, rate)
    }

    /// Five interior points at `a + k(b − a)/6`.
    pub fn grid<T: Real>(&self) -> Vec<T> {
        let (a, b) = self.interval();
        crate::verify::interior_grid(T::lit(a), T::lit(b), 5)
    }
}

/// All 27 suite problems.
pub fn suite() -> Vec<SuiteProblem> {
    let mut out = Vec::with_capacity(27);
    for diffusion in SuiteDiffusion::ALL {
        for rate in SuiteRate::ALL {
            for payoff in SuitePayoff::ALL {
                out.push(SuiteProblem {
                    diffusion,
                    rate,
                    payoff,
                });
            }
        }
    }
    out
}

/// Looks a suite problem up by name, e.g. `"bm-n2-one"`.
pub fn lookup(name: &str) -> Result<SuiteProblem> {
    suite()
        .into_iter()
        .find(|p| p.name() == name)
        .ok_or_else(|| Error::InvalidInput(format!("unknown suite problem `{name}`")))
}

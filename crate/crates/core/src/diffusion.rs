//! One-dimensional Itô diffusions `dX = μ(X) dt + σ(X) dW` and the scale
//! function primitives built on them.
//!
//! Coefficients are supplied as [`Coefficient`]s over a declared state
//! interval. Lipschitz continuity is a caller contract and is not checked;
//! positivity and finiteness of σ are checked on a dense grid when the spec is
//! built.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bvp::fd::{solve_linear_bvp, InterfaceRule, LinearBvp};
use crate::error::{Error, Result};
use crate::numerics::quadrature::{integrate, QuadratureError, QuadratureTolerance};
use crate::real::{Real, Side};

/// A coefficient function of the state.
#[derive(Clone)]
pub enum Coefficient<T> {
    Constant(T),
    /// `slope * x + intercept`.
    Affine { slope: T, intercept: T },
    Custom(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: Real> Coefficient<T> {
    pub fn custom(f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Coefficient::Custom(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Affine { slope, intercept } => *slope * x + *intercept,
            Coefficient::Custom(f) => f(x),
        }
    }

    pub fn as_constant(&self) -> Option<T> {
        match self {
            Coefficient::Constant(c) => Some(*c),
            Coefficient::Affine { slope, intercept } if *slope == T::zero() => Some(*intercept),
            _ => None,
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Coefficient<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c:?})"),
            Coefficient::Affine { slope, intercept } => {
                write!(f, "Affine({slope:?} * x + {intercept:?})")
            }
            Coefficient::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// State space `I` with per-endpoint openness. Endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateInterval<T> {
    pub lo: T,
    pub hi: T,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl<T: Real> StateInterval<T> {
    pub fn open(lo: T, hi: T) -> Self {
        Self {
            lo,
            hi,
            lo_closed: false,
            hi_closed: false,
        }
    }

    pub fn real_line() -> Self {
        Self::open(T::neg_infinity(), T::infinity())
    }

    pub fn contains_interior(&self, x: T) -> bool {
        x > self.lo && x < self.hi
    }

    /// Whether `x` may serve as an endpoint of an exit interval.
    pub fn admits_endpoint(&self, x: T) -> bool {
        x.is_finite()
            && (self.contains_interior(x)
                || (x == self.lo && self.lo_closed)
                || (x == self.hi && self.hi_closed))
    }

    /// Finite window used for construction-time coefficient checks.
    fn probe_window(&self) -> (T, T) {
        let span = T::lit(1e3);
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => (self.lo, self.hi),
            (true, false) => (self.lo, self.lo + span),
            (false, true) => (self.hi - span, self.hi),
            (false, false) => (-span, span),
        }
    }
}

#[derive(Clone, Debug)]
pub struct DiffusionSpec<T> {
    pub drift: Coefficient<T>,
    pub volatility: Coefficient<T>,
    pub state: StateInterval<T>,
    pub label: String,
}

const CONSTRUCTION_GRID: usize = 1024;

impl<T: Real> DiffusionSpec<T> {
    pub fn new(
        drift: Coefficient<T>,
        volatility: Coefficient<T>,
        state: StateInterval<T>,
    ) -> Result<Self> {
        if !(state.lo < state.hi) {
            return Err(Error::InvalidInput(format!(
                "state interval ({}, {}) is empty",
                state.lo, state.hi
            )));
        }
        let spec = Self {
            drift,
            volatility,
            state,
            label: "custom".into(),
        };
        let (lo, hi) = state.probe_window();
        spec.check_on_grid(lo, hi, CONSTRUCTION_GRID)?;
        Ok(spec)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Checks σ > 0 and finiteness of both coefficients on `n` points strictly
    /// inside `(lo, hi)`.
    pub fn check_on_grid(&self, lo: T, hi: T, n: usize) -> Result<()> {
        let step = (hi - lo) / T::from_count(n + 1);
        for k in 1..=n {
            let x = lo + step * T::from_count(k);
            if !self.state.contains_interior(x) && !self.state.admits_endpoint(x) {
                continue;
            }
            self.coefficients_at(x)?;
        }
        Ok(())
    }

    /// `(μ(x), σ(x))`, validated.
    pub fn coefficients_at(&self, x: T) -> Result<(T, T)> {
        let mu = self.drift.eval(x);
        if !mu.is_finite() {
            return Err(Error::CoefficientDomain {
                name: "mu",
                x: x.as_f64(),
                reason: "non-finite value",
            });
        }
        let sigma = self.volatility.eval(x);
        if !sigma.is_finite() {
            return Err(Error::CoefficientDomain {
                name: "sigma",
                x: x.as_f64(),
                reason: "non-finite value",
            });
        }
        if sigma <= T::zero() {
            return Err(Error::CoefficientDomain {
                name: "sigma",
                x: x.as_f64(),
                reason: "volatility must be strictly positive",
            });
        }
        Ok((mu, sigma))
    }

    #[inline]
    pub fn mu(&self, x: T) -> T {
        self.drift.eval(x)
    }

    #[inline]
    pub fn sigma(&self, x: T) -> T {
        self.volatility.eval(x)
    }

    /// `(μ, σ)` when both coefficients are constant.
    pub fn constant_coefficients(&self) -> Option<(T, T)> {
        Some((self.drift.as_constant()?, self.volatility.as_constant()?))
    }

    pub fn from_preset(preset: &Preset<T>) -> Result<Self> {
        let zero = T::zero();
        let spec = match *preset {
            Preset::Bm => Self::new(
                Coefficient::Constant(zero),
                Coefficient::Constant(T::one()),
                StateInterval::real_line(),
            )?,
            Preset::DriftedBm { mu, sigma } => Self::new(
                Coefficient::Constant(mu),
                Coefficient::Constant(sigma),
                StateInterval::real_line(),
            )?,
            Preset::Gbm { mu, sigma } => Self::new(
                Coefficient::Affine {
                    slope: mu,
                    intercept: zero,
                },
                Coefficient::Affine {
                    slope: sigma,
                    intercept: zero,
                },
                StateInterval::open(zero, T::infinity()),
            )?,
            Preset::Ou { theta, mean, sigma } => Self::new(
                Coefficient::Affine {
                    slope: -theta,
                    intercept: theta * mean,
                },
                Coefficient::Constant(sigma),
                StateInterval::real_line(),
            )?,
        };
        Ok(spec.with_label(preset.name()))
    }
}

/// Built-in diffusions, addressable by name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Preset<T> {
    /// Standard Brownian motion.
    Bm,
    DriftedBm { mu: T, sigma: T },
    /// `dX = μ X dt + σ X dW` on `(0, ∞)`.
    Gbm { mu: T, sigma: T },
    /// `dX = θ(m − X) dt + σ dW`.
    Ou { theta: T, mean: T, sigma: T },
}

impl<T> Preset<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Bm => "bm",
            Preset::DriftedBm { .. } => "drifted-bm",
            Preset::Gbm { .. } => "gbm",
            Preset::Ou { .. } => "ou",
        }
    }
}

/// Exit interval `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval<T> {
    pub a: T,
    pub b: T,
}

impl<T: Real> Interval<T> {
    pub fn new(spec: &DiffusionSpec<T>, a: T, b: T) -> Result<Self> {
        if !(a < b) {
            return Err(Error::InvalidInput(format!(
                "interval endpoints must satisfy a < b, got ({a}, {b})"
            )));
        }
        for (name, x) in [("a", a), ("b", b)] {
            if !spec.state.admits_endpoint(x) {
                return Err(Error::Domain(format!(
                    "interval endpoint {name} = {x} is not an interior point or closed endpoint of the state interval"
                )));
            }
        }
        Ok(Self { a, b })
    }

    pub fn width(&self) -> T {
        self.b - self.a
    }

    pub fn contains(&self, x: T) -> bool {
        x >= self.a && x <= self.b
    }

    pub fn midpoint(&self) -> T {
        T::lit(0.5) * (self.a + self.b)
    }

    fn ensure_resolved(&self) -> Result<()> {
        let scale = T::one().max(self.a.abs()).max(self.b.abs());
        if self.b - self.a <= T::lit(4.0) * T::epsilon() * scale {
            Err(Error::DegenerateInterval {
                a: self.a.as_f64(),
                b: self.b.as_f64(),
            })
        } else {
            Ok(())
        }
    }
}

fn map_quadrature<T: Real>(e: QuadratureError<T>) -> Error {
    match e {
        QuadratureError::NonFinite(x) => Error::CoefficientDomain {
            name: "2mu/sigma^2",
            x: x.as_f64(),
            reason: "non-finite scale density",
        },
        QuadratureError::NoConvergence {
            estimate,
            tolerance,
        } => Error::Tolerance {
            estimate: estimate.as_f64(),
            tolerance: tolerance.as_f64(),
        },
    }
}

/// `s(x) = ∫_{x0}^{x} exp(−∫_{x0}^{u} 2μ/σ² dv) du` with default tolerances.
pub fn scale_function<T: Real>(spec: &DiffusionSpec<T>, x0: T, x: T) -> Result<T> {
    scale_function_with(spec, x0, x, &QuadratureTolerance::default())
}

pub fn scale_function_with<T: Real>(
    spec: &DiffusionSpec<T>,
    x0: T,
    x: T,
    tol: &QuadratureTolerance<T>,
) -> Result<T> {
    for p in [x0, x] {
        if !spec.state.contains_interior(p) && !spec.state.admits_endpoint(p) {
            return Err(Error::Domain(format!(
                "scale function argument {p} lies outside the state interval"
            )));
        }
    }
    let two = T::lit(2.0);
    let log_density = |u: T| -> T {
        let ratio = |v: T| {
            let s = spec.sigma(v);
            two * spec.mu(v) / (s * s)
        };
        match integrate(ratio, x0, u, tol) {
            Ok(v) => v,
            Err(_) => T::nan(),
        }
    };
    // Surface inner failures with the proper error before the outer pass.
    integrate(
        |v: T| {
            let s = spec.sigma(v);
            two * spec.mu(v) / (s * s)
        },
        x0,
        x,
        tol,
    )
    .map_err(map_quadrature)?;
    integrate(|u| (-log_density(u)).exp(), x0, x, tol).map_err(map_quadrature)
}

/// Probability of leaving `(a, b)` through `b` when started at `x`.
pub fn hit_probability<T: Real>(spec: &DiffusionSpec<T>, iv: &Interval<T>, x: T) -> Result<T> {
    iv.ensure_resolved()?;
    if !iv.contains(x) {
        return Err(Error::Domain(format!(
            "start point {x} outside [{}, {}]",
            iv.a, iv.b
        )));
    }
    if x == iv.a {
        return Ok(T::zero());
    }
    if x == iv.b {
        return Ok(T::one());
    }
    let total = scale_function(spec, iv.a, iv.b)?;
    if !(total > T::zero()) {
        return Err(Error::DegenerateInterval {
            a: iv.a.as_f64(),
            b: iv.b.as_f64(),
        });
    }
    let partial = scale_function(spec, iv.a, x)?;
    Ok((partial / total).max(T::zero()).min(T::one()))
}

/// `E_x[τ^{(a,b)}]`, solving `(σ²/2)u'' + μu' = −1` with zero boundary data
/// on a uniform mesh of `(b − a)/1000`.
pub fn expected_exit_time<T: Real>(spec: &DiffusionSpec<T>, iv: &Interval<T>, x: T) -> Result<T> {
    expected_exit_time_with_mesh(spec, iv, x, iv.width() * T::lit(1e-3))
}

pub fn expected_exit_time_with_mesh<T: Real>(
    spec: &DiffusionSpec<T>,
    iv: &Interval<T>,
    x: T,
    mesh: T,
) -> Result<T> {
    iv.ensure_resolved()?;
    if !iv.contains(x) {
        return Err(Error::Domain(format!(
            "start point {x} outside [{}, {}]",
            iv.a, iv.b
        )));
    }
    if x == iv.a || x == iv.b {
        return Ok(T::zero());
    }
    let kappa = |_: usize, _: T| T::zero();
    let source = |_: usize, _: T| T::one();
    let grid = solve_linear_bvp(&LinearBvp {
        diffusion: spec,
        breakpoints: vec![iv.a, iv.b],
        kappa: &kappa,
        source: &source,
        left_value: T::zero(),
        right_value: T::zero(),
        mesh,
        rule: InterfaceRule::SmoothFit,
    })?;
    Ok(grid.value(x, Side::Right))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm() -> DiffusionSpec<f64> {
        DiffusionSpec::from_preset(&Preset::Bm).unwrap()
    }

    fn drifted() -> DiffusionSpec<f64> {
        DiffusionSpec::from_preset(&Preset::DriftedBm { mu: 1.0, sigma: 1.0 }).unwrap()
    }

    #[test]
    fn scale_of_driftless_is_identity() {
        assert!((scale_function(&bm(), 0.0, 0.7).unwrap() - 0.7).abs() < 1e-14);
        assert_eq!(scale_function(&bm(), 0.3, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn scale_of_unit_drift_matches_antiderivative() {
        // ∫_0^1 e^{-2u} du
        let exact = (1.0 - (-2.0f64).exp()) / 2.0;
        assert!((exact - 0.432_332_358_381_693_6).abs() < 1e-15);
        let s = scale_function(&drifted(), 0.0, 1.0).unwrap();
        assert!((s - exact).abs() < 1e-12, "{s}");
    }

    #[test]
    fn hit_probability_endpoints_are_exact() {
        let spec = drifted();
        let iv = Interval::new(&spec, 0.0, 1.0).unwrap();
        assert_eq!(hit_probability(&spec, &iv, 0.0).unwrap(), 0.0);
        assert_eq!(hit_probability(&spec, &iv, 1.0).unwrap(), 1.0);
        assert!((hit_probability(&bm(), &iv, 0.5).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hit_probability_with_drift() {
        let spec = drifted();
        let iv = Interval::new(&spec, 0.0, 1.0).unwrap();
        let exact = (1.0 - (-1.0f64).exp()) / (1.0 - (-2.0f64).exp());
        assert!((exact - 0.731_058_578_630_004_9).abs() < 1e-15);
        assert!((hit_probability(&spec, &iv, 0.5).unwrap() - exact).abs() < 1e-11);
    }

    #[test]
    fn degenerate_interval_is_rejected() {
        let spec = bm();
        let iv = Interval { a: 1.0, b: 1.0 + 1e-17 };
        assert!(matches!(
            hit_probability(&spec, &iv, 1.0),
            Err(Error::DegenerateInterval { .. })
        ));
    }

    #[test]
    fn expected_exit_time_of_bm() {
        let spec = bm();
        let iv = Interval::new(&spec, 0.0, 1.0).unwrap();
        assert!((expected_exit_time(&spec, &iv, 0.5).unwrap() - 0.25).abs() < 1e-10);
        assert!((expected_exit_time(&spec, &iv, 0.1).unwrap() - 0.09).abs() < 1e-10);
        assert_eq!(expected_exit_time(&spec, &iv, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_volatility_is_rejected_at_construction() {
        let err = DiffusionSpec::<f64>::new(
            Coefficient::Constant(0.0),
            Coefficient::Constant(0.0),
            StateInterval::real_line(),
        );
        assert!(matches!(err, Err(Error::CoefficientDomain { name: "sigma", .. })));
    }

    #[test]
    fn open_endpoint_cannot_bound_an_exit_interval() {
        let gbm = DiffusionSpec::from_preset(&Preset::Gbm { mu: 0.1, sigma: 0.3 }).unwrap();
        assert!(Interval::new(&gbm, 0.0, 1.0).is_err());
        assert!(Interval::new(&gbm, 0.5, 2.0).is_ok());
    }

    #[test]
    fn non_finite_coefficient_is_a_domain_error() {
        let spec = DiffusionSpec::<f64>::new(
            Coefficient::custom(|x: f64| if x > 0.6 && x < 0.61 { f64::NAN } else { 0.0 }),
            Coefficient::Constant(1.0),
            StateInterval::open(0.0, 1.0),
        );
        assert!(matches!(spec, Err(Error::CoefficientDomain { name: "mu", .. })));
    }
}

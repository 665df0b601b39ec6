//! Stopping rates ψ, Radon measures λ (density plus atoms) and the clock
//! `Φ_t = ∫₀ᵗ ψ(X_s) ds` along discretized paths.

use std::fmt;
use std::ops::ControlFlow;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diffusion::{Coefficient, DiffusionSpec};
use crate::error::{Error, Result};
use crate::real::{Real, Side};
use crate::sampler::Path;

/// A smooth function on one piece of a piecewise definition.
#[derive(Clone)]
pub enum Piece<T> {
    Const(T),
    /// Coefficients in increasing degree: `c0 + c1 x + c2 x² + …`.
    Poly(Vec<T>),
    Func(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: Real> Piece<T> {
    pub fn func(f: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Piece::Func(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        match self {
            Piece::Const(c) => *c,
            Piece::Poly(c) => c.iter().rev().fold(T::zero(), |acc, &ck| acc * x + ck),
            Piece::Func(f) => f(x),
        }
    }

    /// Limit at an endpoint of the piece, approached from `inward`.
    /// Closed forms are continued analytically; callables are extrapolated
    /// linearly from two interior evaluations.
    pub fn limit(&self, x: T, inward: Side, width: T) -> T {
        match self {
            Piece::Func(f) => {
                let w = if width.is_finite() { width } else { T::one() };
                let delta = w * T::lit(1e-6);
                let dir = match inward {
                    Side::Right => T::one(),
                    Side::Left => -T::one(),
                };
                T::lit(2.0) * f(x + dir * delta) - f(x + dir * T::lit(2.0) * delta)
            }
            _ => self.eval(x),
        }
    }

    /// Polynomial coefficients when the piece has a closed polynomial form.
    pub fn as_polynomial(&self) -> Option<Vec<T>> {
        match self {
            Piece::Const(c) => Some(vec![*c]),
            Piece::Poly(c) => Some(c.clone()),
            Piece::Func(_) => None,
        }
    }

    pub fn as_constant(&self) -> Option<T> {
        match self {
            Piece::Const(c) => Some(*c),
            Piece::Poly(c) if c.iter().skip(1).all(|v| *v == T::zero()) => {
                Some(c.first().copied().unwrap_or_else(T::zero))
            }
            _ => None,
        }
    }

    pub fn add(&self, other: &Piece<T>) -> Piece<T> {
        match (self, other) {
            (Piece::Const(a), Piece::Const(b)) => Piece::Const(*a + *b),
            (a, b) if a.as_polynomial().is_some() && b.as_polynomial().is_some() => {
                let (pa, pb) = (a.as_polynomial().unwrap(), b.as_polynomial().unwrap());
                let n = pa.len().max(pb.len());
                let coeff = |p: &[T], k: usize| p.get(k).copied().unwrap_or_else(T::zero);
                Piece::Poly((0..n).map(|k| coeff(&pa, k) + coeff(&pb, k)).collect())
            }
            (a, b) => {
                let (a, b) = (a.clone(), b.clone());
                Piece::func(move |x| a.eval(x) + b.eval(x))
            }
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Piece<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Piece::Const(c) => write!(f, "Const({c:?})"),
            Piece::Poly(c) => write!(f, "Poly({c:?})"),
            Piece::Func(_) => write!(f, "Func(..)"),
        }
    }
}

/// A function given by one smooth piece per open subinterval
/// `(x_{i−1}, x_i)`. The outer breakpoints may be infinite.
#[derive(Debug, Clone)]
pub struct PiecewiseFunction<T> {
    breakpoints: Vec<T>,
    pieces: Vec<Piece<T>>,
}

impl<T: Real> PiecewiseFunction<T> {
    pub fn new(breakpoints: Vec<T>, pieces: Vec<Piece<T>>) -> Result<Self> {
        if breakpoints.len() < 2 || pieces.len() + 1 != breakpoints.len() {
            return Err(Error::InvalidInput(format!(
                "{} breakpoints cannot carry {} pieces",
                breakpoints.len(),
                pieces.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        let inner = &breakpoints[1..breakpoints.len() - 1];
        if breakpoints.iter().any(|b| b.is_nan()) || inner.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("interior breakpoints must be finite".into()));
        }
        Ok(Self {
            breakpoints,
            pieces,
        })
    }

    /// One piece on the whole real line.
    pub fn single(piece: Piece<T>) -> Self {
        Self {
            breakpoints: vec![T::neg_infinity(), T::infinity()],
            pieces: vec![piece],
        }
    }

    pub fn constant(c: T) -> Self {
        Self::single(Piece::Const(c))
    }

    pub fn identity() -> Self {
        Self::single(Piece::Poly(vec![T::zero(), T::one()]))
    }

    /// `(x − strike)⁺`.
    pub fn call(strike: T) -> Self {
        Self {
            breakpoints: vec![T::neg_infinity(), strike, T::infinity()],
            pieces: vec![Piece::Const(T::zero()), Piece::Poly(vec![-strike, T::one()])],
        }
    }

    /// `(strike − x)⁺`.
    pub fn put(strike: T) -> Self {
        Self {
            breakpoints: vec![T::neg_infinity(), strike, T::infinity()],
            pieces: vec![Piece::Poly(vec![strike, -T::one()]), Piece::Const(T::zero())],
        }
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Piece<T>] {
        &self.pieces
    }

    pub fn lo(&self) -> T {
        self.breakpoints[0]
    }

    pub fn hi(&self) -> T {
        *self.breakpoints.last().unwrap()
    }

    /// Interior breakpoints lying strictly inside `(lo, hi)`.
    pub fn knots_within(&self, lo: T, hi: T) -> Vec<T> {
        let n = self.breakpoints.len();
        self.breakpoints[1..n - 1]
            .iter()
            .copied()
            .filter(|k| *k > lo && *k < hi)
            .collect()
    }

    /// Index of the piece governing `x`; at a breakpoint `side` selects
    /// the piece on that side.
    #[inline]
    pub fn piece_index(&self, x: T, side: Side) -> usize {
        let n = self.breakpoints.len();
        let inner = &self.breakpoints[1..n - 1];
        match side {
            Side::Right => inner.partition_point(|k| *k <= x),
            Side::Left => inner.partition_point(|k| *k < x),
        }
    }

    pub fn piece_width(&self, i: usize) -> T {
        self.breakpoints[i + 1] - self.breakpoints[i]
    }

    /// Evaluates piece `i` at `x`, treating breakpoints as one-sided limits.
    #[inline]
    pub fn eval_piece(&self, i: usize, x: T) -> T {
        match &self.pieces[i] {
            Piece::Const(c) => *c,
            Piece::Func(f) => {
                let piece = &self.pieces[i];
                if x == self.breakpoints[i] {
                    piece.limit(x, Side::Right, self.piece_width(i))
                } else if x == self.breakpoints[i + 1] {
                    piece.limit(x, Side::Left, self.piece_width(i))
                } else {
                    f(x)
                }
            }
            poly => poly.eval(x),
        }
    }

    #[inline]
    pub fn eval_side(&self, x: T, side: Side) -> T {
        self.eval_piece(self.piece_index(x, side), x)
    }

    #[inline]
    pub fn eval(&self, x: T) -> T {
        self.eval_side(x, Side::Right)
    }

    /// Pointwise sum on the union of both breakpoint sets.
    pub fn add(&self, other: &Self) -> Self {
        let lo = self.lo().max(other.lo());
        let hi = self.hi().min(other.hi());
        let mut bps: Vec<T> = vec![lo];
        bps.extend(self.knots_within(lo, hi));
        bps.extend(other.knots_within(lo, hi));
        bps.push(hi);
        bps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bps.dedup();
        let pieces = bps
            .windows(2)
            .map(|w| {
                let mid = midpoint(w[0], w[1]);
                let a = &self.pieces[self.piece_index(mid, Side::Right)];
                let b = &other.pieces[other.piece_index(mid, Side::Right)];
                a.add(b)
            })
            .collect();
        Self {
            breakpoints: bps,
            pieces,
        }
    }
}

/// A representative interior point of `(lo, hi)`, also for infinite ends.
pub(crate) fn midpoint<T: Real>(lo: T, hi: T) -> T {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => T::lit(0.5) * (lo + hi),
        (true, false) => lo + T::one(),
        (false, true) => hi - T::one(),
        (false, false) => T::zero(),
    }
}

const RATE_CHECK_GRID: usize = 256;

/// Nonnegative stopping rate on a finite domain `[x_0, x_n]`.
#[derive(Debug, Clone)]
pub struct PiecewiseRate<T> {
    function: PiecewiseFunction<T>,
    /// Reported values at breakpoints; never used in computations.
    pub values_at_breakpoints: Option<Vec<T>>,
}

impl<T: Real> PiecewiseRate<T> {
    pub fn new(breakpoints: Vec<T>, pieces: Vec<Piece<T>>) -> Result<Self> {
        let function = PiecewiseFunction::new(breakpoints, pieces)?;
        if !function.lo().is_finite() || !function.hi().is_finite() {
            return Err(Error::InvalidRate("rate domain must be bounded".into()));
        }
        let rate = Self {
            function,
            values_at_breakpoints: None,
        };
        rate.validate()?;
        Ok(rate)
    }

    pub fn constant(lo: T, hi: T, value: T) -> Result<Self> {
        Self::new(vec![lo, hi], vec![Piece::Const(value)])
    }

    /// Piecewise-constant rate.
    pub fn steps(breakpoints: Vec<T>, values: &[T]) -> Result<Self> {
        Self::new(breakpoints, values.iter().map(|v| Piece::Const(*v)).collect())
    }

    pub fn zero(lo: T, hi: T) -> Result<Self> {
        Self::constant(lo, hi, T::zero())
    }

    fn validate(&self) -> Result<()> {
        let f = &self.function;
        for i in 0..f.pieces.len() {
            let (lo, hi) = (f.breakpoints[i], f.breakpoints[i + 1]);
            let step = (hi - lo) / T::from_count(RATE_CHECK_GRID + 1);
            for k in 1..=RATE_CHECK_GRID {
                let x = lo + step * T::from_count(k);
                let v = f.pieces[i].eval(x);
                if !v.is_finite() || v < T::zero() {
                    return Err(Error::InvalidRate(format!(
                        "piece {} evaluates to {v} at x = {x}; rates must be finite and nonnegative",
                        i + 1
                    )));
                }
            }
            for (x, side) in [(lo, Side::Right), (hi, Side::Left)] {
                let v = f.pieces[i].limit(x, side, hi - lo);
                if !v.is_finite() {
                    return Err(Error::InvalidRate(format!(
                        "piece {} has no finite one-sided limit at {x}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn function(&self) -> &PiecewiseFunction<T> {
        &self.function
    }

    pub fn breakpoints(&self) -> &[T] {
        self.function.breakpoints()
    }

    pub fn pieces(&self) -> &[Piece<T>] {
        self.function.pieces()
    }

    pub fn lo(&self) -> T {
        self.function.lo()
    }

    pub fn hi(&self) -> T {
        self.function.hi()
    }

    pub fn eval(&self, x: T) -> T {
        self.function.eval(x)
    }

    pub fn eval_side(&self, x: T, side: Side) -> T {
        self.function.eval_side(x, side)
    }

    /// `ψ(x+) − ψ(x−)`.
    pub fn jump(&self, x: T) -> T {
        self.eval_side(x, Side::Right) - self.eval_side(x, Side::Left)
    }

    pub fn is_piecewise_constant(&self) -> bool {
        self.pieces().iter().all(|p| p.as_constant().is_some())
    }

    pub fn is_identically_zero(&self) -> bool {
        self.pieces().iter().all(|p| p.as_constant() == Some(T::zero()))
    }
}

/// Local-time normalization used to turn a measure into a rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `ψ = density · σ`.
    #[default]
    PaperSigma,
    /// `ψ = density · σ²`.
    SemimartingaleSigma2,
}

impl Convention {
    pub fn factor<T: Real>(self, spec: &DiffusionSpec<T>, x: T) -> T {
        let s = spec.sigma(x);
        match self {
            Convention::PaperSigma => s,
            Convention::SemimartingaleSigma2 => s * s,
        }
    }

    fn constant_factor<T: Real>(self, spec: &DiffusionSpec<T>) -> Option<T> {
        spec.volatility.as_constant().map(|s| match self {
            Convention::PaperSigma => s,
            Convention::SemimartingaleSigma2 => s * s,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Convention::PaperSigma => "paper-sigma",
            Convention::SemimartingaleSigma2 => "semimartingale-sigma2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom<T> {
    pub y: T,
    pub w: T,
}

/// Radon measure on an open set `D` (finite union of disjoint open
/// intervals): an absolutely continuous part plus finitely many atoms.
#[derive(Debug, Clone)]
pub struct MeasureSpec<T> {
    domain: Vec<(T, T)>,
    density: PiecewiseFunction<T>,
    atoms: Vec<Atom<T>>,
}

impl<T: Real> MeasureSpec<T> {
    pub fn new(domain: Vec<(T, T)>, density: PiecewiseFunction<T>, atoms: Vec<Atom<T>>) -> Result<Self> {
        if domain.is_empty() {
            return Err(Error::InvalidInput("measure domain is empty".into()));
        }
        let mut domain = domain;
        domain.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (lo, hi) in &domain {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "domain component ({lo}, {hi}) must be a bounded nonempty interval"
                )));
            }
        }
        if domain.windows(2).any(|w| w[0].1 > w[1].0) {
            return Err(Error::InvalidInput("domain components overlap".into()));
        }
        for atom in &atoms {
            if !(atom.w > T::zero()) || !atom.w.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "atom at {} has weight {}; weights must be positive",
                    atom.y, atom.w
                )));
            }
            if !domain.iter().any(|(lo, hi)| atom.y > *lo && atom.y < *hi) {
                return Err(Error::Domain(format!(
                    "atom at {} lies outside the measure domain",
                    atom.y
                )));
            }
        }
        let m = Self {
            domain,
            density,
            atoms,
        };
        m.check_density()?;
        Ok(m)
    }

    /// The zero measure on `(lo, hi)`.
    pub fn zero(lo: T, hi: T) -> Result<Self> {
        Self::new(vec![(lo, hi)], PiecewiseFunction::constant(T::zero()), vec![])
    }

    fn check_density(&self) -> Result<()> {
        let tol = crate::numerics::quadrature::QuadratureTolerance::<T> {
            rel: T::lit(1e-6),
            abs: T::lit(1e-10),
            max_subintervals: 200,
        };
        for &(lo, hi) in &self.domain {
            let mut bps = vec![lo];
            bps.extend(self.density.knots_within(lo, hi));
            bps.push(hi);
            for w in bps.windows(2) {
                let i = self.density.piece_index(midpoint(w[0], w[1]), Side::Right);
                let piece = &self.density.pieces()[i];
                // Compact test set: the middle 98% of the piece.
                let pad = (w[1] - w[0]) * T::lit(0.01);
                let mass = crate::numerics::quadrature::integrate(
                    |x| piece.eval(x).abs(),
                    w[0] + pad,
                    w[1] - pad,
                    &tol,
                );
                let grid_ok = (1..=64).all(|k| {
                    let x = w[0] + (w[1] - w[0]) * T::from_count(k) / T::lit(65.0);
                    let v = piece.eval(x);
                    v.is_finite() && v >= T::zero()
                });
                if !grid_ok {
                    return Err(Error::InvalidInput(format!(
                        "density must be finite and nonnegative on ({}, {})",
                        w[0], w[1]
                    )));
                }
                if mass.is_err() {
                    return Err(Error::InvalidInput(format!(
                        "density is not integrable on compacts of ({}, {})",
                        w[0], w[1]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> &[(T, T)] {
        &self.domain
    }

    pub fn density(&self) -> &PiecewiseFunction<T> {
        &self.density
    }

    pub fn atoms(&self) -> &[Atom<T>] {
        &self.atoms
    }

    /// Sum of two measures on the same domain.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        if self.domain != other.domain {
            return Err(Error::InvalidInput("measures live on different domains".into()));
        }
        let mut atoms = self.atoms.clone();
        atoms.extend_from_slice(&other.atoms);
        Self::new(self.domain.clone(), self.density.add(&other.density), atoms)
    }
}

/// The rate driving the exponential clock, one [`PiecewiseRate`] per domain
/// component of `D`.
#[derive(Debug, Clone)]
pub struct ClockIntegrand<T> {
    components: Vec<PiecewiseRate<T>>,
    pub mollified_from_atoms: bool,
    pub eps: Option<T>,
    pub convention: Option<Convention>,
}

impl<T: Real> ClockIntegrand<T> {
    pub fn from_rate(rate: PiecewiseRate<T>) -> Self {
        Self {
            components: vec![rate],
            mollified_from_atoms: false,
            eps: None,
            convention: None,
        }
    }

    pub fn components(&self) -> &[PiecewiseRate<T>] {
        &self.components
    }

    /// The component whose closure contains `[lo, hi]`.
    pub fn component_covering(&self, lo: T, hi: T) -> Option<usize> {
        self.components
            .iter()
            .position(|c| c.lo() <= lo && c.hi() >= hi)
    }
}

/// Converts a measure into a clock rate under `convention`. Each atom
/// `(y, w)` becomes a rectangle of height `w κ(y) / (2 eps)` on
/// `(y − eps, y + eps)`, with `κ` the convention factor.
pub fn rate_from_measure<T: Real>(
    m: &MeasureSpec<T>,
    spec: &DiffusionSpec<T>,
    convention: Convention,
    eps: T,
) -> Result<ClockIntegrand<T>> {
    let has_atoms = !m.atoms.is_empty();
    if has_atoms && !(eps > T::zero()) {
        return Err(Error::Mollification(format!(
            "mollification width must be positive, got {eps}"
        )));
    }
    let two = T::lit(2.0);
    let density_factor = convention.constant_factor(spec);

    let mut components = Vec::with_capacity(m.domain.len());
    for &(lo, hi) in &m.domain {
        let knots = m.density.knots_within(lo, hi);
        let mut bumps: Vec<(T, T, T)> = m
            .atoms
            .iter()
            .filter(|a| a.y > lo && a.y < hi)
            .map(|a| (a.y - eps, a.y + eps, a.w * convention.factor(spec, a.y) / (two * eps)))
            .collect();
        bumps.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for &(l, r, _) in &bumps {
            if l <= lo || r >= hi {
                return Err(Error::Mollification(format!(
                    "bump ({l}, {r}) leaves the domain component ({lo}, {hi})"
                )));
            }
            if let Some(k) = knots.iter().find(|k| **k >= l && **k <= r) {
                return Err(Error::Mollification(format!(
                    "bump ({l}, {r}) overlaps density breakpoint {k}"
                )));
            }
        }
        if bumps.windows(2).any(|w| w[0].1 >= w[1].0) {
            return Err(Error::Mollification("mollified atoms overlap".into()));
        }

        let mut bps = vec![lo];
        bps.extend(knots.iter().copied());
        for &(l, r, _) in &bumps {
            bps.push(l);
            bps.push(r);
        }
        bps.push(hi);
        bps.sort_by(|a, b| a.partial_cmp(b).unwrap());

        let pieces = bps
            .windows(2)
            .map(|w| {
                let mid = midpoint(w[0], w[1]);
                let extra = bumps
                    .iter()
                    .find(|(l, r, _)| mid > *l && mid < *r)
                    .map(|b| b.2)
                    .unwrap_or_else(T::zero);
                let dens = m.density.pieces()[m.density.piece_index(mid, Side::Right)].clone();
                match (dens.as_constant(), density_factor) {
                    (Some(c), _) if c == T::zero() => Piece::Const(extra),
                    (Some(c), Some(k)) => Piece::Const(c * k + extra),
                    _ => {
                        let spec_sigma = spec.volatility.clone();
                        Piece::func(move |x| {
                            let s = Coefficient::eval(&spec_sigma, x);
                            let k = match convention {
                                Convention::PaperSigma => s,
                                Convention::SemimartingaleSigma2 => s * s,
                            };
                            dens.eval(x) * k + extra
                        })
                    }
                }
            })
            .collect();
        components.push(PiecewiseRate::new(bps, pieces)?);
    }

    Ok(ClockIntegrand {
        components,
        mollified_from_atoms: has_atoms,
        eps: if has_atoms { Some(eps) } else { None },
        convention: Some(convention),
    })
}

/// A stretch of a path step on which a single rate piece applies. State
/// and time vary linearly between the ends.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Substep<T> {
    pub t0: T,
    pub x0: T,
    pub t1: T,
    pub x1: T,
    pub psi0: T,
    pub psi1: T,
}

impl<T: Real> Substep<T> {
    /// Trapezoidal clock increment.
    #[inline]
    pub fn clock_increment(&self) -> T {
        T::lit(0.5) * (self.t1 - self.t0) * (self.psi0 + self.psi1)
    }
}

/// Splits the linear step `(t0, x0) → (t1, x1)` at every rate breakpoint it
/// straddles and feeds the pieces to `visit` in time order.
#[inline]
pub(crate) fn for_each_substep<T: Real>(
    rate: &PiecewiseRate<T>,
    t0: T,
    x0: T,
    t1: T,
    x1: T,
    mut visit: impl FnMut(Substep<T>) -> ControlFlow<()>,
) -> ControlFlow<()> {
    let f = rate.function();
    let up = x1 >= x0;
    // A step starting on a breakpoint belongs to the piece it moves into.
    let first = f.piece_index(x0, if up { Side::Right } else { Side::Left });
    let last = f.piece_index(x1, if up { Side::Left } else { Side::Right });
    if first == last {
        return visit(Substep {
            t0,
            x0,
            t1,
            x1,
            psi0: f.eval_piece(first, x0),
            psi1: f.eval_piece(first, x1),
        });
    }
    let bps = f.breakpoints();
    let dt = t1 - t0;
    let dx = x1 - x0;
    let mut ts = t0;
    let mut xs = x0;
    let mut piece = first;
    loop {
        let done = piece == last;
        let (xe, te) = if done {
            (x1, t1)
        } else {
            let xb = if up { bps[piece + 1] } else { bps[piece] };
            let te = t0 + dt * ((xb - x0) / dx);
            (xb, te.max(ts).min(t1))
        };
        visit(Substep {
            t0: ts,
            x0: xs,
            t1: te,
            x1: xe,
            psi0: f.eval_piece(piece, xs),
            psi1: f.eval_piece(piece, xe),
        })?;
        if done {
            return ControlFlow::Continue(());
        }
        ts = te;
        xs = xe;
        piece = if up { piece + 1 } else { piece - 1 };
    }
}

/// Cumulative clock `Φ` at every path timestamp, `Φ_0 = 0`.
pub fn integrate_rate_along_path<T: Real>(psi: &ClockIntegrand<T>, path: &Path<T>) -> Vec<T> {
    let mut phi = Vec::with_capacity(path.times.len());
    if path.times.is_empty() {
        return phi;
    }
    let rate = psi
        .components()
        .iter()
        .find(|c| c.lo() <= path.states[0] && c.hi() >= path.states[0])
        .unwrap_or(&psi.components()[0]);
    let mut acc = T::zero();
    phi.push(acc);
    for k in 1..path.times.len() {
        let _ = for_each_substep(
            rate,
            path.times[k - 1],
            path.states[k - 1],
            path.times[k],
            path.states[k],
            |s| {
                acc += s.clock_increment();
                ControlFlow::Continue(())
            },
        );
        phi.push(acc);
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::Preset;
    use crate::sampler::{ExitKind, Path};

    fn flat_path(x: f64, duration: f64, steps: usize) -> Path<f64> {
        let h = duration / steps as f64;
        Path {
            times: (0..=steps).map(|k| k as f64 * h).collect(),
            states: vec![x; steps + 1],
            exit: ExitKind::Censored,
            exit_time: duration,
            exit_state: x,
        }
    }

    #[test]
    fn zero_rate_gives_zero_clock() {
        let clock = ClockIntegrand::from_rate(PiecewiseRate::zero(0.0, 1.0).unwrap());
        let phi = integrate_rate_along_path(&clock, &flat_path(0.4, 2.0, 10));
        assert!(phi.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_rate_integrates_to_rate_times_duration() {
        let clock = ClockIntegrand::from_rate(PiecewiseRate::constant(0.0, 1.0, 3.0).unwrap());
        let phi = integrate_rate_along_path(&clock, &flat_path(0.4, 2.0, 7));
        assert!((phi.last().unwrap() - 6.0).abs() < 1e-14);
    }

    #[test]
    fn single_piece_evaluation() {
        let rate = PiecewiseRate::steps(vec![0.0, 0.5, 1.0], &[1.0, 4.0]).unwrap();
        let clock = ClockIntegrand::from_rate(rate);
        let phi = integrate_rate_along_path(&clock, &flat_path(0.25, 2.0, 5));
        assert!((phi.last().unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn straddling_step_is_split_at_the_crossing() {
        let rate = PiecewiseRate::steps(vec![0.0, 0.5, 1.0], &[1.0, 4.0]).unwrap();
        let mut total = 0.0f64;
        let mut pieces = 0;
        let _ = for_each_substep(&rate, 0.0, 0.25, 1.0, 0.75, |s| {
            total += s.clock_increment();
            pieces += 1;
            ControlFlow::Continue(())
        });
        assert_eq!(pieces, 2);
        assert!((total - 2.5).abs() < 1e-14);
        let mut down = 0.0f64;
        let _ = for_each_substep(&rate, 0.0, 0.75, 1.0, 0.25, |s| {
            down += s.clock_increment();
            ControlFlow::Continue(())
        });
        assert!((down - 2.5).abs() < 1e-14);
    }

    #[test]
    fn negative_piece_is_rejected() {
        let err = PiecewiseRate::steps(vec![0.0, 0.5, 1.0], &[1.0, -2.0]);
        assert!(matches!(err, Err(Error::InvalidRate(msg)) if msg.contains("nonnegative")));
    }

    #[test]
    fn density_over_sigma_recovers_rate_under_sigma_convention() {
        let gbm = DiffusionSpec::from_preset(&Preset::Gbm { mu: 0.1, sigma: 0.5 }).unwrap();
        let c = 2.5;
        let density = PiecewiseFunction::single(Piece::func(move |x: f64| c / (0.5 * x)));
        let m = MeasureSpec::new(vec![(0.5, 2.0)], density, vec![]).unwrap();
        let clock = rate_from_measure(&m, &gbm, Convention::PaperSigma, 0.0).unwrap();
        let rate = &clock.components()[0];
        for k in 1..20 {
            let x = 0.5 + 1.5 * k as f64 / 20.0;
            assert!((rate.eval(x) - c).abs() < 1e-12);
        }
        assert!(!clock.mollified_from_atoms);
    }

    #[test]
    fn empty_measure_gives_zero_rate() {
        let bm = DiffusionSpec::from_preset(&Preset::<f64>::Bm).unwrap();
        let m = MeasureSpec::zero(0.0, 1.0).unwrap();
        let clock = rate_from_measure(&m, &bm, Convention::PaperSigma, 0.01).unwrap();
        assert!(clock.components()[0].is_identically_zero());
    }

    #[test]
    fn atom_becomes_rectangular_bump() {
        let bm = DiffusionSpec::from_preset(&Preset::<f64>::Bm).unwrap();
        let m = MeasureSpec::new(
            vec![(0.0, 1.0)],
            PiecewiseFunction::constant(0.0),
            vec![Atom { y: 0.5, w: 1.0 }],
        )
        .unwrap();
        let clock = rate_from_measure(&m, &bm, Convention::SemimartingaleSigma2, 0.01).unwrap();
        let rate = &clock.components()[0];
        assert_eq!(rate.breakpoints().len(), 4);
        assert!((rate.breakpoints()[1] - 0.49).abs() < 1e-15);
        assert!((rate.breakpoints()[2] - 0.51).abs() < 1e-15);
        assert!((rate.eval(0.5) - 50.0).abs() < 1e-9);
        assert_eq!(rate.eval(0.3), 0.0);
        assert!(clock.mollified_from_atoms);
        assert_eq!(clock.eps, Some(0.01));
    }

    #[test]
    fn overlapping_bumps_are_rejected() {
        let bm = DiffusionSpec::from_preset(&Preset::<f64>::Bm).unwrap();
        let m = MeasureSpec::new(
            vec![(0.0, 1.0)],
            PiecewiseFunction::constant(0.0),
            vec![Atom { y: 0.5, w: 1.0 }, Atom { y: 0.51, w: 1.0 }],
        )
        .unwrap();
        assert!(matches!(
            rate_from_measure(&m, &bm, Convention::PaperSigma, 0.01),
            Err(Error::Mollification(_))
        ));
        assert!(matches!(
            rate_from_measure(&m, &bm, Convention::PaperSigma, 0.0),
            Err(Error::Mollification(_))
        ));
    }

    #[test]
    fn atom_outside_domain_is_a_domain_error() {
        let err = MeasureSpec::new(
            vec![(0.0, 1.0)],
            PiecewiseFunction::constant(0.0),
            vec![Atom { y: 1.5, w: 1.0 }],
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn one_sided_limits_of_callables_are_extrapolated() {
        let f = PiecewiseFunction::new(
            vec![0.0, 1.0, 2.0],
            vec![Piece::func(|x: f64| x * x), Piece::func(|x: f64| 3.0 + x)],
        )
        .unwrap();
        assert!((f.eval_side(1.0, Side::Left) - 1.0).abs() < 1e-9);
        assert!((f.eval_side(1.0, Side::Right) - 4.0).abs() < 1e-9);
    }
}

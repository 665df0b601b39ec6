//! Finite-difference kernel for
//! `(σ²/2)u'' + μu' − κ(x)u = −f(x)` on a chain of segments with Dirichlet
//! data at the outer ends.
//!
//! Every segment gets its own uniform sub-mesh, so each breakpoint is a grid
//! node. Interior nodes use second-order central differences. A breakpoint
//! node carries one shared unknown (continuity) and one gluing row built from
//! the one-sided three-point derivative stencils of its two segments. The two
//! outer stencil entries of a gluing row are eliminated with the neighbouring
//! interior rows, which keeps the whole system tridiagonal.

use serde::{Deserialize, Serialize};

use crate::diffusion::DiffusionSpec;
use crate::error::{Error, Result};
use crate::numerics::linalg::solve_tridiagonal;
use crate::real::{Real, Side};

/// Gluing condition imposed at interior breakpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterfaceRule {
    /// Matching one-sided first derivatives (C¹ gluing).
    #[default]
    SmoothFit,
    /// `J'(x_i+) = 0`. Wrong on purpose; exists for negative controls.
    ZeroDerivative,
}

/// Coefficient callback: `(segment index, x)`. Never called at breakpoints.
pub(crate) type SegmentFn<'a, T> = &'a dyn Fn(usize, T) -> T;

pub(crate) struct LinearBvp<'a, T> {
    pub diffusion: &'a DiffusionSpec<T>,
    /// `a = x_0 < x_1 < … < x_n = b`.
    pub breakpoints: Vec<T>,
    pub kappa: SegmentFn<'a, T>,
    pub source: SegmentFn<'a, T>,
    pub left_value: T,
    pub right_value: T,
    pub mesh: T,
    pub rule: InterfaceRule,
}

pub(crate) const MIN_CELLS: usize = 4;

/// Nodal solution on one segment.
#[derive(Debug, Clone, Serialize)]
pub struct GridSegment<T> {
    pub lo: T,
    pub hi: T,
    pub step: T,
    pub values: Vec<T>,
    /// First derivative: central inside, one-sided three-point at the ends.
    pub d1: Vec<T>,
    /// Second derivative: central inside, one-sided four-point at the ends.
    pub d2: Vec<T>,
}

impl<T: Real> GridSegment<T> {
    fn new(lo: T, hi: T, values: Vec<T>) -> Self {
        let m = values.len() - 1;
        let step = (hi - lo) / T::from_count(m);
        let v = &values;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let four = T::lit(4.0);
        let five = T::lit(5.0);
        let h2 = step * step;

        let mut d1 = vec![T::zero(); m + 1];
        let mut d2 = vec![T::zero(); m + 1];
        for k in 1..m {
            d1[k] = (v[k + 1] - v[k - 1]) / (two * step);
            d2[k] = (v[k + 1] - two * v[k] + v[k - 1]) / h2;
        }
        d1[0] = (-three * v[0] + four * v[1] - v[2]) / (two * step);
        d1[m] = (three * v[m] - four * v[m - 1] + v[m - 2]) / (two * step);
        d2[0] = (two * v[0] - five * v[1] + four * v[2] - v[3]) / h2;
        d2[m] = (two * v[m] - five * v[m - 1] + four * v[m - 2] - v[m - 3]) / h2;
        Self {
            lo,
            hi,
            step,
            values,
            d1,
            d2,
        }
    }

    pub fn node(&self, k: usize) -> T {
        if k + 1 == self.values.len() {
            self.hi
        } else {
            self.lo + self.step * T::from_count(k)
        }
    }

    /// Cubic Hermite value and slope, linear second derivative.
    pub fn eval(&self, x: T) -> (T, T, T) {
        let m = self.values.len() - 1;
        let s = ((x - self.lo) / self.step).max(T::zero());
        let k = s.floor().to_usize().unwrap_or(0).min(m - 1);
        let t = (s - T::from_count(k)).max(T::zero()).min(T::one());
        let h = self.step;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.d1[k] * h, self.d1[k + 1] * h);
        let one = T::one();
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let t2 = t * t;
        let t3 = t2 * t;
        let value = (two * t3 - three * t2 + one) * y0
            + (t3 - two * t2 + t) * m0
            + (-two * t3 + three * t2) * y1
            + (t3 - t2) * m1;
        let six = T::lit(6.0);
        let four = T::lit(4.0);
        let slope = ((six * t2 - six * t) * y0
            + (three * t2 - four * t + one) * m0
            + (-six * t2 + six * t) * y1
            + (three * t2 - two * t) * m1)
            / h;
        let curvature = (one - t) * self.d2[k] + t * self.d2[k + 1];
        (value, slope, curvature)
    }
}

/// Nodal solution on all segments.
#[derive(Debug, Clone, Serialize)]
pub struct FdGrid<T> {
    pub segments: Vec<GridSegment<T>>,
}

impl<T: Real> FdGrid<T> {
    pub(crate) fn locate(&self, x: T, side: Side) -> usize {
        let n = self.segments.len();
        let idx = match side {
            Side::Right => self.segments.partition_point(|s| s.hi <= x),
            Side::Left => self.segments.partition_point(|s| s.hi < x),
        };
        idx.min(n - 1)
    }

    pub fn eval(&self, x: T, side: Side) -> (T, T, T) {
        self.segments[self.locate(x, side)].eval(x)
    }

    pub fn value(&self, x: T, side: Side) -> T {
        self.eval(x, side).0
    }
}

fn domain_error<T: Real>(name: &'static str, x: T) -> Error {
    Error::CoefficientDomain {
        name,
        x: x.as_f64(),
        reason: "non-finite value at a grid node",
    }
}

pub(crate) fn cells_for<T: Real>(lo: T, hi: T, mesh: T) -> usize {
    let c = ((hi - lo) / mesh).ceil().to_usize().unwrap_or(MIN_CELLS);
    c.max(MIN_CELLS)
}

pub(crate) fn solve_linear_bvp<T: Real>(p: &LinearBvp<'_, T>) -> Result<FdGrid<T>> {
    let bps = &p.breakpoints;
    if bps.len() < 2 || bps.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput(
            "breakpoints must be strictly increasing".into(),
        ));
    }
    if !(p.mesh > T::zero()) {
        return Err(Error::InvalidInput(format!("mesh width must be positive, got {}", p.mesh)));
    }
    let nseg = bps.len() - 1;
    let cells: Vec<usize> = bps.windows(2).map(|w| cells_for(w[0], w[1], p.mesh)).collect();
    let mut offsets = Vec::with_capacity(nseg + 1);
    let mut acc = 0usize;
    for c in &cells {
        offsets.push(acc);
        acc += c;
    }
    offsets.push(acc);
    let n = acc + 1;

    let mut sub = vec![T::zero(); n];
    let mut diag = vec![T::zero(); n];
    let mut sup = vec![T::zero(); n];
    let mut rhs = vec![T::zero(); n];
    let half = T::lit(0.5);
    let two = T::lit(2.0);

    for seg in 0..nseg {
        let (lo, hi) = (bps[seg], bps[seg + 1]);
        let m = cells[seg];
        let h = (hi - lo) / T::from_count(m);
        for k in 1..m {
            let x = lo + h * T::from_count(k);
            let (mu, sigma) = p.diffusion.coefficients_at(x)?;
            let kappa = (p.kappa)(seg, x);
            if !kappa.is_finite() {
                return Err(domain_error("r + psi", x));
            }
            let f = (p.source)(seg, x);
            if !f.is_finite() {
                return Err(domain_error("psi * g", x));
            }
            let a = half * sigma * sigma / (h * h);
            let b = mu / (two * h);
            let row = offsets[seg] + k;
            sub[row] = a - b;
            diag[row] = -two * a - kappa;
            sup[row] = a + b;
            rhs[row] = -f;
        }
    }

    diag[0] = T::one();
    rhs[0] = p.left_value;
    diag[n - 1] = T::one();
    rhs[n - 1] = p.right_value;

    let three = T::lit(3.0);
    let four = T::lit(4.0);
    for i in 1..nseg {
        let j = offsets[i];
        let hl = (bps[i] - bps[i - 1]) / T::from_count(cells[i - 1]);
        let hr = (bps[i + 1] - bps[i]) / T::from_count(cells[i]);
        // Entries for J_{j-2}, J_{j-1}, J_j, J_{j+1}, J_{j+2}.
        let mut e = match p.rule {
            InterfaceRule::SmoothFit => {
                let (l, r) = (T::one() / (two * hl), T::one() / (two * hr));
                [l, -four * l, three * l + three * r, -four * r, r]
            }
            InterfaceRule::ZeroDerivative => {
                let r = T::one() / (two * hr);
                [T::zero(), T::zero(), -three * r, four * r, -r]
            }
        };
        let mut b = T::zero();
        let below = j - 1;
        if e[0] != T::zero() {
            if sub[below] == T::zero() {
                return Err(Error::Singular(format!(
                    "vanishing stencil coefficient next to breakpoint {}; refine the mesh",
                    bps[i]
                )));
            }
            let factor = e[0] / sub[below];
            e[1] -= factor * diag[below];
            e[2] -= factor * sup[below];
            b -= factor * rhs[below];
        }
        let above = j + 1;
        if sup[above] == T::zero() {
            return Err(Error::Singular(format!(
                "vanishing stencil coefficient next to breakpoint {}; refine the mesh",
                bps[i]
            )));
        }
        let factor = e[4] / sup[above];
        e[2] -= factor * sub[above];
        e[3] -= factor * diag[above];
        b -= factor * rhs[above];

        let scale = two * hl.min(hr);
        sub[j] = e[1] * scale;
        diag[j] = e[2] * scale;
        sup[j] = e[3] * scale;
        rhs[j] = b * scale;
    }

    let solution = solve_tridiagonal(&sub, &diag, &sup, &rhs).map_err(|row| {
        Error::Singular(format!("zero pivot in finite-difference system at row {row}"))
    })?;

    let segments = (0..nseg)
        .map(|seg| {
            let values = solution[offsets[seg]..=offsets[seg + 1]].to_vec();
            GridSegment::new(bps[seg], bps[seg + 1], values)
        })
        .collect();
    Ok(FdGrid { segments })
}

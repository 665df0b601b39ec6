//! The differential route: `J` solves `(σ²/2)J'' + μJ' − (r + ψ)J = −ψg` on
//! each piece of `(a, b)`, glued C⁰/C¹ at the breakpoints, with `J = g` at
//! both ends.

pub mod fd;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::linalg::{solve_dense, DenseMatrix};
use crate::problem::RewardProblem;
use crate::rate::{midpoint, Piece};
use crate::real::{Real, Side};

pub use fd::{FdGrid, GridSegment, InterfaceRule};
use fd::{solve_linear_bvp, LinearBvp};

/// Condition limit for the dense gluing system in double precision.
pub const CONDITION_LIMIT: f64 = 1e12;

fn condition_limit<T: Real>() -> T {
    T::lit(CONDITION_LIMIT).min(T::lit(0.1) / T::epsilon())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Analytic,
    FiniteDifference,
}

/// `c·e^{γ⁺(x − hi)} + d·e^{γ⁻(x − lo)} + p(x)` on `[lo, hi]`, or
/// `c + d·(x − lo) + p(x)` when both roots vanish.
#[derive(Debug, Clone, Serialize)]
pub struct ClosedFormSegment<T> {
    pub lo: T,
    pub hi: T,
    pub gamma_plus: T,
    pub gamma_minus: T,
    pub degenerate: bool,
    pub c: T,
    pub d: T,
    /// Particular solution, coefficients in increasing degree of `x`.
    pub particular: Vec<T>,
}

impl<T: Real> ClosedFormSegment<T> {
    /// Basis values and their first two derivatives at `x`.
    fn basis(&self, x: T) -> [[T; 3]; 2] {
        if self.degenerate {
            [
                [T::one(), T::zero(), T::zero()],
                [x - self.lo, T::one(), T::zero()],
            ]
        } else {
            let (gp, gm) = (self.gamma_plus, self.gamma_minus);
            let e1 = (gp * (x - self.hi)).exp();
            let e2 = (gm * (x - self.lo)).exp();
            [[e1, gp * e1, gp * gp * e1], [e2, gm * e2, gm * gm * e2]]
        }
    }

    pub fn eval(&self, x: T) -> (T, T, T) {
        let [b1, b2] = self.basis(x);
        let (p, dp, ddp) = poly_eval(&self.particular, x);
        (
            self.c * b1[0] + self.d * b2[0] + p,
            self.c * b1[1] + self.d * b2[1] + dp,
            self.c * b1[2] + self.d * b2[2] + ddp,
        )
    }
}

/// Value, first and second derivative of a polynomial.
fn poly_eval<T: Real>(coeffs: &[T], x: T) -> (T, T, T) {
    let mut p = T::zero();
    let mut dp = T::zero();
    let mut ddp = T::zero();
    for &c in coeffs.iter().rev() {
        ddp = ddp * x + dp * T::lit(2.0);
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp, ddp)
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Representation<T> {
    ClosedForm { segments: Vec<ClosedFormSegment<T>> },
    Grid { grid: FdGrid<T> },
}

/// `J` on `[a, b]` with one-sided accessors at breakpoints.
#[derive(Debug, Clone, Serialize)]
pub struct PiecewiseSolution<T> {
    /// `a`, every interior breakpoint, `b`.
    pub breakpoints: Vec<T>,
    pub representation: Representation<T>,
    pub method: Method,
    pub rule: InterfaceRule,
    pub mesh: Option<T>,
    /// Condition estimate of the gluing system (closed form only).
    pub condition: Option<T>,
}

impl<T: Real> PiecewiseSolution<T> {
    pub fn a(&self) -> T {
        self.breakpoints[0]
    }

    pub fn b(&self) -> T {
        *self.breakpoints.last().unwrap()
    }

    pub fn interior_breakpoints(&self) -> &[T] {
        &self.breakpoints[1..self.breakpoints.len() - 1]
    }

    fn segment_index(&self, x: T, side: Side) -> usize {
        let inner = self.interior_breakpoints();
        match side {
            Side::Right => inner.partition_point(|k| *k <= x),
            Side::Left => inner.partition_point(|k| *k < x),
        }
    }

    /// `(J, J', J'')` at `x`, using the piece on `side` at breakpoints.
    pub fn eval_side(&self, x: T, side: Side) -> (T, T, T) {
        let x = x.max(self.a()).min(self.b());
        let i = self.segment_index(x, side);
        match &self.representation {
            Representation::ClosedForm { segments } => segments[i].eval(x),
            Representation::Grid { grid } => grid.segments[i].eval(x),
        }
    }

    pub fn value(&self, x: T) -> T {
        self.eval_side(x, Side::Right).0
    }

    pub fn value_side(&self, x: T, side: Side) -> T {
        self.eval_side(x, side).0
    }

    pub fn derivative(&self, x: T, side: Side) -> T {
        self.eval_side(x, side).1
    }

    pub fn second_derivative(&self, x: T, side: Side) -> T {
        self.eval_side(x, side).2
    }

    /// Mutable access to closed-form coefficients.
    pub fn closed_form_segments_mut(&mut self) -> Option<&mut Vec<ClosedFormSegment<T>>> {
        match &mut self.representation {
            Representation::ClosedForm { segments } => Some(segments),
            Representation::Grid { .. } => None,
        }
    }
}

/// `J(a)` and `J(b)`: the payoff read from inside `[a, b]`.
pub fn boundary_values<T: Real>(problem: &RewardProblem<T>) -> (T, T) {
    (
        problem.g.eval_side(problem.iv.a, Side::Right),
        problem.g.eval_side(problem.iv.b, Side::Left),
    )
}

/// Union of the rate breakpoints and the payoff knots inside `(a, b)`.
fn solution_breakpoints<T: Real>(problem: &RewardProblem<T>) -> Vec<T> {
    let (a, b) = (problem.iv.a, problem.iv.b);
    let mut pts = problem.rate_knots();
    pts.extend(problem.g.knots_within(a, b));
    pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    pts.dedup();
    let mut out = vec![a];
    out.extend(pts);
    out.push(b);
    out
}

pub fn solve_analytic<T: Real>(problem: &RewardProblem<T>) -> Result<PiecewiseSolution<T>> {
    solve_analytic_with_rule(problem, InterfaceRule::SmoothFit)
}

pub fn solve_analytic_with_rule<T: Real>(
    problem: &RewardProblem<T>,
    rule: InterfaceRule,
) -> Result<PiecewiseSolution<T>> {
    problem.require_interval_domain()?;
    let (mu, sigma) = problem.spec.constant_coefficients().ok_or_else(|| {
        Error::NotApplicable("closed form needs constant drift and volatility".into())
    })?;
    let bps = solution_breakpoints(problem);
    let n = bps.len() - 1;
    let rate = problem.rate().function();
    let half_var = T::lit(0.5) * sigma * sigma;
    let two = T::lit(2.0);

    let mut segments = Vec::with_capacity(n);
    for w in bps.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = midpoint(lo, hi);
        let psi = rate.pieces()[rate.piece_index(mid, Side::Right)]
            .as_constant()
            .ok_or_else(|| Error::NotApplicable("closed form needs a piecewise-constant rate".into()))?;
        let g = problem.g.pieces()[problem.g.piece_index(mid, Side::Right)]
            .as_polynomial()
            .ok_or_else(|| Error::NotApplicable("closed form needs a piecewise-polynomial payoff".into()))?;
        let kappa = problem.r + psi;
        let degenerate = kappa == T::zero() && mu == T::zero();
        let (gamma_plus, gamma_minus) = if degenerate {
            (T::zero(), T::zero())
        } else {
            let disc = (mu * mu + two * sigma * sigma * kappa).sqrt();
            let var = sigma * sigma;
            ((-mu + disc) / var, (-mu - disc) / var)
        };
        // κ = 0 forces ψ = 0, so the source and the particular part vanish.
        let particular = if kappa == T::zero() {
            vec![T::zero()]
        } else {
            let f: Vec<T> = g.iter().map(|c| psi * *c).collect();
            let deg = f.len() - 1;
            let mut p = vec![T::zero(); f.len()];
            for k in (0..=deg).rev() {
                let mut acc = f[k];
                if k + 1 <= deg {
                    acc += mu * T::from_count(k + 1) * p[k + 1];
                }
                if k + 2 <= deg {
                    acc += half_var * T::from_count((k + 2) * (k + 1)) * p[k + 2];
                }
                p[k] = acc / kappa;
            }
            p
        };
        segments.push(ClosedFormSegment {
            lo,
            hi,
            gamma_plus,
            gamma_minus,
            degenerate,
            c: T::zero(),
            d: T::zero(),
            particular,
        });
    }

    let (ga, gb) = boundary_values(problem);
    let dim = 2 * n;
    let mut m = DenseMatrix::zeros(dim);
    let mut rhs = vec![T::zero(); dim];
    let put = |m: &mut DenseMatrix<T>, row: usize, seg: usize, basis: [[T; 3]; 2], order: usize, sign: T| {
        m.set(row, 2 * seg, m.get(row, 2 * seg) + sign * basis[0][order]);
        m.set(row, 2 * seg + 1, m.get(row, 2 * seg + 1) + sign * basis[1][order]);
    };

    let first = &segments[0];
    put(&mut m, 0, 0, first.basis(bps[0]), 0, T::one());
    rhs[0] = ga - poly_eval(&first.particular, bps[0]).0;
    for i in 1..n {
        let x = bps[i];
        let (left, right) = (&segments[i - 1], &segments[i]);
        let (bl, br) = (left.basis(x), right.basis(x));
        let (pl, pr) = (poly_eval(&left.particular, x), poly_eval(&right.particular, x));
        let row = 2 * i - 1;
        put(&mut m, row, i - 1, bl, 0, T::one());
        put(&mut m, row, i, br, 0, -T::one());
        rhs[row] = pr.0 - pl.0;
        match rule {
            InterfaceRule::SmoothFit => {
                put(&mut m, row + 1, i - 1, bl, 1, T::one());
                put(&mut m, row + 1, i, br, 1, -T::one());
                rhs[row + 1] = pr.1 - pl.1;
            }
            InterfaceRule::ZeroDerivative => {
                put(&mut m, row + 1, i, br, 1, T::one());
                rhs[row + 1] = -pr.1;
            }
        }
    }
    let last = &segments[n - 1];
    put(&mut m, dim - 1, n - 1, last.basis(bps[n]), 0, T::one());
    rhs[dim - 1] = gb - poly_eval(&last.particular, bps[n]).0;

    let limit = condition_limit::<T>();
    let sol = solve_dense(&m, &rhs).ok_or_else(|| Error::IllConditioned {
        condition: f64::INFINITY,
        limit: limit.as_f64(),
        context: format!("singular {dim}x{dim} gluing system"),
    })?;
    if !(sol.condition <= limit) {
        return Err(Error::IllConditioned {
            condition: sol.condition.as_f64(),
            limit: limit.as_f64(),
            context: format!(
                "{dim}x{dim} gluing system over {n} segments; breakpoints {:?}",
                bps.iter().map(|v| v.as_f64()).collect::<Vec<_>>()
            ),
        });
    }
    for (i, seg) in segments.iter_mut().enumerate() {
        seg.c = sol.x[2 * i];
        seg.d = sol.x[2 * i + 1];
    }

    Ok(PiecewiseSolution {
        breakpoints: bps,
        representation: Representation::ClosedForm { segments },
        method: Method::Analytic,
        rule,
        mesh: None,
        condition: Some(sol.condition),
    })
}

pub fn solve_fd<T: Real>(problem: &RewardProblem<T>, mesh: T) -> Result<PiecewiseSolution<T>> {
    solve_fd_with_rule(problem, mesh, InterfaceRule::SmoothFit)
}

pub fn solve_fd_with_rule<T: Real>(
    problem: &RewardProblem<T>,
    mesh: T,
    rule: InterfaceRule,
) -> Result<PiecewiseSolution<T>> {
    problem.require_interval_domain()?;
    if !(mesh > T::zero()) || !mesh.is_finite() {
        return Err(Error::InvalidInput(format!("mesh width must be positive, got {mesh}")));
    }
    let rate = problem.rate().function();
    let raw = solution_breakpoints(problem);

    // Each segment keeps the rate piece covering it; short pieces are
    // absorbed by their wider neighbour.
    let mut bps = vec![raw[0]];
    let mut pieces: Vec<usize> = Vec::new();
    let min_width = T::lit(10.0) * mesh;
    let piece_of = |lo: T, hi: T| rate.piece_index(midpoint(lo, hi), Side::Right);
    let mut k = 0;
    let raw_n = raw.len() - 1;
    let widths: Vec<T> = raw.windows(2).map(|w| w[1] - w[0]).collect();
    while k < raw_n {
        let (lo, hi) = (raw[k], raw[k + 1]);
        let w = widths[k];
        if w < min_width && raw_n > 1 {
            let left_wider = k > 0 && (k + 1 == raw_n || widths[k - 1] >= widths[k + 1]);
            if left_wider && !pieces.is_empty() {
                log::warn!(
                    "piece ({lo}, {hi}) is narrower than 10 mesh widths; merged into its left neighbour"
                );
                bps.pop();
                bps.push(hi);
                k += 1;
                continue;
            }
            if k + 1 < raw_n {
                log::warn!(
                    "piece ({lo}, {hi}) is narrower than 10 mesh widths; merged into its right neighbour"
                );
                pieces.push(piece_of(raw[k + 1], raw[k + 2]));
                bps.push(raw[k + 2]);
                k += 2;
                continue;
            }
        }
        pieces.push(piece_of(lo, hi));
        bps.push(hi);
        k += 1;
    }

    let r = problem.r;
    let rp = rate.pieces();
    let kappa = |seg: usize, x: T| r + rp[pieces[seg]].eval(x);
    let g = &problem.g;
    let source = |seg: usize, x: T| rp[pieces[seg]].eval(x) * g.eval(x);
    let (ga, gb) = boundary_values(problem);
    let grid = solve_linear_bvp(&LinearBvp {
        diffusion: &problem.spec,
        breakpoints: bps.clone(),
        kappa: &kappa,
        source: &source,
        left_value: ga,
        right_value: gb,
        mesh,
        rule,
    })?;
    Ok(PiecewiseSolution {
        breakpoints: bps,
        representation: Representation::Grid { grid },
        method: Method::FiniteDifference,
        rule,
        mesh: Some(mesh),
        condition: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentResidual<T> {
    pub lo: T,
    pub hi: T,
    pub max_residual: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterfaceMismatch<T> {
    pub x: T,
    pub value: T,
    pub derivative: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualTolerances<T> {
    pub residual: T,
    pub continuity: T,
    pub derivative: T,
    pub boundary: T,
}

/// Numerical certificate that a candidate satisfies the glued problem.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualReport<T> {
    pub method: Method,
    pub segments: Vec<SegmentResidual<T>>,
    pub interfaces: Vec<InterfaceMismatch<T>>,
    pub boundary_error: (T, T),
    pub tolerances: ResidualTolerances<T>,
    pub continuity_ok: bool,
    pub derivative_ok: bool,
    pub residual_ok: bool,
    pub boundary_ok: bool,
    pub pass: bool,
}

const RESIDUAL_SAMPLES: usize = 64;

pub fn residual_report<T: Real>(
    sol: &PiecewiseSolution<T>,
    problem: &RewardProblem<T>,
) -> ResidualReport<T> {
    let rate = problem.rate().function();
    let nseg = sol.breakpoints.len() - 1;
    let mut max_j = T::zero();
    let mut max_f = T::zero();
    let mut raw = Vec::with_capacity(nseg);

    let mut check = |x: T, seg_mid: T, j: (T, T, T)| -> T {
        let pi = rate.piece_index(seg_mid, Side::Right);
        let psi = rate.pieces()[pi].eval(x);
        let f = psi * problem.g.eval(x);
        let (mu, sigma) = (problem.spec.mu(x), problem.spec.sigma(x));
        max_j = max_j.max(j.0.abs());
        max_f = max_f.max(f.abs());
        (T::lit(0.5) * sigma * sigma * j.2 + mu * j.1 - (problem.r + psi) * j.0 + f).abs()
    };

    for s in 0..nseg {
        let (lo, hi) = (sol.breakpoints[s], sol.breakpoints[s + 1]);
        let mid = midpoint(lo, hi);
        let mut worst = T::zero();
        match &sol.representation {
            Representation::ClosedForm { segments } => {
                for k in 1..RESIDUAL_SAMPLES {
                    let x = lo + (hi - lo) * T::from_count(k) / T::from_count(RESIDUAL_SAMPLES);
                    worst = worst.max(check(x, mid, segments[s].eval(x)));
                }
            }
            Representation::Grid { grid } => {
                let seg = &grid.segments[s];
                for k in 1..seg.values.len() - 1 {
                    let x = seg.node(k);
                    worst = worst.max(check(x, mid, (seg.values[k], seg.d1[k], seg.d2[k])));
                }
            }
        }
        raw.push(SegmentResidual {
            lo,
            hi,
            max_residual: worst,
        });
    }

    let interfaces: Vec<InterfaceMismatch<T>> = sol
        .interior_breakpoints()
        .iter()
        .map(|&x| {
            let l = sol.eval_side(x, Side::Left);
            let r = sol.eval_side(x, Side::Right);
            InterfaceMismatch {
                x,
                value: (r.0 - l.0).abs(),
                derivative: (r.1 - l.1).abs(),
            }
        })
        .collect();
    let (ga, gb) = boundary_values(problem);
    let boundary_error = (
        (sol.value_side(sol.a(), Side::Right) - ga).abs(),
        (sol.value_side(sol.b(), Side::Left) - gb).abs(),
    );

    let scale = T::one() + max_j + max_f;
    let eps = T::epsilon();
    let tolerances = match sol.mesh {
        None => {
            let t = T::lit(1e-8).max(T::lit(100.0) * eps) * scale;
            ResidualTolerances {
                residual: t,
                continuity: t,
                derivative: t,
                boundary: t,
            }
        }
        Some(h) => {
            let t = T::lit(10.0) * h * h * scale;
            ResidualTolerances {
                residual: t + T::lit(100.0) * eps * scale / (h * h),
                continuity: t,
                derivative: t + T::lit(100.0) * eps * scale / h,
                boundary: T::lit(100.0) * eps * scale,
            }
        }
    };
    let continuity_ok = interfaces.iter().all(|m| m.value <= tolerances.continuity);
    let derivative_ok = interfaces.iter().all(|m| m.derivative <= tolerances.derivative);
    let residual_ok = raw.iter().all(|s| s.max_residual <= tolerances.residual);
    let boundary_ok =
        boundary_error.0 <= tolerances.boundary && boundary_error.1 <= tolerances.boundary;
    ResidualReport {
        method: sol.method,
        segments: raw,
        interfaces,
        boundary_error,
        tolerances,
        continuity_ok,
        derivative_ok,
        residual_ok,
        boundary_ok,
        pass: continuity_ok && derivative_ok && residual_ok && boundary_ok,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SecondDerivativeJump<T> {
    pub x: T,
    pub measured: T,
    pub predicted: T,
}

/// `J''(x_i+) − J''(x_i−)` measured on `sol` against the value implied by the
/// equation on both sides, `(2/σ²)(Δψ·J − Δ(ψg))`. `i` indexes
/// `sol.breakpoints` and must be interior.
pub fn second_derivative_jump<T: Real>(
    sol: &PiecewiseSolution<T>,
    problem: &RewardProblem<T>,
    i: usize,
) -> Result<SecondDerivativeJump<T>> {
    if i == 0 || i + 1 >= sol.breakpoints.len() {
        return Err(Error::InvalidInput(format!(
            "breakpoint index {i} is not interior (valid: 1..{})",
            sol.breakpoints.len() - 1
        )));
    }
    let x = sol.breakpoints[i];
    let measured = sol.second_derivative(x, Side::Right) - sol.second_derivative(x, Side::Left);
    let rate = problem.rate();
    let (psi_l, psi_r) = (rate.eval_side(x, Side::Left), rate.eval_side(x, Side::Right));
    let (g_l, g_r) = (problem.g.eval_side(x, Side::Left), problem.g.eval_side(x, Side::Right));
    let j = T::lit(0.5) * (sol.value_side(x, Side::Left) + sol.value_side(x, Side::Right));
    let sigma = problem.spec.sigma(x);
    let predicted =
        T::lit(2.0) / (sigma * sigma) * ((psi_r - psi_l) * j - (psi_r * g_r - psi_l * g_l));
    Ok(SecondDerivativeJump {
        x,
        measured,
        predicted,
    })
}

/// True when [`solve_analytic`] applies to `problem`.
pub fn analytic_applicable<T: Real>(problem: &RewardProblem<T>) -> bool {
    problem.domain_is_interval()
        && problem.spec.constant_coefficients().is_some()
        && problem.rate().pieces().iter().all(|p| p.as_constant().is_some())
        && problem
            .g
            .pieces()
            .iter()
            .all(|p| !matches!(p, Piece::Func(_)))
}

//! Reward functionals `J(x) = E_x[e^{−rτ} g(X_τ)]` of Markovian randomized
//! stopping times for one-dimensional diffusions, computed two ways: by a
//! glued piecewise boundary value problem and by Monte Carlo simulation of
//! the exponential clock.
//!
//! Every kernel is generic over the scalar type ([`Real`], implemented for
//! `f32` and `f64`). The aliases at the crate root fix `f64`.
//!
//! ```
//! use mrst_core::{presets, solve_fd};
//!
//! let problem = presets::lookup("bm-n2-one").unwrap().build::<f64>().unwrap();
//! let sol = solve_fd(&problem, 1e-3).unwrap();
//! assert!(sol.value(0.5) > 0.0 && sol.value(0.5) < 1.0);
//! ```

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod bvp;
pub mod diffusion;
pub mod error;
pub mod numerics;
pub mod presets;
pub mod problem;
pub mod rate;
pub mod real;
pub mod sampler;
pub mod verify;

pub use bvp::{
    residual_report, second_derivative_jump, solve_analytic, solve_analytic_with_rule, solve_fd,
    solve_fd_with_rule, InterfaceRule, Method,
};
pub use diffusion::{expected_exit_time, hit_probability, scale_function, Coefficient, Preset, StateInterval};
pub use error::{Error, Result};
pub use rate::{rate_from_measure, Atom, Convention, Piece};
pub use real::{Real, Side};
pub use sampler::{estimate_direct, estimate_rao_blackwell, simulate_path, ExitKind, EstimatorKind, McConfig};
pub use verify::{compare_problems, compare_routes, regularity_probe, CompareOptions, Verdict};

pub type DiffusionSpec = diffusion::DiffusionSpec<f64>;
pub type Interval = diffusion::Interval<f64>;
pub type PiecewiseFunction = rate::PiecewiseFunction<f64>;
pub type PiecewiseRate = rate::PiecewiseRate<f64>;
pub type MeasureSpec = rate::MeasureSpec<f64>;
pub type ClockIntegrand = rate::ClockIntegrand<f64>;
pub type RewardProblem = problem::RewardProblem<f64>;
pub type PiecewiseSolution = bvp::PiecewiseSolution<f64>;
pub type ResidualReport = bvp::ResidualReport<f64>;
pub type Path = sampler::Path<f64>;
pub type McEstimate = sampler::McEstimate<f64>;
pub type ComparisonReport = verify::ComparisonReport<f64>;
pub type RegularityProbe = verify::RegularityProbe<f64>;

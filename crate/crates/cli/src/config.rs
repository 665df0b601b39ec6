//! Run configuration: JSON, unknown keys rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use mrst_core::diffusion::{DiffusionSpec, Interval, Preset};
use mrst_core::presets;
use mrst_core::problem::RewardProblem;
use mrst_core::rate::{
    rate_from_measure, Atom, ClockIntegrand, Convention, MeasureSpec, Piece, PiecewiseFunction,
    PiecewiseRate,
};
use mrst_core::sampler::EstimatorKind;
use mrst_core::{Error, InterfaceRule, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Simulate,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    /// Name of a built-in suite problem; replaces the problem keys below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suite: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion: Option<Preset<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<IntervalConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<PayoffConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discount: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<PiecewiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<MeasureConfig>,
    #[serde(default)]
    pub options: Options,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntervalConfig {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PieceConfig {
    Const { value: f64 },
    Poly { coefficients: Vec<f64> },
}

impl PieceConfig {
    fn build(&self) -> Result<Piece<f64>> {
        match self {
            PieceConfig::Const { value } => Ok(Piece::Const(*value)),
            PieceConfig::Poly { coefficients } if coefficients.is_empty() => Err(Error::InvalidInput(
                "polynomial piece needs at least one coefficient".into(),
            )),
            PieceConfig::Poly { coefficients } => Ok(Piece::Poly(coefficients.clone())),
        }
    }
}

/// Pieces on consecutive breakpoints. Without breakpoints a single piece
/// covers the whole line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    pub pieces: Vec<PieceConfig>,
}

impl PiecewiseConfig {
    fn function(&self) -> Result<PiecewiseFunction<f64>> {
        let pieces = self.pieces.iter().map(PieceConfig::build).collect::<Result<Vec<_>>>()?;
        match &self.breakpoints {
            Some(bps) => PiecewiseFunction::new(bps.clone(), pieces),
            None if pieces.len() == 1 => Ok(PiecewiseFunction::single(pieces.into_iter().next().unwrap())),
            None => Err(Error::InvalidInput(
                "several pieces need explicit breakpoints".into(),
            )),
        }
    }

    fn rate(&self, iv: &Interval<f64>) -> Result<PiecewiseRate<f64>> {
        let bps = self.breakpoints.clone().unwrap_or_else(|| vec![iv.a, iv.b]);
        let pieces = self.pieces.iter().map(PieceConfig::build).collect::<Result<Vec<_>>>()?;
        PiecewiseRate::new(bps, pieces)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PayoffConfig {
    Const { value: f64 },
    Poly { coefficients: Vec<f64> },
    Call { strike: f64 },
    Put { strike: f64 },
    Piecewise { breakpoints: Vec<f64>, pieces: Vec<PieceConfig> },
}

impl PayoffConfig {
    fn build(&self) -> Result<PiecewiseFunction<f64>> {
        Ok(match self {
            PayoffConfig::Const { value } => PiecewiseFunction::constant(*value),
            PayoffConfig::Poly { coefficients } => PiecewiseFunction::single(
                PieceConfig::Poly {
                    coefficients: coefficients.clone(),
                }
                .build()?,
            ),
            PayoffConfig::Call { strike } => PiecewiseFunction::call(*strike),
            PayoffConfig::Put { strike } => PiecewiseFunction::put(*strike),
            PayoffConfig::Piecewise { breakpoints, pieces } => PiecewiseConfig {
                breakpoints: Some(breakpoints.clone()),
                pieces: pieces.clone(),
            }
            .function()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    /// Components of the stopping domain; defaults to the interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<PiecewiseConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub atoms: Vec<Atom<f64>>,
    #[serde(default)]
    pub convention: Convention,
    /// Half-width of the rectangles replacing atoms; defaults to
    /// `1e-3·(b − a)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Points(Vec<f64>),
    Uniform { uniform: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorChoice {
    Direct,
    RaoBlackwell,
    Both,
}

impl EstimatorChoice {
    pub fn kinds(self) -> &'static [EstimatorKind] {
        match self {
            EstimatorChoice::Direct => &[EstimatorKind::Direct],
            EstimatorChoice::RaoBlackwell => &[EstimatorKind::RaoBlackwell],
            EstimatorChoice::Both => &[EstimatorKind::Direct, EstimatorKind::RaoBlackwell],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    Fd,
    Analytic,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface: Option<InterfaceRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_threshold: Option<f64>,
    /// Convention used by the differential route of `compare` when the
    /// problem is given as a measure; defaults to the measure's own.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode_convention: Option<Convention>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

pub const DEFAULT_N_PATHS: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SOLVE_POINTS: usize = 101;
pub const DEFAULT_MC_POINTS: usize = 5;

/// Top-level shape of a manifest written by a previous run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub config: RunConfig,
    pub seed: u64,
    pub convention: Option<Convention>,
    pub versions: Versions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    #[serde(rename = "mrst-cli")]
    pub cli: String,
    #[serde(rename = "mrst-core")]
    pub core: String,
}

pub const MANIFEST_KIND: &str = "manifest";

/// Parses either a run configuration or a manifest.
pub fn parse(text: &str) -> std::result::Result<RunConfig, String> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}"))?;
    let is_manifest = value.get("kind").and_then(|k| k.as_str()) == Some(MANIFEST_KIND);
    if is_manifest {
        let m: Manifest = serde_json::from_str(text).map_err(|e| format!("invalid manifest: {e}"))?;
        Ok(m.config)
    } else {
        serde_json::from_str(text).map_err(|e| format!("invalid configuration: {e}"))
    }
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.options.seed.unwrap_or(DEFAULT_SEED)
    }

    fn problem_keys_present(&self) -> bool {
        self.diffusion.is_some()
            || self.interval.is_some()
            || self.payoff.is_some()
            || self.rate.is_some()
            || self.measure.is_some()
    }

    /// Checks everything that can be checked before building numerics.
    pub fn validate(&self) -> Result<()> {
        if self.suite.is_some() && self.problem_keys_present() {
            return Err(Error::InvalidInput(
                "`suite` cannot be combined with diffusion, interval, payoff, rate or measure".into(),
            ));
        }
        if self.suite.is_none() {
            for (key, present) in [
                ("diffusion", self.diffusion.is_some()),
                ("interval", self.interval.is_some()),
                ("payoff", self.payoff.is_some()),
            ] {
                if !present {
                    return Err(Error::InvalidInput(format!("missing key `{key}`")));
                }
            }
        }
        if self.rate.is_some() && self.measure.is_some() {
            return Err(Error::InvalidInput("give either `rate` or `measure`, not both".into()));
        }
        let o = &self.options;
        if let Some(n) = o.n_paths {
            if n < mrst_core::sampler::MIN_PATHS {
                return Err(Error::InvalidInput(format!(
                    "options.n_paths must be at least {}",
                    mrst_core::sampler::MIN_PATHS
                )));
            }
        }
        for (key, v) in [("options.mesh", o.mesh), ("options.h", o.h), ("options.z_threshold", o.z_threshold)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::InvalidInput(format!("{key} must be positive, got {v}")));
                }
            }
        }
        if o.ode_convention.is_some() && self.measure.is_none() {
            return Err(Error::InvalidInput(
                "options.ode_convention needs a `measure` problem".into(),
            ));
        }
        if matches!(o.grid, Some(GridConfig::Uniform { uniform: 0 })) {
            return Err(Error::InvalidInput("options.grid.uniform must be positive".into()));
        }
        Ok(())
    }

    /// Builds the problem, using `convention` in place of the measure's
    /// own convention when given.
    pub fn problem_with(&self, convention: Option<Convention>) -> Result<RewardProblem<f64>> {
        self.validate()?;
        if let Some(name) = &self.suite {
            let p = presets::lookup(name)?;
            return match self.discount {
                Some(r) => p.build_with_discount(r),
                None => p.build(),
            };
        }
        let spec = DiffusionSpec::from_preset(self.diffusion.as_ref().unwrap())?;
        let ivc = self.interval.unwrap();
        let iv = Interval::new(&spec, ivc.a, ivc.b)?;
        let g = self.payoff.as_ref().unwrap().build()?;
        let r = self.discount.unwrap_or(0.0);
        let psi = match (&self.rate, &self.measure) {
            (Some(rate), None) => ClockIntegrand::from_rate(rate.rate(&iv)?),
            (None, Some(m)) => {
                let domain = m
                    .domain
                    .clone()
                    .map(|d| d.into_iter().map(|[lo, hi]| (lo, hi)).collect())
                    .unwrap_or_else(|| vec![(iv.a, iv.b)]);
                let density = match &m.density {
                    Some(d) => d.function()?,
                    None => PiecewiseFunction::constant(0.0),
                };
                let measure = MeasureSpec::new(domain, density, m.atoms.clone())?;
                let eps = m.eps.unwrap_or(1e-3 * iv.width());
                rate_from_measure(&measure, &spec, convention.unwrap_or(m.convention), eps)?
            }
            _ => ClockIntegrand::from_rate(PiecewiseRate::zero(iv.a, iv.b)?),
        };
        RewardProblem::new(spec, iv, g, r, psi)
    }

    pub fn problem(&self) -> Result<RewardProblem<f64>> {
        self.problem_with(None)
    }

    pub fn convention(&self) -> Option<Convention> {
        self.measure.as_ref().map(|m| m.convention)
    }

    /// Evaluation grid for the command.
    pub fn grid(&self, a: f64, b: f64) -> Result<Vec<f64>> {
        let inclusive = self.command == Command::Solve;
        let points = match &self.options.grid {
            Some(GridConfig::Points(p)) => p.clone(),
            Some(GridConfig::Uniform { uniform }) => uniform_grid(a, b, *uniform, inclusive),
            None if inclusive => uniform_grid(a, b, DEFAULT_SOLVE_POINTS, true),
            None => uniform_grid(a, b, DEFAULT_MC_POINTS, false),
        };
        if points.is_empty() {
            return Err(Error::InvalidInput("options.grid is empty".into()));
        }
        for &x in &points {
            let ok = if inclusive { x >= a && x <= b } else { x > a && x < b };
            if !ok || !x.is_finite() {
                return Err(Error::Domain(format!(
                    "grid point {x} lies outside {}{a}, {b}{}",
                    if inclusive { "[" } else { "(" },
                    if inclusive { "]" } else { ")" }
                )));
            }
        }
        Ok(points)
    }
}

/// `n` points: endpoints included when `inclusive`, otherwise strictly
/// interior and equally spaced.
fn uniform_grid(a: f64, b: f64, n: usize, inclusive: bool) -> Vec<f64> {
    if inclusive {
        if n == 1 {
            return vec![0.5 * (a + b)];
        }
        (0..n)
            .map(|k| if k + 1 == n { b } else { a + (b - a) * k as f64 / (n - 1) as f64 })
            .collect()
    } else {
        mrst_core::verify::interior_grid(a, b, n)
    }
}

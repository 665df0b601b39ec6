//! Command dispatch and artifact writing.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use mrst_core::bvp::{
    residual_report, second_derivative_jump, solve_analytic_with_rule, solve_fd_with_rule,
    PiecewiseSolution, ResidualReport, SecondDerivativeJump,
};
use mrst_core::problem::RewardProblem;
use mrst_core::sampler::{estimate, McConfig, McEstimate};
use mrst_core::verify::{compare_problems, regularity_probe, CompareOptions, RegularityProbe, Verdict};
use mrst_core::{Error, Result, Side};

use crate::config::{
    Command, EstimatorChoice, Manifest, MethodChoice, RunConfig, Versions, DEFAULT_N_PATHS, MANIFEST_KIND,
};

/// Outcome of a run: whether verification passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Renders a float with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> std::result::Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| RunError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("reports serialize");
    s.push('\n');
    s
}

fn mc_config(cfg: &RunConfig) -> McConfig<f64> {
    let o = &cfg.options;
    let mut mc = McConfig::new(o.n_paths.unwrap_or(DEFAULT_N_PATHS), cfg.seed());
    mc.h = o.h;
    if let Some(cap) = o.max_steps {
        mc.max_steps = cap;
    }
    mc
}

fn mesh(cfg: &RunConfig, problem: &RewardProblem<f64>) -> f64 {
    cfg.options.mesh.unwrap_or(1e-4 * problem.iv.width())
}

/// Runs `cfg`, writing results.csv, report.json and manifest.json to `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> std::result::Result<Status, RunError> {
    cfg.validate()?;
    fs::create_dir_all(out).map_err(|source| RunError::Io {
        path: out.display().to_string(),
        source,
    })?;
    let (csv, report, status) = match cfg.command {
        Command::Solve => solve(cfg)?,
        Command::Simulate => simulate(cfg)?,
        Command::Compare => compare(cfg)?,
    };
    write_file(out, "results.csv", &csv)?;
    write_file(out, "report.json", &report)?;
    let manifest = Manifest {
        kind: MANIFEST_KIND.into(),
        config: cfg.clone(),
        seed: cfg.seed(),
        convention: cfg.convention(),
        versions: Versions {
            cli: env!("CARGO_PKG_VERSION").into(),
            core: mrst_core::VERSION.into(),
        },
    };
    write_file(out, "manifest.json", &to_json(&manifest))?;
    Ok(status)
}

#[derive(Serialize)]
struct SolveReport<'a> {
    command: &'static str,
    verdict: Verdict,
    solution: SolutionSummary<'a>,
    residual: &'a ResidualReport<f64>,
    regularity: &'a RegularityProbe<f64>,
    second_derivative_jumps: Vec<SecondDerivativeJump<f64>>,
}

#[derive(Serialize)]
struct SolutionSummary<'a> {
    method: mrst_core::Method,
    rule: mrst_core::InterfaceRule,
    mesh: Option<f64>,
    condition: Option<f64>,
    breakpoints: &'a [f64],
}

fn solve_with(cfg: &RunConfig, problem: &RewardProblem<f64>) -> Result<PiecewiseSolution<f64>> {
    let rule = cfg.options.interface.unwrap_or_default();
    match cfg.options.method.unwrap_or(MethodChoice::Fd) {
        MethodChoice::Fd => solve_fd_with_rule(problem, mesh(cfg, problem), rule),
        MethodChoice::Analytic => solve_analytic_with_rule(problem, rule),
    }
}

fn solve(cfg: &RunConfig) -> std::result::Result<(String, String, Status), RunError> {
    let problem = cfg.problem()?;
    let sol = solve_with(cfg, &problem)?;
    let grid = cfg.grid(problem.iv.a, problem.iv.b)?;
    let mut csv = String::from("x,J,J1,J2\n");
    for &x in &grid {
        let side = if x == problem.iv.b { Side::Left } else { Side::Right };
        let (j, j1, j2) = sol.eval_side(x, side);
        writeln!(csv, "{},{},{},{}", fmt_float(x), fmt_float(j), fmt_float(j1), fmt_float(j2)).unwrap();
    }
    let residual = residual_report(&sol, &problem);
    let regularity = regularity_probe(&sol, &problem);
    let jumps = (1..sol.breakpoints.len() - 1)
        .map(|i| second_derivative_jump(&sol, &problem, i))
        .collect::<Result<Vec<_>>>()?;
    let pass = residual.pass && regularity.pass;
    let report = SolveReport {
        command: "solve",
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        solution: SolutionSummary {
            method: sol.method,
            rule: sol.rule,
            mesh: sol.mesh,
            condition: sol.condition,
            breakpoints: &sol.breakpoints,
        },
        residual: &residual,
        regularity: &regularity,
        second_derivative_jumps: jumps,
    };
    Ok((csv, to_json(&report), if pass { Status::Pass } else { Status::Fail }))
}

fn simulate(cfg: &RunConfig) -> std::result::Result<(String, String, Status), RunError> {
    let problem = cfg.problem()?;
    let mc = mc_config(cfg);
    let grid = cfg.grid(problem.iv.a, problem.iv.b)?;
    let choice = cfg.options.estimator.unwrap_or(EstimatorChoice::RaoBlackwell);
    let mut estimates: Vec<McEstimate<f64>> = Vec::new();
    let mut csv = String::from("x0,mean,se,n,kind\n");
    for &x in &grid {
        for &kind in choice.kinds() {
            let est = estimate(kind, &problem, x, &mc)?;
            writeln!(
                csv,
                "{},{},{},{},{}",
                fmt_float(x),
                fmt_float(est.mean),
                fmt_float(est.std_error),
                est.n_paths,
                kind.as_str()
            )
            .unwrap();
            estimates.push(est);
        }
    }
    let reliable = estimates.iter().all(|e| e.reliable);
    let report = json!({
        "command": "simulate",
        "verdict": if reliable { "pass" } else { "fail" },
        "estimates": estimates,
    });
    Ok((csv, to_json(&report), if reliable { Status::Pass } else { Status::Fail }))
}

fn compare(cfg: &RunConfig) -> std::result::Result<(String, String, Status), RunError> {
    let mc_problem = cfg.problem()?;
    let ode_problem = match cfg.options.ode_convention {
        Some(c) => cfg.problem_with(Some(c))?,
        None => mc_problem.clone(),
    };
    let problem = &ode_problem;
    let grid = cfg.grid(problem.iv.a, problem.iv.b)?;
    let defaults = CompareOptions::<f64>::default();
    let opts = CompareOptions {
        mesh: mesh(cfg, problem),
        rule: cfg.options.interface.unwrap_or_default(),
        z_threshold: cfg.options.z_threshold.unwrap_or(defaults.z_threshold),
    };
    let report = compare_problems(&ode_problem, &mc_problem, &grid, &mc_config(cfg), &opts)?;
    let mut csv = String::from("x,J_ode,J_analytic,J_mc,se_mc,z\n");
    for row in &report.rows {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt_float(row.x),
            fmt_float(row.j_ode),
            row.j_analytic.map(fmt_float).unwrap_or_default(),
            fmt_float(row.j_mc),
            fmt_float(row.se_mc),
            fmt_float(row.z)
        )
        .unwrap();
    }
    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["command"] = json!("compare");
    value["ode_convention"] = json!(cfg.options.ode_convention.or(cfg.convention()));
    value["mc_convention"] = json!(cfg.convention());
    let status = if report.verdict == Verdict::Pass { Status::Pass } else { Status::Fail };
    Ok((csv, to_json(&value), status))
}

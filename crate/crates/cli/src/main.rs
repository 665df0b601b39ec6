use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mrst_cli::{parse, run, RunError, Status, EXIT_ERROR, EXIT_FAIL, EXIT_PASS};

/// Reward functionals of randomized stopping times for 1-D diffusions.
#[derive(Debug, Parser)]
#[command(name = "mrst", version)]
struct Args {
    /// Run configuration (JSON), or a manifest.json from a previous run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configuration's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Affects speed only.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides `options.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn execute(args: &Args) -> Result<Status, RunError> {
    let text = std::fs::read_to_string(&args.config).map_err(|source| RunError::Io {
        path: args.config.display().to_string(),
        source,
    })?;
    let mut cfg = parse(&text).map_err(|e| RunError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.options.seed = Some(seed);
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| RunError::Config("no output directory: pass --out or set `output`".into()))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(RunError::Config("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| RunError::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run(&cfg, &out))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let code = match execute(&args) {
        Ok(Status::Pass) => EXIT_PASS,
        Ok(Status::Fail) => {
            eprintln!("verification failed; see report.json");
            EXIT_FAIL
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    };
    ExitCode::from(code as u8)
}

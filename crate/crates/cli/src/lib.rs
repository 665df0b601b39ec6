//! Batch front-end: reads a JSON run configuration, dispatches to
//! `solve`, `simulate` or `compare`, and writes `results.csv`,
//! `report.json` and `manifest.json`.

pub mod config;
pub mod run;

pub use config::{parse, RunConfig};
pub use run::{run, RunError, Status};

/// Exit status for a passing run.
pub const EXIT_PASS: i32 = 0;
/// Exit status for errors, including invalid configurations.
pub const EXIT_ERROR: i32 = 1;
/// Exit status when verification fails.
pub const EXIT_FAIL: i32 = 2;

//! Config-driven experiment runner for `qsd-core`.
//!
//! `qsdlab run <config>` parses a TOML config, runs the named experiment,
//! and writes `series.csv`, `report.json` and any `field_*.csv` files into
//! the output directory.

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::{Path, PathBuf};

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use report::{Assertion, Artifacts, Report};

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Output directory used when neither the config nor the command line sets one.
pub const DEFAULT_OUTPUT_DIR: &str = "qsdlab-out";

/// Runs the experiment described by `config_path`. Returns the written
/// report; its `passed` flag decides the exit status.
pub fn run(config_path: &Path, overrides: &Overrides) -> Result<Report, CliError> {
    let mut cfg = config::load(config_path)?;
    if let Some(seed) = overrides.seed {
        cfg.integration.base_seed = seed;
    }
    let dir = overrides
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));
    let artifacts = experiments::run(&cfg)?;
    Ok(artifacts.write(&dir, cfg.experiment.name(), cfg.integration.base_seed)?)
}

/// Names and one-line descriptions of all experiments.
pub fn list_experiments() -> String {
    let width = ExperimentKind::ALL.iter().map(|k| k.name().len()).max().unwrap_or(0);
    let mut out = String::new();
    for k in ExperimentKind::ALL {
        out.push_str(&format!("{:<width$}  {} [{}]\n", k.name(), k.description(), k.topic()));
    }
    out
}

//! Optional JSON run configuration. Every key is optional; command-line
//! flags take precedence over the file, and the file over built-in defaults.
//!
//! ```json
//! {
//!   "dataset": "run/dataset.csv",
//!   "manifest": "run/manifest.json",
//!   "critic": "run/task.json",
//!   "value_threshold": 1.0,
//!   "n_iteration": 6,
//!   "env": "builtin:piecewise:run/task.json",
//!   "episodes": 50,
//!   "jobs": 4
//! }
//! ```
//!
//! Relative paths are resolved against the working directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use svsp::{CriticMode, Error};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub critic: Option<PathBuf>,
    pub critic2: Option<PathBuf>,
    pub actor: Option<PathBuf>,
    pub critic_mode: Option<CriticMode>,
    pub policy: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,

    pub value_threshold: Option<f64>,
    pub n_iteration: Option<usize>,
    pub min_region_size: Option<usize>,
    pub ridge_lambda: Option<f64>,
    pub svm_c: Option<f64>,
    pub svm_epochs: Option<usize>,
    pub seed: Option<u64>,

    pub env: Option<String>,
    pub episodes: Option<usize>,
    pub base_seed: Option<u64>,
    pub replicates: Option<usize>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> svsp::Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })
    }
}

/// First of flag, file value; errors naming `flag` when neither is set.
pub fn required<T>(flag: Option<T>, file: Option<T>, name: &str) -> svsp::Result<T> {
    flag.or(file)
        .ok_or_else(|| Error::Config(format!("missing required option --{name} (flag or config file)")))
}

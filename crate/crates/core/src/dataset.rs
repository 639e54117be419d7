//! Recorded teacher state–action pairs and their manifest.
//!
//! The data file is a comma-separated table whose header is
//! `s0,…,s{d_s-1},a0,…,a{d_a-1}`. The manifest is a JSON document:
//!
//! ```json
//! {
//!   "state_dim": 8,
//!   "action_dim": 2,
//!   "action_low": [-1.0, -1.0],
//!   "action_high": [1.0, 1.0],
//!   "episode_count": 1000,
//!   "feature_names": ["x", "y", "vx", "vy", "angle", "vangle", "leg1", "leg2"],
//!   "action_names": ["main", "lateral"]
//! }
//! ```
//!
//! `feature_names` and `action_names` are optional.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::float_text;

/// Box of admissible actions, one `[low, high]` interval per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Result<Self> {
        if low.len() != high.len() || low.is_empty() {
            return Err(Error::Dimension(format!(
                "action bounds have {} lower and {} upper components",
                low.len(),
                high.len()
            )));
        }
        for (j, (lo, hi)) in low.iter().zip(&high).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Config(format!(
                    "action bound {j} is not a finite interval: [{lo}, {hi}]"
                )));
            }
        }
        Ok(ActionBounds { low, high })
    }

    pub fn symmetric(dim: usize, limit: f64) -> Self {
        ActionBounds {
            low: vec![-limit; dim],
            high: vec![limit; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    /// Clamps `action` in place; returns true if any component moved.
    pub fn clamp(&self, action: &mut [f64]) -> bool {
        let mut moved = false;
        for ((a, lo), hi) in action.iter_mut().zip(&self.low).zip(&self.high) {
            let c = a.clamp(*lo, *hi);
            moved |= c != *a;
            *a = c;
        }
        moved
    }

    pub fn contains(&self, action: &[f64]) -> bool {
        action
            .iter()
            .zip(&self.low)
            .zip(&self.high)
            .all(|((a, lo), hi)| *lo <= *a && *a <= *hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    #[serde(default)]
    pub episode_count: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_names: Option<Vec<String>>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::Config("state_dim and action_dim must be positive".into()));
        }
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            return Err(Error::Dimension(format!(
                "action_dim is {} but bounds have {}/{} entries",
                self.action_dim,
                self.action_low.len(),
                self.action_high.len()
            )));
        }
        ActionBounds::new(self.action_low.clone(), self.action_high.clone())?;
        if let Some(names) = &self.feature_names {
            if names.len() != self.state_dim {
                return Err(Error::Dimension(format!(
                    "{} feature names for state_dim {}",
                    names.len(),
                    self.state_dim
                )));
            }
        }
        if let Some(names) = &self.action_names {
            if names.len() != self.action_dim {
                return Err(Error::Dimension(format!(
                    "{} action names for action_dim {}",
                    names.len(),
                    self.action_dim
                )));
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> ActionBounds {
        ActionBounds {
            low: self.action_low.clone(),
            high: self.action_high.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        manifest.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialises");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Teacher states and actions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    states: Vec<f64>,
    actions: Vec<f64>,
    state_dim: usize,
    action_dim: usize,
    bounds: ActionBounds,
}

impl TransitionDataset {
    /// Builds a dataset from row-major buffers, clamping actions into bounds.
    pub fn new(
        states: Vec<f64>,
        mut actions: Vec<f64>,
        state_dim: usize,
        bounds: ActionBounds,
    ) -> Result<Self> {
        let action_dim = bounds.dim();
        if state_dim == 0 {
            return Err(Error::Dimension("state_dim must be positive".into()));
        }
        if !states.len().is_multiple_of(state_dim) || !actions.len().is_multiple_of(action_dim) {
            return Err(Error::Dimension("buffer length is not a multiple of the row width".into()));
        }
        let rows = states.len() / state_dim;
        if rows == 0 {
            return Err(Error::Dimension("dataset has no rows".into()));
        }
        if actions.len() / action_dim != rows {
            return Err(Error::Dimension(format!(
                "{rows} state rows but {} action rows",
                actions.len() / action_dim
            )));
        }
        if states.iter().chain(&actions).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dataset contains non-finite values".into()));
        }
        for row in actions.chunks_mut(action_dim) {
            bounds.clamp(row);
        }
        Ok(TransitionDataset {
            states,
            actions,
            state_dim,
            action_dim,
            bounds,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.state_dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    pub fn state(&self, row: usize) -> &[f64] {
        &self.states[row * self.state_dim..(row + 1) * self.state_dim]
    }

    pub fn action(&self, row: usize) -> &[f64] {
        &self.actions[row * self.action_dim..(row + 1) * self.action_dim]
    }

    pub fn states_matrix(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.state_dim, |i, j| self.state(rows[i])[j])
    }

    pub fn actions_matrix(&self, rows: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), self.action_dim, |i, j| self.action(rows[i])[j])
    }

    /// Reads a dataset table and its manifest.
    pub fn load(data_path: &Path, manifest_path: &Path) -> Result<(Self, DatasetManifest)> {
        let manifest = DatasetManifest::load(manifest_path)?;
        let text = fs::read_to_string(data_path).map_err(|e| Error::io(data_path, e))?;
        let dataset = Self::parse_table(&text, &manifest, data_path)?;
        Ok((dataset, manifest))
    }

    fn parse_table(text: &str, manifest: &DatasetManifest, path: &Path) -> Result<Self> {
        let (d_s, d_a) = (manifest.state_dim, manifest.action_dim);
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::format(path, "empty file"))?;
        let expected = table_header(d_s, d_a);
        let found: Vec<&str> = header.split(',').map(str::trim).collect();
        if found != expected.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::format(
                path,
                format!(
                    "header `{}` does not match manifest dims (state_dim {d_s}, action_dim {d_a})",
                    header.trim()
                ),
            ));
        }

        let width = d_s + d_a;
        let mut states = Vec::new();
        let mut actions = Vec::new();
        for (line_no, line) in lines {
            let row = line_no + 1;
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != width {
                return Err(Error::Row {
                    path: path.into(),
                    row,
                    message: format!("expected {width} cells, found {}", cells.len()),
                });
            }
            for (j, cell) in cells.iter().enumerate() {
                let value: f64 = cell.parse().map_err(|_| Error::Row {
                    path: path.into(),
                    row,
                    message: format!("cell {j} is not a number: `{cell}`"),
                })?;
                if !value.is_finite() {
                    return Err(Error::Row {
                        path: path.into(),
                        row,
                        message: format!("cell {j} is not finite: `{cell}`"),
                    });
                }
                if j < d_s {
                    states.push(value);
                } else {
                    actions.push(value);
                }
            }
        }
        if states.is_empty() {
            return Err(Error::format(path, "no data rows"));
        }

        let bounds = manifest.bounds();
        let clamped = actions
            .chunks(d_a)
            .filter(|row| !bounds.contains(row))
            .count();
        if clamped > 0 {
            log::warn!("{}: clamped {clamped} action rows into bounds", path.display());
        }
        TransitionDataset::new(states, actions, d_s, bounds)
    }

    /// Writes the table with 17 significant digits per value.
    pub fn save(&self, data_path: &Path) -> Result<()> {
        let file = fs::File::create(data_path).map_err(|e| Error::io(data_path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(data_path, e);
        writeln!(out, "{}", table_header(self.state_dim, self.action_dim).join(",")).map_err(io)?;
        for row in 0..self.len() {
            let cells: Vec<String> = self
                .state(row)
                .iter()
                .chain(self.action(row))
                .map(|v| float_text(*v))
                .collect();
            writeln!(out, "{}", cells.join(",")).map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

fn table_header(state_dim: usize, action_dim: usize) -> Vec<String> {
    (0..state_dim)
        .map(|i| format!("s{i}"))
        .chain((0..action_dim).map(|i| format!("a{i}")))
        .collect()
}

/// Binary per-row region labels; 1 marks rows the current subpolicy serves.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionLabels {
    labels: Vec<u8>,
    positive_count: usize,
}

impl RegionLabels {
    pub fn new(labels: Vec<bool>) -> Self {
        let positive_count = labels.iter().filter(|l| **l).count();
        RegionLabels {
            labels: labels.into_iter().map(u8::from).collect(),
            positive_count,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, row: usize) -> bool {
        self.labels[row] == 1
    }

    pub fn positive_count(&self) -> usize {
        self.positive_count
    }

    pub fn negative_count(&self) -> usize {
        self.labels.len() - self.positive_count
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.labels.iter().map(|l| *l == 1)
    }
}

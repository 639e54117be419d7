//! Environments for rollouts: built-in deterministic test beds and a client
//! for environments served by a child process over a line protocol.

mod bridge;
mod piecewise;
mod point_mass;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::ActionBounds;
use crate::error::{Error, Result};

pub use bridge::BridgeEnv;
pub use piecewise::{
    quadratic_critic_network, AnalyticCritic, Halfspace, PiecewiseEnv, PiecewiseOptions, PiecewiseTask,
};
pub use point_mass::PointMass;

/// Step gain of the built-in point-mass dynamics.
pub const POINT_MASS_GAIN: f64 = 0.1;
/// Episode length of the built-in environments.
pub const DEFAULT_EPISODE_LENGTH: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Builtin(String),
    External,
}

/// Shape and limits of an environment. The wire form (bridge `spec`
/// response) carries every field except `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub max_steps: usize,
    #[serde(skip, default = "external_kind")]
    pub kind: EnvKind,
}

fn external_kind() -> EnvKind {
    EnvKind::External
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::Env("environment dimensions must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Env("max_steps must be at least 1".into()));
        }
        if self.action_low.len() != self.action_dim {
            return Err(Error::Env("action bounds do not match action_dim".into()));
        }
        ActionBounds::new(self.action_low.clone(), self.action_high.clone())?;
        Ok(())
    }

    pub fn bounds(&self) -> ActionBounds {
        ActionBounds {
            low: self.action_low.clone(),
            high: self.action_high.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminated: bool,
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

pub trait Environment {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode; identical seeds give identical episodes.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;

    /// Advances one step. Actions outside the bounds are clamped.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;
}

/// Parsed `--env` selector.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSelector {
    /// `builtin:point-mass` or `builtin:point-mass:<dims>`.
    PointMass { dims: usize },
    /// `builtin:piecewise:<descriptor path>`.
    Piecewise { descriptor: PathBuf },
    /// `bridge:<command line>`, run through `sh -c`.
    Bridge { command: String },
}

impl EnvSelector {
    pub fn parse(text: &str) -> Result<Self> {
        if let Some(command) = text.strip_prefix("bridge:") {
            if command.trim().is_empty() {
                return Err(Error::Config("bridge selector needs a command line".into()));
            }
            return Ok(EnvSelector::Bridge {
                command: command.to_string(),
            });
        }
        let rest = text
            .strip_prefix("builtin:")
            .ok_or_else(|| Error::Config(format!("env selector `{text}` must start with builtin: or bridge:")))?;
        let (name, arg) = match rest.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (rest, None),
        };
        match (name, arg) {
            ("point-mass", None) => Ok(EnvSelector::PointMass { dims: 1 }),
            ("point-mass", Some(d)) => {
                let dims: usize = d
                    .parse()
                    .map_err(|_| Error::Config(format!("point-mass dims `{d}` is not an integer")))?;
                if dims == 0 {
                    return Err(Error::Config("point-mass dims must be positive".into()));
                }
                Ok(EnvSelector::PointMass { dims })
            }
            ("piecewise", Some(path)) if !path.is_empty() => Ok(EnvSelector::Piecewise {
                descriptor: PathBuf::from(path),
            }),
            ("piecewise", _) => Err(Error::Config(
                "piecewise selector needs a descriptor path: builtin:piecewise:<file>".into(),
            )),
            _ => Err(Error::Config(format!("unknown builtin environment `{name}`"))),
        }
    }

    /// Creates a fresh, independent environment instance.
    pub fn instantiate(&self) -> Result<Box<dyn Environment + Send>> {
        Ok(match self {
            EnvSelector::PointMass { dims } => Box::new(PointMass::new(*dims)),
            EnvSelector::Piecewise { descriptor } => Box::new(PiecewiseTask::load(descriptor)?.env()),
            EnvSelector::Bridge { command } => Box::new(BridgeEnv::spawn(command)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_parsing() {
        assert_eq!(EnvSelector::parse("builtin:point-mass").unwrap(), EnvSelector::PointMass { dims: 1 });
        assert_eq!(EnvSelector::parse("builtin:point-mass:3").unwrap(), EnvSelector::PointMass { dims: 3 });
        assert_eq!(
            EnvSelector::parse("builtin:piecewise:/tmp/task.json").unwrap(),
            EnvSelector::Piecewise {
                descriptor: PathBuf::from("/tmp/task.json")
            }
        );
        assert_eq!(
            EnvSelector::parse("bridge:python3 serve.py LunarLanderContinuous-v3").unwrap(),
            EnvSelector::Bridge {
                command: "python3 serve.py LunarLanderContinuous-v3".into()
            }
        );
        for bad in ["point-mass", "builtin:cartpole", "builtin:point-mass:x", "builtin:piecewise", "bridge:  "] {
            assert!(EnvSelector::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn wire_spec_parses_without_kind() {
        let spec: EnvSpec = serde_json::from_str(
            r#"{"state_dim":8,"action_dim":2,"action_low":[-1,-1],"action_high":[1,1],"max_steps":1000}"#,
        )
        .unwrap();
        assert_eq!(spec.kind, EnvKind::External);
        spec.validate().unwrap();
    }
}

//! Client for environments served by a child process.
//!
//! The child is started with `sh -c <command>` and speaks newline-delimited
//! JSON on stdin/stdout, one request and one response per line:
//!
//! | request                              | response                                          |
//! |--------------------------------------|---------------------------------------------------|
//! | `{"cmd":"spec"}`                     | `{"state_dim","action_dim","action_low","action_high","max_steps"}` |
//! | `{"cmd":"reset","seed":N}`           | `{"obs":[...]}`                                   |
//! | `{"cmd":"step","action":[...]}`      | `{"obs":[...],"reward":r,"terminated":b,"truncated":b}` |
//! | `{"cmd":"close"}`                    | none; the child exits                             |
//!
//! A response of the form `{"error": "..."}` or any line that does not parse
//! is reported as a protocol error quoting the offending line.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{EnvKind, EnvSpec, Environment, StepResult};
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct ResetResponse {
    obs: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct StepResponse {
    obs: Vec<f64>,
    reward: f64,
    terminated: bool,
    truncated: bool,
}

pub struct BridgeEnv {
    command: String,
    child: Child,
    stdin: Option<ChildStdin>,
    stdout: BufReader<ChildStdout>,
    spec: EnvSpec,
    in_episode: bool,
}

impl std::fmt::Debug for BridgeEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BridgeEnv")
            .field("command", &self.command)
            .field("spec", &self.spec)
            .finish()
    }
}

impl BridgeEnv {
    /// Starts the server and fetches its spec.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Env(format!("cannot start bridge `{command}`: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = BufReader::new(child.stdout.take().expect("stdout is piped"));
        let mut env = BridgeEnv {
            command: command.to_string(),
            child,
            stdin,
            stdout,
            spec: EnvSpec {
                state_dim: 0,
                action_dim: 0,
                action_low: Vec::new(),
                action_high: Vec::new(),
                max_steps: 0,
                kind: EnvKind::External,
            },
            in_episode: false,
        };
        let spec: EnvSpec = env.request(&json!({"cmd": "spec"}))?;
        spec.validate()
            .map_err(|e| Error::Protocol(format!("bridge spec is invalid: {e}")))?;
        env.spec = spec;
        log::debug!("bridge `{}` ready: {:?}", command, env.spec);
        Ok(env)
    }

    fn request<T: DeserializeOwned>(&mut self, message: &Value) -> Result<T> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| Error::Protocol("bridge already closed".into()))?;
        let mut line = message.to_string();
        line.push('\n');
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::Protocol(format!("cannot write to bridge: {e}")))?;

        let mut response = String::new();
        let read = self
            .stdout
            .read_line(&mut response)
            .map_err(|e| Error::Protocol(format!("cannot read from bridge: {e}")))?;
        if read == 0 {
            return Err(Error::Protocol(format!(
                "bridge closed its output while answering {message}"
            )));
        }
        let trimmed = response.trim_end();
        let value: Value = serde_json::from_str(trimmed)
            .map_err(|e| Error::Protocol(format!("malformed line `{trimmed}`: {e}")))?;
        if let Some(err) = value.get("error") {
            return Err(Error::Protocol(format!("bridge reported an error: {err} (line `{trimmed}`)")));
        }
        serde_json::from_value(value)
            .map_err(|e| Error::Protocol(format!("unexpected response `{trimmed}`: {e}")))
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.spec.state_dim {
            return Err(Error::Protocol(format!(
                "observation has {} entries, spec says {}",
                obs.len(),
                self.spec.state_dim
            )));
        }
        Ok(())
    }

    /// Sends `close` and waits for the child to exit.
    pub fn close(&mut self) {
        if let Some(mut stdin) = self.stdin.take() {
            let _ = stdin.write_all(b"{\"cmd\":\"close\"}\n");
            let _ = stdin.flush();
            drop(stdin);
            let _ = self.child.wait();
        }
    }
}

impl Environment for BridgeEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let response: ResetResponse = self.request(&json!({"cmd": "reset", "seed": seed}))?;
        self.check_obs(&response.obs)?;
        self.in_episode = true;
        Ok(response.obs)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if !self.in_episode {
            return Err(Error::Env("step called before reset".into()));
        }
        if action.len() != self.spec.action_dim {
            return Err(Error::Dimension("action has the wrong length".into()));
        }
        let mut action = action.to_vec();
        self.spec.bounds().clamp(&mut action);
        let response: StepResponse = self.request(&json!({"cmd": "step", "action": action}))?;
        self.check_obs(&response.obs)?;
        if response.terminated || response.truncated {
            self.in_episode = false;
        }
        Ok(StepResult {
            observation: response.obs,
            reward: response.reward,
            terminated: response.terminated,
            truncated: response.truncated,
        })
    }
}

impl Drop for BridgeEnv {
    fn drop(&mut self) {
        self.close();
    }
}

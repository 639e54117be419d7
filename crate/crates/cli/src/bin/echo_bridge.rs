//! Minimal bridge server for tests and demos.
//!
//! The observation after a step is the action itself, the reward is the sum
//! of the action's entries, and episodes are truncated after `--max-steps`
//! steps. `reset` returns the zero observation. With `--garbage-after N` the
//! N-th step is answered with a line that is not JSON.

use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(name = "svsp-echo-bridge", about = "Echo environment served over the bridge protocol")]
struct Args {
    #[arg(long, default_value_t = 2)]
    dims: usize,
    #[arg(long, default_value_t = 5)]
    max_steps: usize,
    #[arg(long)]
    garbage_after: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    let mut steps = 0usize;
    let mut total_steps = 0usize;
    for line in stdin.lock().lines() {
        let Ok(line) = line else {
            return ExitCode::FAILURE;
        };
        let response = match serde_json::from_str::<Value>(&line) {
            Err(e) => json!({"error": format!("malformed request: {e}")}),
            Ok(request) => match request.get("cmd").and_then(Value::as_str) {
                Some("spec") => json!({
                    "state_dim": args.dims,
                    "action_dim": args.dims,
                    "action_low": vec![-1.0; args.dims],
                    "action_high": vec![1.0; args.dims],
                    "max_steps": args.max_steps,
                }),
                Some("reset") => {
                    steps = 0;
                    json!({"obs": vec![0.0; args.dims]})
                }
                Some("step") => {
                    let action: Option<Vec<f64>> = request
                        .get("action")
                        .and_then(|a| serde_json::from_value(a.clone()).ok());
                    match action {
                        Some(action) if action.len() == args.dims => {
                            steps += 1;
                            total_steps += 1;
                            if args.garbage_after == Some(total_steps) {
                                let _ = writeln!(stdout, "garbage line {total_steps}");
                                let _ = stdout.flush();
                                continue;
                            }
                            json!({
                                "obs": action,
                                "reward": action.iter().sum::<f64>(),
                                "terminated": false,
                                "truncated": steps >= args.max_steps,
                            })
                        }
                        _ => json!({"error": format!("step needs an action of length {}", args.dims)}),
                    }
                }
                Some("close") => return ExitCode::SUCCESS,
                _ => json!({"error": format!("unknown request `{line}`")}),
            },
        };
        if writeln!(stdout, "{response}").and_then(|_| stdout.flush()).is_err() {
            return ExitCode::FAILURE;
        }
    }
    ExitCode::SUCCESS
}

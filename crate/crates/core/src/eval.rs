//! Evaluation of distilled policies: seeded rollouts, action fidelity
//! against the recorded teacher, and decision-boundary grids.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::TransitionDataset;
use crate::distill::DistilledPolicy;
use crate::envs::{EnvSpec, Environment};
use crate::error::{Error, Result};
use crate::format::{float_text, to_exact_json};

/// Outcome of one evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub base_seed: u64,
    pub episode_returns: Vec<f64>,
    pub episode_steps: Vec<u64>,
    pub mean: f64,
    /// Sample standard deviation (n − 1); 0 for fewer than two episodes.
    pub std: f64,
    /// Serving node index → number of steps it produced the action.
    pub node_usage: BTreeMap<usize, u64>,
    pub subpolicy_count: usize,
    /// False when an environment failure cut the run short.
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalReport {
    fn assemble(
        base_seed: u64,
        subpolicy_count: usize,
        episodes: Vec<EpisodeOutcome>,
        error: Option<String>,
    ) -> Self {
        let episode_returns: Vec<f64> = episodes.iter().map(|e| e.ret).collect();
        let episode_steps = episodes.iter().map(|e| e.steps).collect();
        let mut node_usage = BTreeMap::new();
        for e in &episodes {
            for (node, count) in &e.usage {
                *node_usage.entry(*node).or_insert(0) += count;
            }
        }
        let (mean, std) = mean_and_sample_std(&episode_returns);
        EvalReport {
            episodes: episode_returns.len(),
            base_seed,
            episode_returns,
            episode_steps,
            mean,
            std,
            node_usage,
            subpolicy_count,
            valid: error.is_none(),
            error,
        }
    }

    /// Structured document (JSON, floats to 17 significant digits).
    pub fn to_json(&self) -> String {
        to_exact_json(self).expect("report serialises")
    }

    /// Flat `episode,seed,return,steps` table.
    pub fn episodes_csv(&self) -> String {
        let mut out = String::from("episode,seed,return,steps\n");
        for (e, (ret, steps)) in self.episode_returns.iter().zip(&self.episode_steps).enumerate() {
            let seed = self.base_seed.wrapping_add(e as u64);
            let _ = writeln!(out, "{e},{seed},{},{steps}", float_text(*ret));
        }
        out
    }

    /// One-line `mean ± std` summary.
    pub fn summary(&self) -> String {
        format!(
            "return {:.3} ± {:.3} over {} episodes, {} subpolicies{}",
            self.mean,
            self.std,
            self.episodes,
            self.subpolicy_count,
            if self.valid { "" } else { " (INVALID: run aborted)" }
        )
    }
}

pub fn mean_and_sample_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    (mean, (ss / (n - 1.0)).sqrt())
}

#[derive(Debug, Clone)]
struct EpisodeOutcome {
    ret: f64,
    steps: u64,
    usage: BTreeMap<usize, u64>,
}

fn check_dims(spec: &EnvSpec, policy: &DistilledPolicy) -> Result<()> {
    if spec.state_dim != policy.state_dim() || spec.action_dim != policy.action_dim() {
        return Err(Error::Dimension(format!(
            "policy is {}→{} but environment is {}→{}",
            policy.state_dim(),
            policy.action_dim(),
            spec.state_dim,
            spec.action_dim
        )));
    }
    Ok(())
}

fn run_episode<E: Environment + ?Sized>(env: &mut E, policy: &DistilledPolicy, seed: u64) -> Result<EpisodeOutcome> {
    let mut state = env.reset(seed)?;
    let mut outcome = EpisodeOutcome {
        ret: 0.0,
        steps: 0,
        usage: BTreeMap::new(),
    };
    loop {
        let (action, node) = policy.try_route(&state)?;
        let step = env.step(&action)?;
        outcome.ret += step.reward;
        outcome.steps += 1;
        *outcome.usage.entry(node).or_insert(0) += 1;
        if step.done() {
            return Ok(outcome);
        }
        state = step.observation;
    }
}

/// Runs `episodes` episodes; episode `e` is reset with `base_seed + e`.
///
/// Dimension mismatches are returned as errors. A failure inside an episode
/// stops the run and yields a report over the completed episodes with
/// `valid = false`.
pub fn rollout<E: Environment + ?Sized>(
    env: &mut E,
    policy: &DistilledPolicy,
    episodes: usize,
    base_seed: u64,
) -> Result<EvalReport> {
    check_dims(env.spec(), policy)?;
    let mut done = Vec::with_capacity(episodes);
    let mut error = None;
    for e in 0..episodes {
        match run_episode(env, policy, base_seed.wrapping_add(e as u64)) {
            Ok(outcome) => done.push(outcome),
            Err(err) => {
                log::warn!("episode {e} failed: {err}");
                error = Some(format!("episode {e}: {err}"));
                break;
            }
        }
    }
    Ok(EvalReport::assemble(base_seed, policy.node_count(), done, error))
}

/// Factory for independent environment instances.
pub type EnvFactory<'a> = dyn Fn() -> Result<Box<dyn Environment + Send>> + Sync + 'a;

/// Like [`rollout`], spreading episodes over `jobs` environment instances.
/// The report is assembled by episode index, so it is identical for every
/// `jobs` value.
pub fn rollout_parallel(
    make_env: &EnvFactory<'_>,
    policy: &DistilledPolicy,
    episodes: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<EvalReport> {
    let jobs = jobs.max(1).min(episodes.max(1));
    if jobs == 1 {
        let mut env = make_env()?;
        return rollout(env.as_mut(), policy, episodes, base_seed);
    }
    let mut envs = Vec::with_capacity(jobs);
    for _ in 0..jobs {
        let env = make_env()?;
        check_dims(env.spec(), policy)?;
        envs.push(env);
    }
    let results: Mutex<Vec<Option<Result<EpisodeOutcome>>>> = Mutex::new((0..episodes).map(|_| None).collect());
    std::thread::scope(|scope| {
        for (worker, mut env) in envs.into_iter().enumerate() {
            let results = &results;
            scope.spawn(move || {
                for e in (worker..episodes).step_by(jobs) {
                    let outcome = run_episode(env.as_mut(), policy, base_seed.wrapping_add(e as u64));
                    let failed = outcome.is_err();
                    results.lock().expect("no poisoned workers")[e] = Some(outcome);
                    if failed {
                        break;
                    }
                }
            });
        }
    });
    let mut done = Vec::with_capacity(episodes);
    let mut error = None;
    for (e, slot) in results.into_inner().expect("workers finished").into_iter().enumerate() {
        match slot {
            Some(Ok(outcome)) => done.push(outcome),
            Some(Err(err)) => {
                error = Some(format!("episode {e}: {err}"));
                break;
            }
            None => {
                error = Some(format!("episode {e}: not run after an earlier failure"));
                break;
            }
        }
    }
    Ok(EvalReport::assemble(base_seed, policy.node_count(), done, error))
}

/// Action mean-squared error (mean over rows of `‖route(s) − a‖²`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub rows: usize,
    pub global_mse: f64,
    /// Serving node index → (rows served, MSE over those rows).
    pub per_node: BTreeMap<usize, NodeFidelity>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeFidelity {
    pub rows: usize,
    pub mse: f64,
}

pub fn fidelity(policy: &DistilledPolicy, dataset: &TransitionDataset) -> Result<FidelityReport> {
    if dataset.state_dim() != policy.state_dim() || dataset.action_dim() != policy.action_dim() {
        return Err(Error::Dimension("dataset and policy dimensions differ".into()));
    }
    let mut sums: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    let mut total = 0.0;
    for i in 0..dataset.len() {
        let (action, node) = policy.route(dataset.state(i));
        let err: f64 = action
            .iter()
            .zip(dataset.action(i))
            .map(|(p, a)| (p - a) * (p - a))
            .sum();
        total += err;
        let entry = sums.entry(node).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += err;
    }
    let rows = dataset.len();
    Ok(FidelityReport {
        rows,
        global_mse: if rows == 0 { 0.0 } else { total / rows as f64 },
        per_node: sums
            .into_iter()
            .map(|(node, (n, s))| (node, NodeFidelity { rows: n, mse: s / n as f64 }))
            .collect(),
    })
}

/// Serving-node map over a 2-D slice of the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryGrid {
    pub dim_x: usize,
    pub dim_y: usize,
    pub resolution: usize,
    /// Grid coordinates along x and y (`resolution` evenly spaced points
    /// including both range ends).
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `nodes[i * resolution + j]` serves the state with `x = xs[i]`,
    /// `y = ys[j]`.
    pub nodes: Vec<usize>,
}

impl BoundaryGrid {
    pub fn node_at(&self, i: usize, j: usize) -> usize {
        self.nodes[i * self.resolution + j]
    }

    pub fn cells(&self) -> usize {
        self.nodes.len()
    }

    /// Comma-separated `x,y,node` table, one row per cell.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,node\n");
        for (i, x) in self.xs.iter().enumerate() {
            for (j, y) in self.ys.iter().enumerate() {
                let _ = writeln!(out, "{},{},{}", float_text(*x), float_text(*y), self.node_at(i, j));
            }
        }
        out
    }
}

fn linspace(range: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (range.0 + range.1)];
    }
    (0..n)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Routes every point of a `resolution × resolution` grid over
/// `x_range × y_range` in state dimensions `dim_x`/`dim_y`; all other state
/// components are held at `fill_value`.
pub fn boundary_grid(
    policy: &DistilledPolicy,
    dim_x: usize,
    dim_y: usize,
    x_range: (f64, f64),
    y_range: (f64, f64),
    resolution: usize,
    fill_value: f64,
) -> Result<BoundaryGrid> {
    let d = policy.state_dim();
    if dim_x == dim_y || dim_x >= d || dim_y >= d {
        return Err(Error::Config(format!(
            "grid dimensions must be distinct and below the state dimension {d}"
        )));
    }
    if resolution == 0 || !(x_range.0 < x_range.1) || !(y_range.0 < y_range.1) {
        return Err(Error::Config("grid needs resolution >= 1 and increasing ranges".into()));
    }
    let xs = linspace(x_range, resolution);
    let ys = linspace(y_range, resolution);
    let mut state = vec![fill_value; d];
    let mut nodes = Vec::with_capacity(resolution * resolution);
    for x in &xs {
        for y in &ys {
            state[dim_x] = *x;
            state[dim_y] = *y;
            nodes.push(policy.serving_node(&state));
        }
    }
    Ok(BoundaryGrid {
        dim_x,
        dim_y,
        resolution,
        xs,
        ys,
        nodes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_and_sample_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_sample_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn linspace_includes_ends() {
        assert_eq!(linspace((-1.0, 1.0), 3), vec![-1.0, 0.0, 1.0]);
        assert_eq!(linspace((0.0, 2.0), 1), vec![1.0]);
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use serde_json::Value;
use svsp::distill::{distill_with_trace, inspect as inspect_policy, FeatureNames};
use svsp::envs::{EnvSelector, Environment, PiecewiseOptions, PiecewiseTask};
use svsp::eval::{boundary_grid, fidelity, mean_and_sample_std, rollout_parallel, EvalReport};
use svsp::format::to_exact_json;
use svsp::{
    Critic, CriticOracle, DatasetManifest, DistillConfig, DistilledPolicy, Error, MlpNetwork, Result,
    TransitionDataset,
};

use crate::config::{required, RunConfig};
use crate::{BoundaryArgs, DistillArgs, DistillOptions, EvalArgs, InspectArgs, ReplicateArgs, SynthArgs};

/// Prints a line; a closed stdout (e.g. piped into `head`) is not an error.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const DEFAULT_EPISODES: usize = 100;
const DEFAULT_REPLICATES: usize = 20;

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

/// Everything a distillation needs, resolved from flags and config file.
struct DistillInputs {
    dataset: TransitionDataset,
    critic: Box<dyn Critic>,
    config: DistillConfig,
}

fn resolve_distill(opts: &DistillOptions, file: &RunConfig) -> Result<DistillInputs> {
    let data_path = required(opts.dataset.clone(), file.dataset.clone(), "dataset")?;
    let manifest_path = required(opts.manifest.clone(), file.manifest.clone(), "manifest")?;
    let (dataset, manifest) = TransitionDataset::load(&data_path, &manifest_path)?;

    let defaults = DistillConfig::default();
    let critic_mode = opts
        .critic_mode
        .map(Into::into)
        .or(file.critic_mode)
        .unwrap_or(defaults.critic_mode);
    let config = DistillConfig {
        value_threshold: opts.threshold.or(file.value_threshold).unwrap_or(defaults.value_threshold),
        n_iteration: opts.iterations.or(file.n_iteration).unwrap_or(defaults.n_iteration),
        min_region_size: opts.min_region_size.or(file.min_region_size).unwrap_or(defaults.min_region_size),
        ridge_lambda: opts.ridge_lambda.or(file.ridge_lambda).unwrap_or(defaults.ridge_lambda),
        svm_c: opts.svm_c.or(file.svm_c).unwrap_or(defaults.svm_c),
        svm_epochs: opts.svm_epochs.or(file.svm_epochs).unwrap_or(defaults.svm_epochs),
        seed: opts.seed.or(file.seed).unwrap_or(defaults.seed),
        critic_mode,
    };
    config.validate(manifest.state_dim)?;

    let critic_path = required(opts.critic.clone(), file.critic.clone(), "critic")?;
    let critic2 = opts.critic2.clone().or(file.critic2.clone());
    let actor = opts.actor.clone().or(file.actor.clone());
    let critic = load_critic(&critic_path, critic2.as_deref(), actor.as_deref(), &config, &manifest)?;
    Ok(DistillInputs {
        dataset,
        critic,
        config,
    })
}

/// Loads either a synthetic task descriptor (its analytic critic) or an
/// exported Q network with optional twin and actor.
fn load_critic(
    path: &Path,
    critic2: Option<&Path>,
    actor: Option<&Path>,
    config: &DistillConfig,
    manifest: &DatasetManifest,
) -> Result<Box<dyn Critic>> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.into(),
        message: e.to_string(),
    })?;
    let critic: Box<dyn Critic> = if value.get("kind").and_then(Value::as_str) == Some("piecewise_analytic") {
        if critic2.is_some() || actor.is_some() {
            return Err(Error::Config(
                "--critic2 and --actor only apply to exported networks, not task descriptors".into(),
            ));
        }
        let task = PiecewiseTask::from_json(&text).map_err(|e| Error::Format {
            path: path.into(),
            message: e.to_string(),
        })?;
        Box::new(task.critic())
    } else {
        let q1 = MlpNetwork::load(path)?;
        let q2 = critic2.map(MlpNetwork::load).transpose()?;
        let actor = actor.map(MlpNetwork::load).transpose()?;
        Box::new(CriticOracle::new(q1, q2, actor, config.critic_mode, manifest.state_dim)?)
    };
    if critic.state_dim() != manifest.state_dim || critic.action_dim() != manifest.action_dim {
        return Err(Error::Dimension(format!(
            "{}: critic is {}→{} but the manifest says {}→{}",
            path.display(),
            critic.state_dim(),
            critic.action_dim(),
            manifest.state_dim,
            manifest.action_dim
        )));
    }
    Ok(critic)
}

pub fn distill(args: DistillArgs) -> Result<()> {
    let file = RunConfig::load(args.inputs.config.as_deref())?;
    let out = required(args.out, file.out.clone().or(file.policy.clone()), "out")?;
    let inputs = resolve_distill(&args.inputs, &file)?;
    let (policy, trace) = distill_with_trace(&inputs.dataset, inputs.critic.as_ref(), &inputs.config)?;
    policy.save(&out)?;

    say!(
        "distilled {} subpolicies from {} rows ({})",
        policy.node_count(),
        inputs.dataset.len(),
        trace.stop
    );
    for node in policy.nodes() {
        say!(
            "  node {}: {} rows, {:.1}% accepted{}",
            node.index,
            node.train_size,
            100.0 * node.positive_fraction,
            if node.gate.is_some() { "" } else { ", terminal" }
        );
    }
    let fit = fidelity(&policy, &inputs.dataset)?;
    say!("action fidelity MSE {:.6e}", fit.global_mse);
    say!("policy written to {}", out.display());
    Ok(())
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("report.json"), &report.to_json())?;
    write_file(&dir.join("episodes.csv"), &report.episodes_csv())
}

fn report_failure(report: &EvalReport) -> Result<()> {
    match &report.error {
        None => Ok(()),
        Some(message) => Err(Error::Env(format!(
            "evaluation aborted after {} episodes: {message}",
            report.episode_returns.len()
        ))),
    }
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let file = RunConfig::load(args.config.as_deref())?;
    let policy_path = required(args.policy, file.policy.clone(), "policy")?;
    let selector = EnvSelector::parse(&required(args.env, file.env.clone(), "env")?)?;
    let policy = DistilledPolicy::load(&policy_path)?;
    let episodes = args.episodes.or(file.episodes).unwrap_or(DEFAULT_EPISODES);
    let base_seed = args.base_seed.or(file.base_seed).unwrap_or(0);
    let jobs = args.jobs.or(file.jobs).unwrap_or(1);
    let out_dir = args.out_dir.or(file.out_dir.clone());

    let make_env = || selector.instantiate();
    let report = rollout_parallel(&make_env, &policy, episodes, base_seed, jobs)?;
    say!("{}", report.summary());
    for (node, steps) in &report.node_usage {
        say!("  node {node}: {steps} steps");
    }

    let dataset = match (args.dataset.or(file.dataset.clone()), args.manifest.or(file.manifest.clone())) {
        (Some(data), Some(manifest)) => Some(TransitionDataset::load(&data, &manifest)?.0),
        _ => None,
    };
    let fit = dataset.map(|d| fidelity(&policy, &d)).transpose()?;
    if let Some(fit) = &fit {
        say!("action fidelity MSE {:.6e} over {} rows", fit.global_mse, fit.rows);
    }

    if let Some(dir) = &out_dir {
        write_report(dir, &report)?;
        if let Some(fit) = &fit {
            let text = to_exact_json(fit).expect("fidelity report serialises");
            write_file(&dir.join("fidelity.json"), &text)?;
        }
        say!("report written to {}", dir.display());
    }
    report_failure(&report)
}

pub fn inspect(args: InspectArgs) -> Result<()> {
    let policy = DistilledPolicy::load(&args.policy)?;
    let names = match &args.manifest {
        Some(path) => {
            let manifest = DatasetManifest::load(path)?;
            FeatureNames {
                features: manifest.feature_names,
                actions: manifest.action_names,
            }
        }
        None => FeatureNames::default(),
    };
    use std::io::Write as _;
    let _ = std::io::stdout().write_all(inspect_policy(&policy, &names).as_bytes());
    Ok(())
}

pub fn boundary(args: BoundaryArgs) -> Result<()> {
    let policy = DistilledPolicy::load(&args.policy)?;
    let grid = boundary_grid(
        &policy,
        args.dims[0],
        args.dims[1],
        (args.x_range[0], args.x_range[1]),
        (args.y_range[0], args.y_range[1]),
        args.resolution,
        args.fill,
    )?;
    write_file(&args.out, &grid.to_csv())?;
    say!("{} cells written to {}", grid.cells(), args.out.display());
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let mut options = PiecewiseOptions::new(args.regions, args.state_dim, args.seed);
    if let Some(share) = args.region_share {
        options.region_share = share;
    }
    if let Some(deviation) = args.teacher_deviation {
        options.teacher_deviation = deviation;
    }
    let task = PiecewiseTask::generate(&options)?;
    let (dataset, manifest) = task.record_dataset(args.episodes, args.base_seed)?;
    create_dir(&args.out_dir)?;
    dataset.save(&args.out_dir.join("dataset.csv"))?;
    manifest.save(&args.out_dir.join("manifest.json"))?;
    task.save(&args.out_dir.join("task.json"))?;
    say!(
        "{} regions in {} dimensions: {} rows from {} episodes written to {}",
        task.regions(),
        task.state_dim(),
        dataset.len(),
        args.episodes,
        args.out_dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReplicateRow {
    seed: u64,
    base_seed: u64,
    subpolicies: usize,
    mean: f64,
    std: f64,
}

/// Spread across replicates and across all pooled episodes; which of the
/// two a "±" should mean is left to the reader.
#[derive(Debug, Serialize)]
struct ReplicateSummary {
    replicates: usize,
    episodes_per_replicate: usize,
    replicate_mean: f64,
    replicate_std: f64,
    episode_mean: f64,
    episode_std: f64,
    subpolicies_mean: f64,
    runs: Vec<ReplicateRow>,
}

pub fn replicate(args: ReplicateArgs) -> Result<()> {
    let file = RunConfig::load(args.inputs.config.as_deref())?;
    let out_dir = required(args.out_dir, file.out_dir.clone(), "out-dir")?;
    let selector = EnvSelector::parse(&required(args.env, file.env.clone(), "env")?)?;
    let replicates = args.replicates.or(file.replicates).unwrap_or(DEFAULT_REPLICATES);
    let episodes = args.episodes.or(file.episodes).unwrap_or(DEFAULT_EPISODES);
    let base_seed = args.base_seed.or(file.base_seed).unwrap_or(0);
    let jobs = args.jobs.or(file.jobs).unwrap_or(1).clamp(1, replicates.max(1));
    let inputs = resolve_distill(&args.inputs, &file)?;
    if replicates == 0 {
        return Err(Error::Config("--replicates must be positive".into()));
    }

    let run = |r: usize| -> Result<(DistilledPolicy, EvalReport)> {
        let mut config = inputs.config.clone();
        config.seed = inputs.config.seed.wrapping_add(r as u64);
        let (policy, _) = distill_with_trace(&inputs.dataset, inputs.critic.as_ref(), &config)?;
        let eval_seed = base_seed.wrapping_add((r * episodes) as u64);
        let mut env: Box<dyn Environment + Send> = selector.instantiate()?;
        let report = svsp::eval::rollout(env.as_mut(), &policy, episodes, eval_seed)?;
        Ok((policy, report))
    };

    type Slot = Option<Result<(DistilledPolicy, EvalReport)>>;
    let results: Mutex<Vec<Slot>> = Mutex::new((0..replicates).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= replicates {
                    break;
                }
                let outcome = run(r);
                results.lock().expect("no poisoned workers")[r] = Some(outcome);
            });
        }
    });

    create_dir(&out_dir)?;
    let mut rows = Vec::with_capacity(replicates);
    let mut pooled = Vec::new();
    for (r, slot) in results.into_inner().expect("workers finished").into_iter().enumerate() {
        let (policy, report) = slot.expect("every replicate ran")?;
        let seed = inputs.config.seed.wrapping_add(r as u64);
        let dir: PathBuf = out_dir.join(format!("seed-{seed}"));
        create_dir(&dir)?;
        policy.save(&dir.join("policy.json"))?;
        write_report(&dir, &report)?;
        report_failure(&report)?;
        say!("seed {seed}: {} subpolicies, {}", policy.node_count(), report.summary());
        pooled.extend_from_slice(&report.episode_returns);
        rows.push(ReplicateRow {
            seed,
            base_seed: report.base_seed,
            subpolicies: policy.node_count(),
            mean: report.mean,
            std: report.std,
        });
    }

    let means: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let (replicate_mean, replicate_std) = mean_and_sample_std(&means);
    let (episode_mean, episode_std) = mean_and_sample_std(&pooled);
    let summary = ReplicateSummary {
        replicates,
        episodes_per_replicate: episodes,
        replicate_mean,
        replicate_std,
        episode_mean,
        episode_std,
        subpolicies_mean: rows.iter().map(|r| r.subpolicies as f64).sum::<f64>() / replicates as f64,
        runs: rows,
    };
    write_file(
        &out_dir.join("summary.json"),
        &to_exact_json(&summary).expect("summary serialises"),
    )?;
    say!(
        "{} replicates: return {:.3} ± {:.3} across replicates, {:.3} ± {:.3} across episodes",
        replicates,
        replicate_mean,
        replicate_std,
        episode_mean,
        episode_std
    );
    Ok(())
}

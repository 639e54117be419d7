//! Chain construction by critic-labelled state partitioning.
//!
//! Each iteration fits a linear subpolicy on the current region, asks the
//! critic whether the subpolicy's action is worth at least `τ` times the
//! state value, and splits the region with an SVM gate: rows the critic
//! accepts stay with this node, the rest become the next node's region.
//! At inference a state walks the chain and is served by the first node
//! whose gate accepts it; the last node has no gate and serves everything
//! that reaches it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{ActionBounds, RegionLabels, TransitionDataset};
use crate::error::{Error, Result};
use crate::learners::{fit_svm, GateDocument, LinearSubpolicy, SubpolicyDocument, SvmGate, SvmParams};
use crate::nn::{Critic, CriticMode};

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillConfig {
    /// Relative-advantage threshold; 1 means "as good as the state value".
    pub value_threshold: f64,
    /// Maximum number of nodes in the chain.
    pub n_iteration: usize,
    /// A node only splits if at least this many rows would be handed on.
    pub min_region_size: usize,
    pub ridge_lambda: f64,
    pub svm_c: f64,
    pub svm_epochs: usize,
    pub seed: u64,
    pub critic_mode: CriticMode,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            value_threshold: 1.0,
            n_iteration: 10,
            min_region_size: 10,
            ridge_lambda: 1e-4,
            svm_c: 1.0,
            svm_epochs: 200,
            seed: 0,
            critic_mode: CriticMode::Q1Only,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self, state_dim: usize) -> Result<()> {
        if !(self.value_threshold.is_finite() && self.value_threshold > 0.0) {
            return Err(Error::Config(format!(
                "value_threshold must be positive, got {}",
                self.value_threshold
            )));
        }
        if self.n_iteration == 0 {
            return Err(Error::Config("n_iteration must be at least 1".into()));
        }
        if self.min_region_size < state_dim + 1 {
            return Err(Error::Config(format!(
                "min_region_size {} must be at least state_dim + 1 = {}",
                self.min_region_size,
                state_dim + 1
            )));
        }
        if !(self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0) {
            return Err(Error::Config(format!("ridge_lambda must be >= 0, got {}", self.ridge_lambda)));
        }
        if !(self.svm_c.is_finite() && self.svm_c > 0.0) {
            return Err(Error::Config(format!("svm_c must be positive, got {}", self.svm_c)));
        }
        if self.svm_epochs == 0 {
            return Err(Error::Config("svm_epochs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionNode {
    pub index: usize,
    pub subpolicy: LinearSubpolicy,
    /// Absent exactly on the terminal node.
    pub gate: Option<SvmGate>,
    pub train_size: usize,
    pub positive_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistilledPolicy {
    nodes: Vec<PartitionNode>,
    state_dim: usize,
    action_dim: usize,
    bounds: ActionBounds,
    config: DistillConfig,
}

impl DistilledPolicy {
    pub fn new(
        nodes: Vec<PartitionNode>,
        state_dim: usize,
        bounds: ActionBounds,
        config: DistillConfig,
    ) -> Result<Self> {
        let action_dim = bounds.dim();
        let last = nodes
            .len()
            .checked_sub(1)
            .ok_or_else(|| Error::Config("a policy needs at least one node".into()))?;
        for (i, node) in nodes.iter().enumerate() {
            if node.index != i {
                return Err(Error::Config(format!("node at position {i} has index {}", node.index)));
            }
            if node.gate.is_none() != (i == last) {
                return Err(Error::Config(if i == last {
                    "the last node must be terminal (no gate)".to_string()
                } else {
                    format!("node {i} has no gate but is not the last node")
                }));
            }
            if node.subpolicy.state_dim() != state_dim || node.subpolicy.action_dim() != action_dim {
                return Err(Error::Dimension(format!("node {i} subpolicy has the wrong shape")));
            }
            if let Some(gate) = &node.gate {
                if gate.state_dim() != state_dim {
                    return Err(Error::Dimension(format!("node {i} gate has the wrong shape")));
                }
            }
            if !(0.0..=1.0).contains(&node.positive_fraction) {
                return Err(Error::Config(format!("node {i} positive_fraction outside [0, 1]")));
            }
        }
        Ok(DistilledPolicy {
            nodes,
            state_dim,
            action_dim,
            bounds,
            config,
        })
    }

    pub fn nodes(&self) -> &[PartitionNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
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

    pub fn config(&self) -> &DistillConfig {
        &self.config
    }

    /// Index of the node serving `state`.
    pub fn serving_node(&self, state: &[f64]) -> usize {
        self.nodes
            .iter()
            .position(|n| n.gate.as_ref().is_none_or(|g| g.predict(state)))
            .expect("terminal node accepts every state")
    }

    /// Action for `state` and the index of the node that produced it.
    /// Panics if `state` has the wrong length; see [`Self::try_route`].
    pub fn route(&self, state: &[f64]) -> (Vec<f64>, usize) {
        let index = self.serving_node(state);
        (self.nodes[index].subpolicy.predict(state), index)
    }

    pub fn try_route(&self, state: &[f64]) -> Result<(Vec<f64>, usize)> {
        if state.len() != self.state_dim {
            return Err(Error::Dimension(format!(
                "policy expects {} state features, got {}",
                self.state_dim,
                state.len()
            )));
        }
        Ok(self.route(state))
    }

    pub fn to_json(&self) -> String {
        let doc = PolicyDocument {
            version: POLICY_FORMAT_VERSION,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
            bounds: self.bounds.clone(),
            config: self.config.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDocument {
                    gate: n.gate.as_ref().map(GateDocument::from),
                    subpolicy: SubpolicyDocument::from(&n.subpolicy),
                    train_size: n.train_size,
                    positive_fraction: n.positive_fraction,
                })
                .collect(),
        };
        crate::format::to_exact_json(&doc).expect("policy serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PolicyDocument =
            serde_json::from_str(text).map_err(|e| Error::format("<policy>", e.to_string()))?;
        if doc.version != POLICY_FORMAT_VERSION {
            return Err(Error::format(
                "<policy>",
                format!("unsupported policy version {} (expected {POLICY_FORMAT_VERSION})", doc.version),
            ));
        }
        let bounds = ActionBounds::new(doc.bounds.low, doc.bounds.high)?;
        if bounds.dim() != doc.action_dim {
            return Err(Error::Dimension("bounds do not match action_dim".into()));
        }
        let nodes = doc
            .nodes
            .into_iter()
            .enumerate()
            .map(|(index, n)| {
                Ok(PartitionNode {
                    index,
                    subpolicy: n.subpolicy.into_subpolicy(doc.state_dim, bounds.clone())?,
                    gate: n.gate.map(GateDocument::into_gate).transpose()?,
                    train_size: n.train_size,
                    positive_fraction: n.positive_fraction,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DistilledPolicy::new(nodes, doc.state_dim, bounds, doc.config)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(path, message),
            other => Error::format(path, other.to_string()),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDocument {
    version: u32,
    state_dim: usize,
    action_dim: usize,
    bounds: ActionBounds,
    config: DistillConfig,
    nodes: Vec<NodeDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gate: Option<GateDocument>,
    subpolicy: SubpolicyDocument,
    train_size: usize,
    positive_fraction: f64,
}

/// The labeling rule: `q − v ≥ (τ − 1)·|v|`.
///
/// For `v > 0` this is `q / v ≥ τ`; unlike the raw ratio it keeps its
/// meaning when the state value is negative.
pub fn advantage_label(q: f64, v: f64, threshold: f64) -> bool {
    q - v >= (threshold - 1.0) * v.abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelOutcome {
    pub labels: RegionLabels,
    /// Rows whose critic output was not finite; they are labelled 0.
    pub rejected: usize,
}

/// Labels rows `(state, subpolicy action, dataset action)` with the critic.
pub fn label_region<'a, I>(critic: &dyn Critic, rows: I, threshold: f64) -> Result<LabelOutcome>
where
    I: IntoIterator<Item = (&'a [f64], &'a [f64], &'a [f64])>,
{
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::Config(format!("value threshold must be positive, got {threshold}")));
    }
    let mut rejected = 0;
    let mut labels = Vec::new();
    for (state, predicted, recorded) in rows {
        let q = critic.q_value(state, predicted)?;
        let v = critic.state_value(state, Some(recorded))?;
        if q.is_finite() && v.is_finite() {
            labels.push(advantage_label(q, v, threshold));
        } else {
            rejected += 1;
            labels.push(false);
        }
    }
    if rejected > 0 {
        log::warn!("{rejected} rows had non-finite critic output and were labelled 0");
    }
    Ok(LabelOutcome {
        labels: RegionLabels::new(labels),
        rejected,
    })
}

/// Why the chain stopped at its last node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    IterationLimit,
    /// The subpolicy reproduces every recorded action of its region to
    /// rounding precision, so no deeper node could do better.
    ExactFit,
    AllAccepted,
    NoneAccepted,
    RemainderTooSmall,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::IterationLimit => "iteration limit reached",
            StopReason::ExactFit => "last subpolicy reproduces its region exactly",
            StopReason::AllAccepted => "every remaining row accepted",
            StopReason::NoneAccepted => "no remaining row accepted",
            StopReason::RemainderTooSmall => "rejected remainder below min_region_size",
        })
    }
}

/// Per-node bookkeeping kept alongside the policy.
#[derive(Debug, Clone)]
pub struct NodeTrace {
    /// Dataset rows in this node's region.
    pub rows: Vec<usize>,
    pub labels: RegionLabels,
    pub rejected: usize,
}

#[derive(Debug, Clone)]
pub struct DistillTrace {
    pub nodes: Vec<NodeTrace>,
    pub stop: StopReason,
}

pub fn distill(dataset: &TransitionDataset, critic: &dyn Critic, config: &DistillConfig) -> Result<DistilledPolicy> {
    distill_with_trace(dataset, critic, config).map(|(policy, _)| policy)
}

/// [`distill`], also returning the region and labels of every node.
pub fn distill_with_trace(
    dataset: &TransitionDataset,
    critic: &dyn Critic,
    config: &DistillConfig,
) -> Result<(DistilledPolicy, DistillTrace)> {
    if dataset.is_empty() {
        return Err(Error::Dimension("cannot distil an empty dataset".into()));
    }
    config.validate(dataset.state_dim())?;
    if critic.state_dim() != dataset.state_dim() || critic.action_dim() != dataset.action_dim() {
        return Err(Error::Dimension(format!(
            "critic is {}→{} but the dataset is {}→{}",
            critic.state_dim(),
            critic.action_dim(),
            dataset.state_dim(),
            dataset.action_dim()
        )));
    }

    let mut region: Vec<usize> = (0..dataset.len()).collect();
    let mut nodes = Vec::new();
    let mut traces = Vec::new();
    let mut stop = StopReason::IterationLimit;

    for index in 0..config.n_iteration {
        let states = dataset.states_matrix(&region);
        let subpolicy = LinearSubpolicy::fit(
            &states,
            &dataset.actions_matrix(&region),
            config.ridge_lambda,
            dataset.bounds().clone(),
        )?;
        let predicted: Vec<Vec<f64>> = region.iter().map(|&r| subpolicy.predict(dataset.state(r))).collect();
        let outcome = label_region(
            critic,
            region
                .iter()
                .zip(&predicted)
                .map(|(&r, p)| (dataset.state(r), p.as_slice(), dataset.action(r))),
            config.value_threshold,
        )?;
        let labels = outcome.labels;
        let train_size = region.len();
        let positive_fraction = labels.positive_count() as f64 / train_size as f64;
        log::debug!(
            "node {index}: {train_size} rows, {:.4} accepted",
            positive_fraction
        );

        let terminal = if index + 1 == config.n_iteration {
            Some(StopReason::IterationLimit)
        } else if reproduces_actions(dataset, &region, &predicted) {
            Some(StopReason::ExactFit)
        } else if labels.negative_count() == 0 {
            Some(StopReason::AllAccepted)
        } else if labels.positive_count() == 0 {
            Some(StopReason::NoneAccepted)
        } else if labels.negative_count() < config.min_region_size {
            Some(StopReason::RemainderTooSmall)
        } else {
            None
        };

        let gate = match terminal {
            Some(_) => None,
            None => Some(fit_svm(
                &states,
                &labels,
                SvmParams {
                    c: config.svm_c,
                    epochs: config.svm_epochs,
                    seed: config.seed.wrapping_add(index as u64),
                },
            )?),
        };
        nodes.push(PartitionNode {
            index,
            subpolicy,
            gate,
            train_size,
            positive_fraction,
        });

        let child: Vec<usize> = region
            .iter()
            .zip(labels.iter())
            .filter(|(_, accepted)| !accepted)
            .map(|(&r, _)| r)
            .collect();
        traces.push(NodeTrace {
            rows: std::mem::take(&mut region),
            labels,
            rejected: outcome.rejected,
        });
        if let Some(reason) = terminal {
            stop = reason;
            break;
        }
        debug_assert!(child.len() < train_size);
        region = child;
    }

    let policy = DistilledPolicy::new(nodes, dataset.state_dim(), dataset.bounds().clone(), config.clone())?;
    Ok((policy, DistillTrace { nodes: traces, stop }))
}

/// True when `predicted` matches the recorded actions of `region` to a
/// relative 1e-6, i.e. up to the ridge shrinkage of an exactly linear
/// teacher. Near a critic's optimum such a fit changes Q only in the last
/// bits, so rounding, not the policy, would decide the labels.
fn reproduces_actions(dataset: &TransitionDataset, region: &[usize], predicted: &[Vec<f64>]) -> bool {
    let mut scale: f64 = 1.0;
    let mut worst: f64 = 0.0;
    for (&r, p) in region.iter().zip(predicted) {
        for (a, b) in dataset.action(r).iter().zip(p) {
            scale = scale.max(a.abs());
            worst = worst.max((a - b).abs());
        }
    }
    worst <= EXACT_FIT_TOLERANCE * scale
}

const EXACT_FIT_TOLERANCE: f64 = 1e-6;

/// Optional display names for the report.
#[derive(Debug, Clone, Default)]
pub struct FeatureNames {
    pub features: Option<Vec<String>>,
    pub actions: Option<Vec<String>>,
}

impl FeatureNames {
    fn feature(&self, i: usize) -> String {
        self.features
            .as_ref()
            .and_then(|f| f.get(i).cloned())
            .unwrap_or_else(|| format!("s{i}"))
    }

    fn action(&self, j: usize) -> String {
        self.actions
            .as_ref()
            .and_then(|a| a.get(j).cloned())
            .unwrap_or_else(|| format!("a{j}"))
    }
}

/// Features ordered by decreasing absolute weight; ties keep feature order.
pub fn rank_by_magnitude(weights: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].abs().total_cmp(&weights[a].abs()));
    order
}

/// Plain-text description of every node: gate hyperplane, subpolicy
/// coefficients sorted by magnitude, and training statistics.
pub fn inspect(policy: &DistilledPolicy, names: &FeatureNames) -> String {
    let mut out = String::new();
    let cfg = policy.config();
    let _ = writeln!(
        out,
        "policy: {} node(s), state_dim {}, action_dim {}, value_threshold {}",
        policy.node_count(),
        policy.state_dim(),
        policy.action_dim(),
        cfg.value_threshold
    );
    for node in policy.nodes() {
        let _ = writeln!(out);
        let kind = if node.gate.is_some() { "" } else { " (terminal)" };
        let _ = writeln!(
            out,
            "node {}{kind}: train_size {}, positive_fraction {:.4}",
            node.index, node.train_size, node.positive_fraction
        );
        if let Some(gate) = &node.gate {
            let _ = writeln!(out, "  gate: serve here when decision > 0");
            let _ = writeln!(
                out,
                "    standardized: {}",
                hyperplane_text(gate.weights(), gate.bias(), names)
            );
            let (w_raw, b_raw) = gate.raw_hyperplane();
            let _ = writeln!(out, "    raw units:    {}", hyperplane_text(&w_raw, b_raw, names));
            let dominant = rank_by_magnitude(gate.weights())[0];
            let _ = writeln!(out, "    dominant feature: {}", names.feature(dominant));
        }
        let _ = writeln!(out, "  subpolicy:");
        let weights = node.subpolicy.weights();
        for j in 0..policy.action_dim() {
            let row: Vec<f64> = weights.row(j).iter().copied().collect();
            let _ = writeln!(
                out,
                "    {} = {:+.6} (intercept)",
                names.action(j),
                node.subpolicy.bias()[j]
            );
            for i in rank_by_magnitude(&row) {
                let _ = writeln!(out, "      {:<12} {:+.6}", names.feature(i), row[i]);
            }
        }
    }
    out
}

fn hyperplane_text(weights: &[f64], bias: f64, names: &FeatureNames) -> String {
    let mut text = String::new();
    for (i, w) in weights.iter().enumerate() {
        let _ = write!(text, "{w:+.6}*{} ", names.feature(i));
    }
    let _ = write!(text, "{bias:+.6}");
    text
}

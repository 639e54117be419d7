//! Forward-only inference for exported feed-forward networks.
//!
//! Weight documents look like
//!
//! ```json
//! { "input": "state_action",
//!   "output_scale": [2.0],
//!   "layers": [ { "w": [[...], ...], "b": [...], "act": "relu" }, ... ] }
//! ```
//!
//! with `w` stored row-major as `out × in`. Values exported as 32-bit floats
//! are widened to `f64` on load.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// Actor: input is the state.
    State,
    /// Critic: input is the concatenation `[state, action]`.
    StateAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Vec<f64>,
    bias: Vec<f64>,
    inputs: usize,
    activation: Activation,
}

impl DenseLayer {
    /// `weights` holds `bias.len()` rows of `inputs` values each.
    pub fn new(weights: Vec<f64>, bias: Vec<f64>, inputs: usize, activation: Activation) -> Result<Self> {
        if inputs == 0 || bias.is_empty() || weights.len() != inputs * bias.len() {
            return Err(Error::Dimension(format!(
                "layer weights have {} entries for {} outputs × {inputs} inputs",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("layer contains non-finite weights".into()));
        }
        Ok(DenseLayer {
            weights,
            bias,
            inputs,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .chunks(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| {
                let z = row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x);
                self.activation.apply(z)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpNetwork {
    layers: Vec<DenseLayer>,
    input_kind: InputKind,
    output_scale: Option<Vec<f64>>,
}

impl MlpNetwork {
    pub fn new(layers: Vec<DenseLayer>, input_kind: InputKind, output_scale: Option<Vec<f64>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Dimension("network has no layers".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::Dimension(format!(
                    "layer {k} outputs {} values but layer {} expects {}",
                    pair[0].outputs(),
                    k + 1,
                    pair[1].inputs()
                )));
            }
        }
        let outputs = layers.last().map(DenseLayer::outputs).unwrap_or(0);
        if input_kind == InputKind::StateAction && outputs != 1 {
            return Err(Error::Dimension(format!(
                "a state_action critic must have scalar output, found {outputs}"
            )));
        }
        if let Some(scale) = &output_scale {
            if scale.len() != outputs {
                return Err(Error::Dimension(format!(
                    "output_scale has {} entries for {outputs} outputs",
                    scale.len()
                )));
            }
            if scale.iter().any(|s| !s.is_finite()) {
                return Err(Error::Numeric("output_scale is not finite".into()));
            }
        }
        Ok(MlpNetwork {
            layers,
            input_kind,
            output_scale,
        })
    }

    pub fn input_kind(&self) -> InputKind {
        self.input_kind
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_size() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.input_size(),
                input.len()
            )));
        }
        let mut activations = self.layers[0].forward(input);
        for layer in &self.layers[1..] {
            activations = layer.forward(&activations);
        }
        if let Some(scale) = &self.output_scale {
            for (a, s) in activations.iter_mut().zip(scale) {
                *a *= s;
            }
        }
        Ok(activations)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(path, message),
            other => Error::format(path, other.to_string()),
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NetworkDocument =
            serde_json::from_str(text).map_err(|e| Error::format("<network>", e.to_string()))?;
        doc.into_network()
    }

    pub fn to_json(&self) -> String {
        let doc = NetworkDocument {
            input: self.input_kind,
            output_scale: self.output_scale.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    w: l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect(),
                    b: l.bias.clone(),
                    act: l.activation,
                })
                .collect(),
        };
        crate::format::to_exact_json(&doc).expect("network serialises")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDocument {
    input: InputKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output_scale: Option<Vec<f64>>,
    layers: Vec<LayerDocument>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDocument {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
    act: Activation,
}

impl NetworkDocument {
    fn into_network(self) -> Result<MlpNetwork> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for (k, layer) in self.layers.into_iter().enumerate() {
            let inputs = layer.w.first().map(Vec::len).unwrap_or(0);
            if layer.w.len() != layer.b.len() {
                return Err(Error::Dimension(format!(
                    "layer {k} has {} weight rows but {} biases",
                    layer.w.len(),
                    layer.b.len()
                )));
            }
            if layer.w.iter().any(|row| row.len() != inputs) {
                return Err(Error::Dimension(format!("layer {k} has ragged weight rows")));
            }
            let weights = layer.w.into_iter().flatten().collect();
            layers.push(DenseLayer::new(weights, layer.b, inputs, layer.act)?);
        }
        MlpNetwork::new(layers, self.input, self.output_scale)
    }
}

/// One reference input/output pair recorded by the exporting framework.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForwardFixture {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

pub fn load_fixtures(path: &Path) -> Result<Vec<ForwardFixture>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// Anything that can score state–action pairs for labeling.
pub trait Critic: Send + Sync {
    fn state_dim(&self) -> usize;

    fn action_dim(&self) -> usize;

    /// Estimated return of taking `action` in `state`.
    fn q_value(&self, state: &[f64], action: &[f64]) -> Result<f64>;

    /// Estimated return of the teacher acting from `state`. Implementations
    /// without a teacher actor score `fallback_action` instead.
    fn state_value(&self, state: &[f64], fallback_action: Option<&[f64]>) -> Result<f64>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    #[default]
    Q1Only,
    MinTwin,
}

/// Exported TD3 critic(s), optionally with the teacher actor.
#[derive(Debug, Clone)]
pub struct CriticOracle {
    q1: MlpNetwork,
    q2: Option<MlpNetwork>,
    actor: Option<MlpNetwork>,
    mode: CriticMode,
    state_dim: usize,
    action_dim: usize,
}

impl CriticOracle {
    pub fn new(
        q1: MlpNetwork,
        q2: Option<MlpNetwork>,
        actor: Option<MlpNetwork>,
        mode: CriticMode,
        state_dim: usize,
    ) -> Result<Self> {
        if q1.input_kind() != InputKind::StateAction {
            return Err(Error::Dimension("critic network must take state_action input".into()));
        }
        let joint = q1.input_size();
        if state_dim == 0 || state_dim >= joint {
            return Err(Error::Dimension(format!(
                "critic input size {joint} cannot hold a state of size {state_dim} and an action"
            )));
        }
        let action_dim = joint - state_dim;
        if mode == CriticMode::MinTwin && q2.is_none() {
            return Err(Error::Config("min_twin mode requires a second critic".into()));
        }
        if let Some(q2) = &q2 {
            if q2.input_kind() != InputKind::StateAction || q2.input_size() != joint {
                return Err(Error::Dimension("twin critics have different input sizes".into()));
            }
        }
        if let Some(actor) = &actor {
            if actor.input_kind() != InputKind::State
                || actor.input_size() != state_dim
                || actor.output_size() != action_dim
            {
                return Err(Error::Dimension(format!(
                    "actor maps {} -> {} but the critic expects {state_dim} -> {action_dim}",
                    actor.input_size(),
                    actor.output_size()
                )));
            }
        }
        Ok(CriticOracle {
            q1,
            q2,
            actor,
            mode,
            state_dim,
            action_dim,
        })
    }

    pub fn mode(&self) -> CriticMode {
        self.mode
    }

    pub fn actor(&self) -> Option<&MlpNetwork> {
        self.actor.as_ref()
    }
}

impl Critic for CriticOracle {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn q_value(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        if state.len() != self.state_dim || action.len() != self.action_dim {
            return Err(Error::Dimension(format!(
                "critic expects state {} / action {}, got {} / {}",
                self.state_dim,
                self.action_dim,
                state.len(),
                action.len()
            )));
        }
        let joint: Vec<f64> = state.iter().chain(action).copied().collect();
        let q1 = self.q1.forward(&joint)?[0];
        match (self.mode, &self.q2) {
            (CriticMode::MinTwin, Some(q2)) => Ok(q1.min(q2.forward(&joint)?[0])),
            _ => Ok(q1),
        }
    }

    fn state_value(&self, state: &[f64], fallback_action: Option<&[f64]>) -> Result<f64> {
        match (&self.actor, fallback_action) {
            (Some(actor), _) => {
                let action = actor.forward(state)?;
                self.q_value(state, &action)
            }
            (None, Some(action)) => self.q_value(state, action),
            (None, None) => Err(Error::Config(
                "state value needs an exported actor or a fallback action".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(w: &[&[f64]], b: &[f64], act: Activation) -> DenseLayer {
        let inputs = w[0].len();
        DenseLayer::new(w.iter().flat_map(|r| r.iter().copied()).collect(), b.to_vec(), inputs, act).unwrap()
    }

    fn constant_critic(value: f64, joint: usize) -> MlpNetwork {
        MlpNetwork::new(
            vec![layer(&[&vec![0.0; joint]], &[value], Activation::Linear)],
            InputKind::StateAction,
            None,
        )
        .unwrap()
    }

    /// Q(s, a) = a for one-dimensional state and action.
    fn action_critic() -> MlpNetwork {
        MlpNetwork::new(
            vec![layer(&[&[0.0, 1.0]], &[0.0], Activation::Linear)],
            InputKind::StateAction,
            None,
        )
        .unwrap()
    }

    #[test]
    fn identity_network() {
        let net = MlpNetwork::from_json(r#"{"input":"state","layers":[{"w":[[1]],"b":[0],"act":"linear"}]}"#).unwrap();
        assert_eq!(net.forward(&[3.5]).unwrap(), vec![3.5]);
    }

    #[test]
    fn relu_layer_hand_arithmetic() {
        let net = MlpNetwork::new(vec![layer(&[&[1.0, -1.0]], &[-1.0], Activation::Relu)], InputKind::State, None).unwrap();
        assert_eq!(net.forward(&[2.0, 0.0]).unwrap(), vec![1.0]);
        assert_eq!(net.forward(&[0.0, 2.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn output_scale_multiplies_final_activation() {
        let net = MlpNetwork::new(
            vec![layer(&[&[1.0], &[1.0]], &[0.0, 0.0], Activation::Tanh)],
            InputKind::State,
            Some(vec![2.0, -1.0]),
        )
        .unwrap();
        let out = net.forward(&[0.5]).unwrap();
        assert_eq!(out, vec![2.0 * 0.5f64.tanh(), -(0.5f64.tanh())]);
    }

    #[test]
    fn chain_break_is_rejected() {
        let doc = r#"{"input":"state","layers":[
            {"w":[[1],[1],[1],[1]],"b":[0,0,0,0],"act":"relu"},
            {"w":[[1,1,1]],"b":[0],"act":"linear"}]}"#;
        let err = MlpNetwork::from_json(doc).unwrap_err();
        assert!(err.to_string().contains("layer 0 outputs 4"), "{err}");
    }

    #[test]
    fn unknown_activation_is_rejected() {
        let doc = r#"{"input":"state","layers":[{"w":[[1]],"b":[0],"act":"gelu"}]}"#;
        assert!(MlpNetwork::from_json(doc).is_err());
    }

    #[test]
    fn input_length_mismatch() {
        let net = action_critic();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_weights_yield_the_bias_chain() {
        let net = MlpNetwork::new(
            vec![
                layer(&[&[0.0, 0.0], &[0.0, 0.0]], &[0.5, -2.0], Activation::Relu),
                layer(&[&[0.0, 0.0]], &[0.25], Activation::Tanh),
            ],
            InputKind::State,
            None,
        )
        .unwrap();
        assert_eq!(net.forward(&[9.0, -9.0]).unwrap(), vec![0.25f64.tanh()]);
    }

    #[test]
    fn json_round_trip() {
        let net = MlpNetwork::new(
            vec![layer(&[&[0.1, -0.3]], &[0.7], Activation::Tanh)],
            InputKind::State,
            Some(vec![2.0]),
        )
        .unwrap();
        assert_eq!(MlpNetwork::from_json(&net.to_json()).unwrap(), net);
    }

    #[test]
    fn q1_only_and_min_twin() {
        let oracle = CriticOracle::new(constant_critic(5.0, 2), None, None, CriticMode::Q1Only, 1).unwrap();
        assert_eq!(oracle.q_value(&[0.0], &[0.0]).unwrap(), 5.0);

        let twin = CriticOracle::new(
            constant_critic(5.0, 2),
            Some(constant_critic(3.0, 2)),
            None,
            CriticMode::MinTwin,
            1,
        )
        .unwrap();
        assert_eq!(twin.q_value(&[0.0], &[0.0]).unwrap(), 3.0);
    }

    #[test]
    fn min_twin_requires_second_critic() {
        assert!(CriticOracle::new(constant_critic(5.0, 2), None, None, CriticMode::MinTwin, 1).is_err());
    }

    #[test]
    fn state_value_uses_actor_then_fallback() {
        let actor = MlpNetwork::new(vec![layer(&[&[1.0]], &[0.0], Activation::Linear)], InputKind::State, None).unwrap();
        let with_actor = CriticOracle::new(action_critic(), None, Some(actor), CriticMode::Q1Only, 1).unwrap();
        assert_eq!(with_actor.state_value(&[2.0], None).unwrap(), 2.0);

        let without = CriticOracle::new(action_critic(), None, None, CriticMode::Q1Only, 1).unwrap();
        assert_eq!(without.state_value(&[2.0], Some(&[0.5])).unwrap(), 0.5);
        assert!(without.state_value(&[2.0], None).is_err());
    }

    #[test]
    fn actor_shape_must_match_critic() {
        let actor = MlpNetwork::new(
            vec![layer(&[&[1.0], &[1.0]], &[0.0, 0.0], Activation::Linear)],
            InputKind::State,
            None,
        )
        .unwrap();
        assert!(CriticOracle::new(action_critic(), None, Some(actor), CriticMode::Q1Only, 1).is_err());
    }
}

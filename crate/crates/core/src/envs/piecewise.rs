//! Synthetic piecewise-linear control task with a closed-form critic.
//!
//! The state space `[-1, 1)^d` is cut by `K − 1` random halfspaces. A state
//! is assigned map `k + 1` for the first halfspace `k` whose decision value
//! is positive, and map 0 if none is. The optimal action is that map's
//! affine function of the state, and the reward for action `a` in state `s`
//! is `1 − ‖a − π*(s)‖²`, so the optimum is 1 per step.
//!
//! Every halfspace claims `region_share` of the volume left unclaimed by its
//! predecessors, so the regions form a chain of shrinking shares. All maps
//! share one slope up to a small per-region perturbation; every region after
//! the first is shifted by an action offset of length `region_offset`.
//!
//! The recorded teacher is a slightly imperfect black box: it adds a
//! rapidly oscillating unit-norm deviation of size `teacher_deviation` to `π*`. Its state value
//! is therefore `1 − teacher_deviation²`, and a subpolicy that tracks `π*`
//! more closely than the teacher scores above it.
//!
//! Dynamics: a point mass on the torus, `s' = wrap(s + 0.1·a + σ·ξ)` with
//! seeded Gaussian process noise `ξ`.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{EnvKind, EnvSpec, Environment, StepResult, DEFAULT_EPISODE_LENGTH, POINT_MASS_GAIN};
use crate::dataset::{ActionBounds, DatasetManifest, TransitionDataset};
use crate::error::{Error, Result};
use crate::learners::LinearSubpolicy;
use crate::nn::{Activation, Critic, DenseLayer, InputKind, MlpNetwork};

const PROBE_SAMPLES: usize = 20_000;

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseOptions {
    pub regions: usize,
    pub state_dim: usize,
    pub seed: u64,
    /// Fraction of the not-yet-claimed state volume each halfspace claims.
    pub region_share: f64,
    /// Magnitude of the affine map shared by all regions.
    pub map_scale: f64,
    /// Magnitude of each region's own slope perturbation.
    pub map_spread: f64,
    /// Distance between the action offsets of consecutive regions.
    pub region_offset: f64,
    pub teacher_deviation: f64,
    /// Spatial frequency of the teacher's deviation pattern.
    pub deviation_frequency: f64,
    pub process_noise: f64,
    pub max_steps: usize,
}

impl PiecewiseOptions {
    pub fn new(regions: usize, state_dim: usize, seed: u64) -> Self {
        PiecewiseOptions {
            regions,
            state_dim,
            seed,
            region_share: 0.95,
            map_scale: 0.5,
            map_spread: 0.05,
            region_offset: 0.25,
            teacher_deviation: 0.1,
            deviation_frequency: 20.0,
            process_noise: 0.25,
            max_steps: DEFAULT_EPISODE_LENGTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Halfspace {
    pub fn value(&self, state: &[f64]) -> f64 {
        self.normal.iter().zip(state).map(|(w, x)| w * x).sum::<f64>() + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AffineMap {
    #[serde(rename = "W")]
    weights: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl AffineMap {
    fn apply(&self, state: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(state).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Deviation {
    scale: f64,
    frequency: f64,
    directions: Vec<Vec<f64>>,
    phases: Vec<f64>,
}

impl Deviation {
    /// Unit vector varying smoothly with the state.
    fn unit(&self, state: &[f64]) -> Vec<f64> {
        let mut z: Vec<f64> = self
            .directions
            .iter()
            .zip(&self.phases)
            .map(|(d, p)| (self.frequency * d.iter().zip(state).map(|(a, b)| a * b).sum::<f64>() + p).sin())
            .collect();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            z.iter_mut().for_each(|v| *v = 0.0);
            z[0] = 1.0;
        } else {
            z.iter_mut().for_each(|v| *v /= norm);
        }
        z
    }
}

/// Everything defining one synthetic task. Serialises to the descriptor
/// file consumed by `builtin:piecewise:<file>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseTask {
    kind: String,
    state_dim: usize,
    halfspaces: Vec<Halfspace>,
    maps: Vec<AffineMap>,
    deviation: Deviation,
    process_noise: f64,
    max_steps: usize,
}

const DESCRIPTOR_KIND: &str = "piecewise_analytic";

impl PiecewiseTask {
    pub fn generate(options: &PiecewiseOptions) -> Result<Self> {
        let d = options.state_dim;
        if options.regions == 0 || d == 0 {
            return Err(Error::Config("piecewise task needs K >= 1 regions and d >= 1".into()));
        }
        if !(0.0 < options.region_share && options.region_share < 1.0) {
            return Err(Error::Config("region_share must lie in (0, 1)".into()));
        }
        let magnitudes = [options.map_scale, options.map_spread, options.region_offset, options.teacher_deviation];
        if magnitudes.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || options.max_steps == 0 {
            return Err(Error::Config(
                "map magnitudes and teacher_deviation must be non-negative, max_steps >= 1".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

        let probe: Vec<Vec<f64>> = (0..PROBE_SAMPLES)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let mut unclaimed = vec![true; probe.len()];
        let mut halfspaces = Vec::with_capacity(options.regions - 1);
        for _ in 1..options.regions {
            let normal = unit_gaussian(&mut rng, d);
            let mut values: Vec<f64> = probe
                .iter()
                .zip(&unclaimed)
                .filter(|(_, u)| **u)
                .map(|(p, _)| dot(&normal, p))
                .collect();
            values.sort_by(f64::total_cmp);
            let cut = ((1.0 - options.region_share) * values.len() as f64) as usize;
            let offset = -values.get(cut.min(values.len().saturating_sub(1))).copied().unwrap_or(0.0);
            let h = Halfspace { normal, offset };
            for (p, u) in probe.iter().zip(unclaimed.iter_mut()) {
                if *u && h.value(p) > 0.0 {
                    *u = false;
                }
            }
            halfspaces.push(h);
        }

        // Regions in the order the halfspaces claim them: map 1, 2, …, K−1,
        // then the leftover map 0. The first keeps the shared offset; every
        // later one is shifted by `region_offset` along its own direction,
        // orthogonal to the previous ones while the dimension allows.
        let base = random_map(&mut rng, d);
        let mut directions: Vec<Vec<f64>> = Vec::new();
        let mut offsets = vec![vec![0.0; d]];
        for _ in 1..options.regions {
            let mut e = unit_gaussian(&mut rng, d);
            for prev in directions.iter().rev().take(d.saturating_sub(1)) {
                let p = dot(&e, prev);
                e.iter_mut().zip(prev).for_each(|(x, y)| *x -= p * y);
            }
            let norm = dot(&e, &e).sqrt();
            e.iter_mut().for_each(|x| *x /= norm);
            offsets.push(e.iter().map(|x| options.region_offset * x).collect());
            directions.push(e);
        }
        let maps: Vec<AffineMap> = (0..options.regions)
            .map(|m| {
                let level = if m == 0 { options.regions - 1 } else { m - 1 };
                let own = random_map(&mut rng, d);
                let mix = |a: f64, b: f64| options.map_scale * a + options.map_spread * b;
                AffineMap {
                    weights: base
                        .weights
                        .iter()
                        .zip(&own.weights)
                        .map(|(r0, r1)| r0.iter().zip(r1).map(|(a, b)| mix(*a, *b)).collect())
                        .collect(),
                    b: base
                        .b
                        .iter()
                        .zip(&own.b)
                        .zip(&offsets[level])
                        .map(|((a, b), c)| mix(*a, *b) + c)
                        .collect(),
                }
            })
            .collect();
        let reach = probe
            .iter()
            .flat_map(|p| maps.iter().flat_map(move |m| m.apply(p)))
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        if reach + options.teacher_deviation > 1.0 {
            return Err(Error::Config(format!(
                "optimal actions reach {reach:.3}; with teacher_deviation they leave the action box [-1, 1]"
            )));
        }

        let deviation = Deviation {
            scale: options.teacher_deviation,
            frequency: options.deviation_frequency,
            directions: (0..d).map(|_| unit_gaussian(&mut rng, d)).collect(),
            phases: (0..d).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect(),
        };

        Ok(PiecewiseTask {
            kind: DESCRIPTOR_KIND.into(),
            state_dim: d,
            halfspaces,
            maps,
            deviation,
            process_noise: options.process_noise,
            max_steps: options.max_steps,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.state_dim
    }

    pub fn regions(&self) -> usize {
        self.maps.len()
    }

    pub fn bounds(&self) -> ActionBounds {
        ActionBounds::symmetric(self.action_dim(), 1.0)
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn teacher_deviation(&self) -> f64 {
        self.deviation.scale
    }

    /// Index of the map that is optimal in `state`.
    pub fn region(&self, state: &[f64]) -> usize {
        self.halfspaces
            .iter()
            .position(|h| h.value(state) > 0.0)
            .map_or(0, |k| k + 1)
    }

    pub fn optimal_action(&self, state: &[f64]) -> Vec<f64> {
        self.maps[self.region(state)].apply(state)
    }

    /// The recorded teacher: `π*(s)` plus the smooth deviation.
    pub fn teacher_action(&self, state: &[f64]) -> Vec<f64> {
        let mut action = self.optimal_action(state);
        if self.deviation.scale != 0.0 {
            for (a, u) in action.iter_mut().zip(self.deviation.unit(state)) {
                *a += self.deviation.scale * u;
            }
        }
        self.bounds().clamp(&mut action);
        action
    }

    /// Per-step reward `1 − ‖a − π*(s)‖²`.
    pub fn reward(&self, state: &[f64], action: &[f64]) -> f64 {
        let target = self.optimal_action(state);
        1.0 - action.iter().zip(&target).map(|(a, t)| (a - t) * (a - t)).sum::<f64>()
    }

    /// The generating maps as (unclamped-in-practice) subpolicies.
    pub fn teacher_maps(&self) -> Vec<LinearSubpolicy> {
        let d = self.state_dim;
        self.maps
            .iter()
            .map(|m| {
                let flat: Vec<f64> = m.weights.iter().flatten().copied().collect();
                LinearSubpolicy::new(
                    DMatrix::from_row_slice(d, d, &flat),
                    DVector::from_vec(m.b.clone()),
                    self.bounds(),
                )
                .expect("generated maps are finite")
            })
            .collect()
    }

    pub fn env(&self) -> PiecewiseEnv {
        PiecewiseEnv {
            spec: EnvSpec {
                state_dim: self.state_dim,
                action_dim: self.state_dim,
                action_low: vec![-1.0; self.state_dim],
                action_high: vec![1.0; self.state_dim],
                max_steps: self.max_steps,
                kind: EnvKind::Builtin("piecewise".into()),
            },
            task: self.clone(),
            state: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            steps: 0,
        }
    }

    pub fn critic(&self) -> AnalyticCritic {
        AnalyticCritic { task: self.clone() }
    }

    /// Teacher rollouts: episode `e` is reset with `base_seed + e`.
    pub fn record_dataset(&self, episodes: usize, base_seed: u64) -> Result<(TransitionDataset, DatasetManifest)> {
        let mut env = self.env();
        let mut states = Vec::new();
        let mut actions = Vec::new();
        for e in 0..episodes {
            let mut state = env.reset(base_seed.wrapping_add(e as u64))?;
            loop {
                let action = self.teacher_action(&state);
                states.extend_from_slice(&state);
                actions.extend_from_slice(&action);
                let step = env.step(&action)?;
                if step.done() {
                    break;
                }
                state = step.observation;
            }
        }
        let dataset = TransitionDataset::new(states, actions, self.state_dim, self.bounds())?;
        let manifest = DatasetManifest {
            state_dim: self.state_dim,
            action_dim: self.state_dim,
            action_low: vec![-1.0; self.state_dim],
            action_high: vec![1.0; self.state_dim],
            episode_count: episodes as u64,
            feature_names: None,
            action_names: None,
        };
        Ok((dataset, manifest))
    }

    pub fn to_json(&self) -> String {
        crate::format::to_exact_json(self).expect("task serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let task: PiecewiseTask =
            serde_json::from_str(text).map_err(|e| Error::format("<descriptor>", e.to_string()))?;
        task.validate()?;
        Ok(task)
    }

    fn validate(&self) -> Result<()> {
        let d = self.state_dim;
        let bad = |m: &str| Err(Error::format("<descriptor>", m.to_string()));
        if self.kind != DESCRIPTOR_KIND {
            return bad("not a piecewise_analytic descriptor");
        }
        if d == 0 || self.maps.len() != self.halfspaces.len() + 1 {
            return bad("need state_dim >= 1 and one more map than halfspaces");
        }
        if self.halfspaces.iter().any(|h| h.normal.len() != d) {
            return bad("halfspace normal has the wrong length");
        }
        if self
            .maps
            .iter()
            .any(|m| m.b.len() != d || m.weights.len() != d || m.weights.iter().any(|r| r.len() != d))
        {
            return bad("map has the wrong shape");
        }
        if self.deviation.directions.len() != d
            || self.deviation.phases.len() != d
            || self.deviation.directions.iter().any(|r| r.len() != d)
        {
            return bad("deviation has the wrong shape");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::format(path, message),
            other => other,
        })
    }
}

/// Closed-form critic of a [`PiecewiseTask`]:
/// `Q(s, a) = 1 − ‖a − π*(s)‖²` and `V(s) = Q(s, teacher(s))`.
#[derive(Debug, Clone)]
pub struct AnalyticCritic {
    task: PiecewiseTask,
}

impl AnalyticCritic {
    pub fn task(&self) -> &PiecewiseTask {
        &self.task
    }
}

impl Critic for AnalyticCritic {
    fn state_dim(&self) -> usize {
        self.task.state_dim
    }

    fn action_dim(&self) -> usize {
        self.task.state_dim
    }

    fn q_value(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        if state.len() != self.task.state_dim || action.len() != self.task.state_dim {
            return Err(Error::Dimension("analytic critic input has the wrong length".into()));
        }
        Ok(self.task.reward(state, action))
    }

    fn state_value(&self, state: &[f64], _fallback_action: Option<&[f64]>) -> Result<f64> {
        let teacher = self.task.teacher_action(state);
        self.q_value(state, &teacher)
    }
}

/// Environment instance of a [`PiecewiseTask`].
#[derive(Debug, Clone)]
pub struct PiecewiseEnv {
    spec: EnvSpec,
    task: PiecewiseTask,
    state: Option<Vec<f64>>,
    rng: ChaCha8Rng,
    steps: usize,
}

impl Environment for PiecewiseEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.task.state_dim;
        let start: Vec<f64> = (0..d).map(|_| self.rng.random_range(-1.0..1.0)).collect();
        self.state = Some(start.clone());
        self.steps = 0;
        Ok(start)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != self.spec.action_dim {
            return Err(Error::Dimension("action has the wrong length".into()));
        }
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Env("step called before reset".into()))?;
        let mut action = action.to_vec();
        self.task.bounds().clamp(&mut action);
        let reward = self.task.reward(state, &action);
        for (x, a) in state.iter_mut().zip(&action) {
            let noise: f64 = StandardNormal.sample(&mut self.rng);
            *x = wrap(*x + POINT_MASS_GAIN * a + self.task.process_noise * noise);
        }
        self.steps += 1;
        Ok(StepResult {
            observation: state.clone(),
            reward,
            terminated: false,
            truncated: self.steps >= self.spec.max_steps,
        })
    }
}

/// Maps `x` onto `[-1, 1)`.
fn wrap(x: f64) -> f64 {
    let y = x - 2.0 * ((x + 1.0) / 2.0).floor();
    if y >= 1.0 {
        -1.0
    } else {
        y
    }
}

fn unit_gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Affine map with `Σ|W_ij| + |b_i| = 1` on every row, so outputs stay in
/// `[-1, 1]` on the state box.
fn random_map(rng: &mut ChaCha8Rng, d: usize) -> AffineMap {
    let mut weights = Vec::with_capacity(d);
    let mut bias = Vec::with_capacity(d);
    for _ in 0..d {
        let row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: f64 = rng.random_range(-1.0..1.0);
        let total = row.iter().map(|v| v.abs()).sum::<f64>() + b.abs();
        let total = if total > 0.0 { total } else { 1.0 };
        weights.push(row.into_iter().map(|v| v / total).collect());
        bias.push(b / total);
    }
    AffineMap { weights, b: bias }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// ReLU network computing `1 − Σ_j f(a_j − (W s + b)_j)`, where `f` is the
/// piecewise-linear interpolant of `u²` on knots `0, ±h, …, ±knots·h`. The
/// value is exact whenever every residual sits on a knot, in particular at
/// `a = W s + b` where it equals 1.
pub fn quadratic_critic_network(weights: &DMatrix<f64>, bias: &DVector<f64>, knots: usize, spacing: f64) -> Result<MlpNetwork> {
    let (d_a, d_s) = weights.shape();
    if bias.len() != d_a || knots == 0 || !(spacing > 0.0) {
        return Err(Error::Config("quadratic critic needs matching shapes, knots >= 1, spacing > 0".into()));
    }
    let inputs = d_s + d_a;
    let mut hidden_w = Vec::new();
    let mut hidden_b = Vec::new();
    let mut out_w = Vec::new();
    for j in 0..d_a {
        for sign in [1.0, -1.0] {
            for k in 0..knots {
                // sign·(a_j − W_j·s − b_j) − k·h
                for i in 0..d_s {
                    hidden_w.push(-sign * weights[(j, i)]);
                }
                for jj in 0..d_a {
                    hidden_w.push(if jj == j { sign } else { 0.0 });
                }
                hidden_b.push(-sign * bias[j] - k as f64 * spacing);
                out_w.push(if k == 0 { -spacing } else { -2.0 * spacing });
            }
        }
    }
    let hidden = DenseLayer::new(hidden_w, hidden_b, inputs, Activation::Relu)?;
    let width = out_w.len();
    let output = DenseLayer::new(out_w, vec![1.0], width, Activation::Linear)?;
    MlpNetwork::new(vec![hidden, output], InputKind::StateAction, None)
}

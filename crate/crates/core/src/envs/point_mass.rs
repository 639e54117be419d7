use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvKind, EnvSpec, Environment, StepResult, DEFAULT_EPISODE_LENGTH, POINT_MASS_GAIN};
use crate::error::{Error, Result};

/// Point mass in the box `[-1, 1]^d`: `x' = clamp(x + 0.1·a)`, reward `−‖x'‖²`.
/// Initial positions are uniform in the box.
#[derive(Debug, Clone)]
pub struct PointMass {
    spec: EnvSpec,
    position: Option<Vec<f64>>,
    steps: usize,
}

impl PointMass {
    pub fn new(dims: usize) -> Self {
        PointMass {
            spec: EnvSpec {
                state_dim: dims,
                action_dim: dims,
                action_low: vec![-1.0; dims],
                action_high: vec![1.0; dims],
                max_steps: DEFAULT_EPISODE_LENGTH,
                kind: EnvKind::Builtin("point-mass".into()),
            },
            position: None,
            steps: 0,
        }
    }

    /// Starts an episode at a chosen position instead of a sampled one.
    pub fn reset_to(&mut self, position: Vec<f64>) -> Result<Vec<f64>> {
        if position.len() != self.spec.state_dim {
            return Err(Error::Dimension("start position has the wrong length".into()));
        }
        self.position = Some(position.iter().map(|x| x.clamp(-1.0, 1.0)).collect());
        self.steps = 0;
        Ok(self.position.clone().unwrap())
    }
}

impl Environment for PointMass {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = (0..self.spec.state_dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        self.reset_to(start)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if action.len() != self.spec.action_dim {
            return Err(Error::Dimension("action has the wrong length".into()));
        }
        let position = self
            .position
            .as_mut()
            .ok_or_else(|| Error::Env("step called before reset".into()))?;
        for (x, a) in position.iter_mut().zip(action) {
            let a = a.clamp(-1.0, 1.0);
            *x = (*x + POINT_MASS_GAIN * a).clamp(-1.0, 1.0);
        }
        self.steps += 1;
        let reward = -position.iter().map(|x| x * x).sum::<f64>();
        Ok(StepResult {
            observation: position.clone(),
            reward,
            terminated: false,
            truncated: self.steps >= self.spec.max_steps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_reset_is_deterministic() {
        let mut env = PointMass::new(2);
        let a = env.reset(7).unwrap();
        let b = env.reset(7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, env.reset(8).unwrap());
    }

    #[test]
    fn dynamics_and_reward() {
        let mut env = PointMass::new(1);
        env.reset_to(vec![0.5]).unwrap();
        let step = env.step(&[1.0]).unwrap();
        assert_eq!(step.observation, vec![0.5 + 0.1]);
        assert_eq!(step.reward, -(0.6f64 * 0.6));

        env.reset_to(vec![0.95]).unwrap();
        assert_eq!(env.step(&[1.0]).unwrap().observation, vec![1.0]);
        // Out-of-range actions are clamped.
        env.reset_to(vec![0.0]).unwrap();
        assert_eq!(env.step(&[-7.0]).unwrap().observation, vec![-0.1]);
    }

    #[test]
    fn truncates_at_max_steps() {
        let mut env = PointMass::new(1);
        env.reset(0).unwrap();
        for _ in 0..DEFAULT_EPISODE_LENGTH - 1 {
            assert!(!env.step(&[0.0]).unwrap().done());
        }
        assert!(env.step(&[0.0]).unwrap().truncated);
    }

    #[test]
    fn step_before_reset_fails() {
        assert!(PointMass::new(1).step(&[0.0]).is_err());
    }
}

use serde::{Deserialize, Serialize};

use super::{argmax, Agent, Phase, ResetDepth};
use crate::error::{Error, Result};
use crate::nn::{reset_layers, AdamState, ForwardCache, GradientSet, Mlp, Rng};
use crate::replay::Transition;

/// Target-network synchronisation rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TargetUpdate {
    /// Polyak averaging with rate `tau` after every update.
    Soft(f64),
    /// Copy the online network every `period` updates.
    Hard(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub lr: f64,
    pub target_update: TargetUpdate,
}

impl Default for DqnConfig {
    fn default() -> Self {
        DqnConfig {
            hidden: vec![64, 64],
            gamma: 0.9,
            lr: 3e-4,
            target_update: TargetUpdate::Hard(1000),
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid("gamma must lie in [0, 1)"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        match self.target_update {
            TargetUpdate::Soft(tau) if !(tau > 0.0 && tau <= 1.0) => {
                Err(Error::invalid("soft target rate must lie in (0, 1]"))
            }
            TargetUpdate::Hard(0) => Err(Error::invalid("target period must be positive")),
            _ => Ok(()),
        }
    }
}

/// Deep Q-network with a target network.
#[derive(Debug, Clone, PartialEq)]
pub struct DqnAgent {
    pub online_q: Mlp,
    pub target_q: Mlp,
    pub adam: AdamState,
    pub config: DqnConfig,
    updates: u64,
}

/// `y = r + γ · max_a Q_target(s′, a)`, or `y = r` on terminal transitions.
pub fn dqn_td_target(batch: &[&Transition], target_q: &Mlp, gamma: f64) -> Result<Vec<f64>> {
    let mut features = vec![0.0; target_q.input_dim()];
    let mut cache = ForwardCache::default();
    batch
        .iter()
        .map(|t| {
            if t.done || gamma == 0.0 {
                return Ok(t.reward);
            }
            if t.next_obs.width() != features.len() {
                return Err(Error::shape("observation width does not match network"));
            }
            t.next_obs.write_features(&mut features);
            target_q.forward_into(&features, &mut cache)?;
            let best = cache.output.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Ok(t.reward + gamma * best)
        })
        .collect()
}

impl DqnAgent {
    pub fn new(obs_width: usize, n_actions: usize, config: DqnConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut dims = vec![obs_width];
        dims.extend(&config.hidden);
        dims.push(n_actions);
        let online_q = Mlp::new(&dims, rng)?;
        Ok(DqnAgent {
            target_q: online_q.clone(),
            adam: AdamState::new(&online_q),
            online_q,
            config,
            updates: 0,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn act_greedy(&self, obs: &[f64]) -> Result<usize> {
        Ok(argmax(&self.online_q.predict(obs)?))
    }

    /// Uniform action with probability `epsilon`, greedy otherwise.
    pub fn act_epsilon(&self, obs: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
        if rng.uniform() < epsilon {
            Ok(rng.below(self.online_q.output_dim()))
        } else {
            self.act_greedy(obs)
        }
    }

    /// One Adam step on the mean squared TD error; returns the loss measured
    /// before the step.
    pub fn dqn_update(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("empty training batch"));
        }
        let targets = dqn_td_target(batch, &self.target_q, self.config.gamma)?;
        let n_actions = self.online_q.output_dim();
        let scale = 2.0 / batch.len() as f64;
        let mut grads = GradientSet::zeros_like(&self.online_q);
        let mut out_grad = vec![0.0; n_actions];
        let mut loss = 0.0;
        let mut features = vec![0.0; self.online_q.input_dim()];
        let mut cache = ForwardCache::default();
        for (t, y) in batch.iter().zip(&targets) {
            if t.obs.width() != features.len() || t.action >= n_actions {
                return Err(Error::shape("transition does not fit the network"));
            }
            t.obs.write_features(&mut features);
            self.online_q.forward_into(&features, &mut cache)?;
            let err = cache.output[t.action] - y;
            loss += err * err;
            out_grad.iter_mut().for_each(|g| *g = 0.0);
            out_grad[t.action] = scale * err;
            self.online_q.backward_into(&cache, &out_grad, &mut grads)?;
        }
        loss /= batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("TD loss"));
        }
        self.adam.step(&mut self.online_q, &grads, self.config.lr)?;
        self.updates += 1;
        match self.config.target_update {
            TargetUpdate::Soft(tau) => self.target_q.soft_update_from(&self.online_q, tau)?,
            TargetUpdate::Hard(period) => {
                if self.updates % period == 0 {
                    self.target_q = self.online_q.clone();
                }
            }
        }
        Ok(loss)
    }
}

impl Agent for DqnAgent {
    fn n_actions(&self) -> usize {
        self.online_q.output_dim()
    }

    fn propose(&self, obs: &[f64], phase: Phase, rng: &mut Rng) -> Result<usize> {
        match phase {
            Phase::Train { epsilon } => self.act_epsilon(obs, epsilon, rng),
            Phase::Eval => self.act_greedy(obs),
        }
    }

    fn action_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.online_q.predict(obs)
    }

    fn action_cvars(&self, _obs: &[f64]) -> Result<Option<Vec<f64>>> {
        Ok(None)
    }

    fn update(&mut self, batch: &[&Transition], _rng: &mut Rng) -> Result<f64> {
        self.dqn_update(batch)
    }

    /// Re-initializes the online network and re-syncs the target to it.
    fn reset(&mut self, depth: ResetDepth, rng: &mut Rng) -> Result<()> {
        let layers = depth.layers_for(self.online_q.n_layers())?;
        reset_layers(&mut self.online_q, &mut self.adam, layers, rng)?;
        self.target_q = self.online_q.clone();
        Ok(())
    }
}

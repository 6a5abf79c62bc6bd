//! N-agent ensemble with sequential staggered resets and value-weighted
//! action composition.
//!
//! Every `reset_interval` environment steps the agent at the cursor `k` is
//! reset and `k` advances cyclically, so each agent is reset once per
//! `N · reset_interval` steps while the others keep their training. Each step,
//! every agent proposes an action; until the first reset the executed proposal
//! is drawn uniformly, afterwards from a softmax over the proposals' values
//! under the *oldest* agent (the one reset longest ago).

mod selection;

use serde::{Deserialize, Serialize};

pub use selection::{
    mix_safe, safe_selection_probs, safe_selection_probs_with, selection_probs,
    selection_probs_with, TemperatureMode, NORM_EPS,
};

use crate::agents::{Agent, Phase, ResetDepth};
use crate::error::{Error, Result};
use crate::nn::Rng;

/// Which values weight the composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMode {
    /// Oldest agent's reward Q-values.
    Reward,
    /// Mixture of reward-based and CVaR-based distributions.
    Safe,
}

/// Full trace of one composed action choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDistribution {
    pub p: Vec<f64>,
    /// Index of the agent whose proposal was executed.
    pub chosen: usize,
    /// Executed action.
    pub action: usize,
    pub proposals: Vec<usize>,
    /// Oldest agent's reward value of each proposal (empty before any reset).
    pub q_hat_values: Vec<f64>,
    /// Oldest agent's CVaR of each proposal (safe mode only).
    pub c_hat_values: Vec<f64>,
    pub oldest_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResetEvent {
    pub step: u64,
    pub agent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Env-step gap between consecutive resets (already divided by N);
    /// `None` disables resets.
    pub reset_interval: Option<u64>,
    pub reset_depth: ResetDepth,
    pub beta: f64,
    pub kappa: f64,
    pub temperature_mode: TemperatureMode,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            reset_interval: None,
            reset_depth: ResetDepth::All,
            beta: 50.0,
            kappa: 0.8,
            temperature_mode: TemperatureMode::NormalizedLogits,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleState<A> {
    agents: Vec<A>,
    next_reset: usize,
    last_reset_step: Vec<i64>,
    any_reset_yet: bool,
    config: EnsembleConfig,
}

impl<A: Agent> EnsembleState<A> {
    pub fn new(agents: Vec<A>, config: EnsembleConfig) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::invalid("ensemble needs at least one agent"));
        }
        if config.reset_interval == Some(0) {
            return Err(Error::invalid("reset interval must be positive"));
        }
        if !(0.0..=1.0).contains(&config.kappa) || !config.beta.is_finite() {
            return Err(Error::invalid("kappa must lie in [0, 1] and beta be finite"));
        }
        let n_actions = agents[0].n_actions();
        if agents.iter().any(|a| a.n_actions() != n_actions) {
            return Err(Error::invalid("ensemble agents disagree on the action count"));
        }
        let n = agents.len();
        Ok(EnsembleState {
            agents,
            next_reset: 0,
            last_reset_step: vec![-1; n],
            any_reset_yet: false,
            config,
        })
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[A] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [A] {
        &mut self.agents
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn next_reset_index(&self) -> usize {
        self.next_reset
    }

    /// Env step of each agent's latest reset, `-1` if never reset.
    pub fn last_reset_steps(&self) -> &[i64] {
        &self.last_reset_step
    }

    pub fn any_reset_yet(&self) -> bool {
        self.any_reset_yet
    }

    /// Agent whose latest reset lies furthest in the past; never-reset agents
    /// count as reset at `-1` and ties go to the lowest index.
    pub fn oldest_agent_index(&self) -> usize {
        oldest_index(&self.last_reset_step)
    }

    /// Collects every agent's proposal and draws the executed one.
    pub fn select_action(
        &self,
        obs: &[f64],
        mode: SelectionMode,
        phase: Phase,
        rng: &mut Rng,
    ) -> Result<SelectionDistribution> {
        let n = self.agents.len();
        let proposals = self
            .agents
            .iter()
            .map(|a| a.propose(obs, phase, rng))
            .collect::<Result<Vec<usize>>>()?;
        let oldest = self.oldest_agent_index();
        let (p, q_hat_values, c_hat_values) = if !self.any_reset_yet || n == 1 {
            (vec![1.0 / n as f64; n], Vec::new(), Vec::new())
        } else {
            let judge = &self.agents[oldest];
            let q = judge.action_values(obs)?;
            let q_hat: Vec<f64> = proposals.iter().map(|&a| q[a]).collect();
            let p_reward = selection_probs_with(&q_hat, self.config.beta, self.config.temperature_mode)?;
            match mode {
                SelectionMode::Reward => (p_reward, q_hat, Vec::new()),
                SelectionMode::Safe => {
                    let c = judge.action_cvars(obs)?.ok_or_else(|| {
                        Error::invalid("safe selection needs agents with a safety critic")
                    })?;
                    let c_hat: Vec<f64> = proposals.iter().map(|&a| c[a]).collect();
                    let p_cost = safe_selection_probs_with(
                        &c_hat,
                        self.config.beta,
                        self.config.temperature_mode,
                    )?;
                    (mix_safe(&p_reward, &p_cost, self.config.kappa)?, q_hat, c_hat)
                }
            }
        };
        let chosen = if n == 1 { 0 } else { rng.categorical(&p) };
        Ok(SelectionDistribution {
            action: proposals[chosen],
            p,
            chosen,
            proposals,
            q_hat_values,
            c_hat_values,
            oldest_index: oldest,
        })
    }

    /// Resets the agent at the cursor when `env_step` is a positive multiple
    /// of the reset interval. The replay buffer is not touched.
    pub fn maybe_reset(&mut self, env_step: u64, rng: &mut Rng) -> Result<Option<ResetEvent>> {
        let Some(interval) = self.config.reset_interval else {
            return Ok(None);
        };
        if env_step == 0 || env_step % interval != 0 {
            return Ok(None);
        }
        let k = self.next_reset;
        self.agents[k].reset(self.config.reset_depth, rng)?;
        self.last_reset_step[k] = env_step as i64;
        self.any_reset_yet = true;
        self.next_reset = (k + 1) % self.agents.len();
        Ok(Some(ResetEvent {
            step: env_step,
            agent: k,
        }))
    }
}

/// Argmin over reset timestamps, lowest index on ties.
pub fn oldest_index(last_reset_step: &[i64]) -> usize {
    let mut best = 0;
    for (i, &t) in last_reset_step.iter().enumerate().skip(1) {
        if t < last_reset_step[best] {
            best = i;
        }
    }
    best
}

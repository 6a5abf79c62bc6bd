//! Learners that occupy the ensemble slots.

mod dqn;
mod safe_ac;

use serde::{Deserialize, Serialize};

pub use dqn::{dqn_td_target, DqnAgent, DqnConfig, TargetUpdate};
pub use safe_ac::{SafeAcAgent, SafeAcConfig, SafeAcLosses};

use crate::error::{Error, Result};
use crate::nn::{normal_pdf, normal_quantile, Rng};
use crate::replay::Transition;

/// How an agent picks its proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    /// Exploring: ε-greedy for value-based agents, a policy sample for actors.
    Train { epsilon: f64 },
    /// Greedy.
    Eval,
}

/// How much of an agent a reset re-initializes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResetDepth {
    All,
    /// The last `n` layers of every network.
    Layers(usize),
}

impl ResetDepth {
    pub(crate) fn layers_for(self, n_layers: usize) -> Result<usize> {
        match self {
            ResetDepth::All => Ok(n_layers),
            ResetDepth::Layers(n) if n <= n_layers => Ok(n),
            ResetDepth::Layers(n) => Err(Error::invalid(format!(
                "reset depth {n} exceeds network depth {n_layers}"
            ))),
        }
    }
}

impl std::fmt::Display for ResetDepth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ResetDepth::All => write!(f, "all"),
            ResetDepth::Layers(n) => write!(f, "{n}"),
        }
    }
}

/// What the ensemble needs from a member.
pub trait Agent: Clone + Send + Sync {
    fn n_actions(&self) -> usize;

    /// The action this agent would take in `obs`.
    fn propose(&self, obs: &[f64], phase: Phase, rng: &mut Rng) -> Result<usize>;

    /// Reward value estimates `Q(s, ·)`.
    fn action_values(&self, obs: &[f64]) -> Result<Vec<f64>>;

    /// CVaR estimates of the discounted cost for every action, if the agent
    /// has a safety critic.
    fn action_cvars(&self, obs: &[f64]) -> Result<Option<Vec<f64>>>;

    /// One training update; returns the (reward) critic loss before the step.
    fn update(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<f64>;

    /// Re-initializes the agent. Depth `All` yields a statistically fresh agent.
    fn reset(&mut self, depth: ResetDepth, rng: &mut Rng) -> Result<()>;
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Linear ε decay clamped at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn new(start: f64, end: f64, decay_steps: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&start) || !(0.0..=1.0).contains(&end) {
            return Err(Error::invalid("epsilon endpoints must lie in [0, 1]"));
        }
        if decay_steps == 0 {
            return Err(Error::invalid("epsilon decay_steps must be positive"));
        }
        Ok(EpsilonSchedule {
            start,
            end,
            decay_steps,
        })
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

/// Gaussian CVaR of the discounted cost sum:
/// `q_c + φ(Φ⁻¹(α)) / α · sqrt(var_c)`, with `α = 1` giving `q_c` exactly.
pub fn cvar(q_c: f64, var_c: f64, alpha_risk: f64) -> Result<f64> {
    Ok(q_c + cvar_std_coefficient(alpha_risk)? * checked_std(var_c)?)
}

fn checked_std(var_c: f64) -> Result<f64> {
    if !(var_c >= 0.0) || !var_c.is_finite() {
        return Err(Error::invalid(format!("variance must be finite and >= 0, got {var_c}")));
    }
    Ok(var_c.sqrt())
}

/// `φ(Φ⁻¹(α)) / α`, the multiplier on the standard deviation.
pub fn cvar_std_coefficient(alpha_risk: f64) -> Result<f64> {
    if !(alpha_risk > 0.0 && alpha_risk <= 1.0) {
        return Err(Error::invalid(format!(
            "alpha_risk must lie in (0, 1], got {alpha_risk}"
        )));
    }
    if alpha_risk == 1.0 {
        return Ok(0.0);
    }
    Ok(normal_pdf(normal_quantile(alpha_risk)?) / alpha_risk)
}

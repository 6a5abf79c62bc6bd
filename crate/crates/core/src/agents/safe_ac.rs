use serde::{Deserialize, Serialize};

use super::{argmax, cvar_std_coefficient, Agent, Phase, ResetDepth};
use crate::error::{Error, Result};
use crate::nn::{reset_layers, softmax, AdamState, GradientSet, Mlp, Rng};
use crate::replay::Transition;

/// The std critic predicts `ln σ`; clamping keeps `exp` finite.
const LOG_STD_RANGE: (f64, f64) = (-30.0, 30.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeAcConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub lr: f64,
    /// Polyak rate for all three critic targets.
    pub tau: f64,
    pub alpha_risk: f64,
    /// Budget `d` on the CVaR of the discounted cost.
    pub cost_budget: f64,
    pub lambda_lr: f64,
    pub lambda_init: f64,
    /// L2 penalty on actor logits.
    pub logit_l2: f64,
}

impl Default for SafeAcConfig {
    fn default() -> Self {
        SafeAcConfig {
            hidden: vec![64, 64],
            gamma: 0.9,
            lr: 3e-4,
            tau: 0.005,
            alpha_risk: 0.5,
            cost_budget: 2.5,
            lambda_lr: 0.01,
            lambda_init: 0.0,
            logit_l2: 1e-4,
        }
    }
}

impl SafeAcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid("gamma must lie in [0, 1)"));
        }
        if !(self.lr > 0.0 && self.lambda_lr > 0.0) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::invalid("tau must lie in (0, 1]"));
        }
        if !(self.alpha_risk > 0.0 && self.alpha_risk <= 1.0) {
            return Err(Error::invalid("alpha_risk must lie in (0, 1]"));
        }
        if !(self.lambda_init >= 0.0) || !(self.logit_l2 >= 0.0) || !self.cost_budget.is_finite() {
            return Err(Error::invalid("lambda_init and logit_l2 must be >= 0, budget finite"));
        }
        Ok(())
    }
}

/// Losses reported by one [`SafeAcAgent::safe_ac_update`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SafeAcLosses {
    pub actor: f64,
    pub reward_critic: f64,
    pub cost_mean_critic: f64,
    pub cost_std_critic: f64,
    /// Lagrange multiplier after the dual step.
    pub lambda: f64,
    /// Batch estimate of the policy's CVaR used by the dual step.
    pub observed_cvar: f64,
}

/// Discrete-action actor-critic with a Gaussian CVaR safety critic and a
/// Lagrangian cost constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeAcAgent {
    pub actor: Mlp,
    pub reward_critic: Mlp,
    pub reward_target: Mlp,
    pub cost_mean_critic: Mlp,
    pub cost_mean_target: Mlp,
    /// Outputs `ln σ` of the discounted cost sum.
    pub cost_std_critic: Mlp,
    pub cost_std_target: Mlp,
    pub adam_actor: AdamState,
    pub adam_reward: AdamState,
    pub adam_cost_mean: AdamState,
    pub adam_cost_std: AdamState,
    pub lambda: f64,
    pub config: SafeAcConfig,
    cvar_coef: f64,
}

fn std_of(raw: f64) -> f64 {
    raw.clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1).exp()
}

impl SafeAcAgent {
    pub fn new(obs_width: usize, n_actions: usize, config: SafeAcConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut dims = vec![obs_width];
        dims.extend(&config.hidden);
        dims.push(n_actions);
        let actor = Mlp::new(&dims, rng)?;
        let reward_critic = Mlp::new(&dims, rng)?;
        let cost_mean_critic = Mlp::new(&dims, rng)?;
        let cost_std_critic = Mlp::new(&dims, rng)?;
        Ok(SafeAcAgent {
            adam_actor: AdamState::new(&actor),
            adam_reward: AdamState::new(&reward_critic),
            adam_cost_mean: AdamState::new(&cost_mean_critic),
            adam_cost_std: AdamState::new(&cost_std_critic),
            reward_target: reward_critic.clone(),
            cost_mean_target: cost_mean_critic.clone(),
            cost_std_target: cost_std_critic.clone(),
            actor,
            reward_critic,
            cost_mean_critic,
            cost_std_critic,
            lambda: config.lambda_init,
            cvar_coef: cvar_std_coefficient(config.alpha_risk)?,
            config,
        })
    }

    pub fn policy(&self, obs: &[f64]) -> Result<Vec<f64>> {
        softmax(&self.actor.predict(obs)?)
    }

    /// Predicted standard deviation of the discounted cost for each action.
    pub fn cost_std(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cost_std_critic.predict(obs)?.into_iter().map(std_of).collect())
    }

    pub fn cvars(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let mean = self.cost_mean_critic.predict(obs)?;
        let std = self.cost_std(obs)?;
        Ok(mean
            .iter()
            .zip(&std)
            .map(|(m, s)| m + self.cvar_coef * s)
            .collect())
    }

    /// One update of every critic, the actor and the multiplier.
    ///
    /// * reward critic: `r + γ Q_r′(s′, a′)`, `a′ ~ π(·|s′)`
    /// * cost mean: `c + γ Q_c′(s′, a′)`
    /// * cost std: square root of the second-moment recursion
    ///   `c² + 2γc Q_c′ + γ²(σ′² + Q_c′²)` minus `Q_c(s, a)²`
    /// * actor: gradient ascent on `Σ_a π(a|s) (Q_r − λ CVaR)` with an L2
    ///   penalty on logits
    /// * λ: projected ascent on `CVaR − d`
    pub fn safe_ac_update(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<SafeAcLosses> {
        if batch.is_empty() {
            return Err(Error::invalid("empty training batch"));
        }
        let n = batch.len() as f64;
        let gamma = self.config.gamma;
        let lambda = self.lambda;
        let n_actions = self.actor.output_dim();

        let mut g_actor = GradientSet::zeros_like(&self.actor);
        let mut g_reward = GradientSet::zeros_like(&self.reward_critic);
        let mut g_cost_mean = GradientSet::zeros_like(&self.cost_mean_critic);
        let mut g_cost_std = GradientSet::zeros_like(&self.cost_std_critic);
        let mut out = SafeAcLosses::default();
        let mut og = vec![0.0; n_actions];

        for t in batch {
            let x = t.obs.features();
            let a = t.action;
            let cont = if t.done { 0.0 } else { 1.0 };

            // Bootstrap quantities at s′ with a′ drawn from the current actor.
            let (qr_next, qc_next, sd_next) = if t.done {
                (0.0, 0.0, 0.0)
            } else {
                let x2 = t.next_obs.features();
                let a2 = rng.categorical(&self.policy(&x2)?);
                (
                    self.reward_target.predict(&x2)?[a2],
                    self.cost_mean_target.predict(&x2)?[a2],
                    std_of(self.cost_std_target.predict(&x2)?[a2]),
                )
            };
            let y_r = t.reward + gamma * cont * qr_next;
            let y_c = t.cost + gamma * cont * qc_next;

            let (qr, cache_r) = self.reward_critic.forward(&x)?;
            let (qc, cache_c) = self.cost_mean_critic.forward(&x)?;
            let (raw_sd, cache_s) = self.cost_std_critic.forward(&x)?;

            let c = t.cost;
            let second_moment = c * c
                + cont * (2.0 * gamma * c * qc_next + gamma * gamma * (sd_next * sd_next + qc_next * qc_next));
            let y_s = (second_moment - qc[a] * qc[a]).max(0.0).sqrt();

            let err_r = qr[a] - y_r;
            out.reward_critic += err_r * err_r;
            og.iter_mut().for_each(|g| *g = 0.0);
            og[a] = 2.0 * err_r / n;
            self.reward_critic.backward_into(&cache_r, &og, &mut g_reward)?;

            let err_c = qc[a] - y_c;
            out.cost_mean_critic += err_c * err_c;
            og[a] = 2.0 * err_c / n;
            self.cost_mean_critic.backward_into(&cache_c, &og, &mut g_cost_mean)?;

            let sd = std_of(raw_sd[a]);
            let err_s = sd - y_s;
            out.cost_std_critic += err_s * err_s;
            let in_range = raw_sd[a] > LOG_STD_RANGE.0 && raw_sd[a] < LOG_STD_RANGE.1;
            og[a] = if in_range { 2.0 * err_s * sd / n } else { 0.0 };
            self.cost_std_critic.backward_into(&cache_s, &og, &mut g_cost_std)?;

            // Actor: exact expectation over the categorical policy at s.
            let (logits, cache_a) = self.actor.forward(&x)?;
            let pi = softmax(&logits)?;
            let sds: Vec<f64> = raw_sd.iter().map(|&r| std_of(r)).collect();
            let cv: Vec<f64> = qc
                .iter()
                .zip(&sds)
                .map(|(m, s)| m + self.cvar_coef * s)
                .collect();
            let adv: Vec<f64> = qr.iter().zip(&cv).map(|(q, c)| q - lambda * c).collect();
            let objective: f64 = pi.iter().zip(&adv).map(|(p, v)| p * v).sum();
            let l2: f64 = logits.iter().map(|z| z * z).sum();
            out.actor += -objective + self.config.logit_l2 * l2;
            out.observed_cvar += pi.iter().zip(&cv).map(|(p, c)| p * c).sum::<f64>();
            for j in 0..n_actions {
                og[j] = (-pi[j] * (adv[j] - objective) + 2.0 * self.config.logit_l2 * logits[j]) / n;
            }
            self.actor.backward_into(&cache_a, &og, &mut g_actor)?;
        }

        out.actor /= n;
        out.reward_critic /= n;
        out.cost_mean_critic /= n;
        out.cost_std_critic /= n;
        out.observed_cvar /= n;
        if ![out.actor, out.reward_critic, out.cost_mean_critic, out.cost_std_critic, out.observed_cvar]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::NonFinite("safe actor-critic loss"));
        }

        let lr = self.config.lr;
        self.adam_reward.step(&mut self.reward_critic, &g_reward, lr)?;
        self.adam_cost_mean.step(&mut self.cost_mean_critic, &g_cost_mean, lr)?;
        self.adam_cost_std.step(&mut self.cost_std_critic, &g_cost_std, lr)?;
        self.adam_actor.step(&mut self.actor, &g_actor, lr)?;

        let tau = self.config.tau;
        self.reward_target.soft_update_from(&self.reward_critic, tau)?;
        self.cost_mean_target.soft_update_from(&self.cost_mean_critic, tau)?;
        self.cost_std_target.soft_update_from(&self.cost_std_critic, tau)?;

        self.lambda =
            (self.lambda + self.config.lambda_lr * (out.observed_cvar - self.config.cost_budget)).max(0.0);
        out.lambda = self.lambda;
        Ok(out)
    }
}

impl Agent for SafeAcAgent {
    fn n_actions(&self) -> usize {
        self.actor.output_dim()
    }

    fn propose(&self, obs: &[f64], phase: Phase, rng: &mut Rng) -> Result<usize> {
        let logits = self.actor.predict(obs)?;
        match phase {
            Phase::Train { .. } => Ok(rng.categorical(&softmax(&logits)?)),
            Phase::Eval => Ok(argmax(&logits)),
        }
    }

    fn action_values(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.reward_critic.predict(obs)
    }

    fn action_cvars(&self, obs: &[f64]) -> Result<Option<Vec<f64>>> {
        self.cvars(obs).map(Some)
    }

    fn update(&mut self, batch: &[&Transition], rng: &mut Rng) -> Result<f64> {
        Ok(self.safe_ac_update(batch, rng)?.reward_critic)
    }

    /// Resets every network (targets re-synced), its optimizer state, and λ.
    fn reset(&mut self, depth: ResetDepth, rng: &mut Rng) -> Result<()> {
        let layers = depth.layers_for(self.actor.n_layers())?;
        reset_layers(&mut self.actor, &mut self.adam_actor, layers, rng)?;
        reset_layers(&mut self.reward_critic, &mut self.adam_reward, layers, rng)?;
        reset_layers(&mut self.cost_mean_critic, &mut self.adam_cost_mean, layers, rng)?;
        reset_layers(&mut self.cost_std_critic, &mut self.adam_cost_std, layers, rng)?;
        self.reward_target = self.reward_critic.clone();
        self.cost_mean_target = self.cost_mean_critic.clone();
        self.cost_std_target = self.cost_std_critic.clone();
        self.lambda = self.config.lambda_init;
        Ok(())
    }
}

//! Experiment runner: the replay-ratio training loop, periodic evaluation,
//! reset bookkeeping, and multi-seed sweeps.

mod config;
mod metrics;
mod sweep;

pub use config::{
    reset_interval_for, Algorithm, ConfigDoc, ConfigValue, ExperimentConfig, CONFIG_KEYS,
};
pub use metrics::{
    collapse_metric, eval_curve, final_return, iqm, normalize_scores, parse_metrics_csv,
    sorted_mean, CollapseReport, MetricsLog, MetricsRow, Normalized, RunSummary,
    SelectionRecord, COLLAPSE_EPS, TRAILING_EVALS,
};
pub use sweep::{sweep, CellReport, RunRecord, SweepCell, SweepOutput, SweepPlan, SweepReport};

use crate::agents::{Agent, DqnAgent, Phase, SafeAcAgent};
use crate::ensemble::{EnsembleConfig, EnsembleState, SelectionMode};
use crate::envs::Env;
use crate::error::{Error, Result};
use crate::nn::Rng;
use crate::replay::{ReplayBuffer, Transition};

/// Random stream ids; each consumer of randomness owns one.
mod stream {
    pub const ACT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const REPLAY: u64 = 3;
    pub const EVAL: u64 = 4;
    pub const RESET: u64 = 5;
    pub const UPDATE: u64 = 6;
    /// Agent `i` is initialized from stream `INIT + i`.
    pub const INIT: u64 = 1000;
}

/// Updates owed at env step `step` (1-based) under replay ratio `rr`.
///
/// The running total after `t` steps is `floor(rr · t)`, so a ratio of 0.5
/// trains on every second step and a ratio of 2 twice per step.
///
/// ```
/// use rde::harness::updates_due;
///
/// let total: u64 = (1..=10).map(|t| updates_due(0.5, t)).sum();
/// assert_eq!(total, 5);
/// assert_eq!(updates_due(2.0, 1), 2);
/// ```
pub fn updates_due(rr: f64, step: u64) -> u64 {
    let budget = |t: u64| (rr * t as f64 + 1e-9).floor() as u64;
    if step == 0 {
        return 0;
    }
    budget(step) - budget(step - 1)
}

/// Runs one experiment to completion.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsLog> {
    run_experiment_with(cfg, |_| {})
}

/// Like [`run_experiment`], calling `progress` with every logged row.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    progress: impl FnMut(&MetricsRow),
) -> Result<MetricsLog> {
    let cfg = cfg.clone().resolve()?;
    if cfg.algorithm.is_safe() {
        let agent_cfg = cfg.safe_config();
        run_with(&cfg, progress, |w, n, rng| {
            SafeAcAgent::new(w, n, agent_cfg.clone(), rng)
        })
    } else {
        let agent_cfg = cfg.dqn_config();
        run_with(&cfg, progress, |w, n, rng| DqnAgent::new(w, n, agent_cfg.clone(), rng))
    }
}

fn as_divergence(step: u64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite(what) => Error::Divergence {
            step,
            what: what.to_string(),
        },
        other => other,
    }
}

struct EvalResult {
    return_mean: f64,
    return_std: f64,
    cost_mean: f64,
}

fn evaluate<A: Agent>(
    ens: &EnsembleState<A>,
    env: &mut Env,
    mode: SelectionMode,
    episodes: usize,
    rng: &mut Rng,
) -> Result<EvalResult> {
    let mut returns = Vec::with_capacity(episodes);
    let mut costs = Vec::with_capacity(episodes);
    let mut features = vec![0.0; env.obs_width()];
    for _ in 0..episodes {
        let mut obs = env.reset(rng);
        let (mut ret, mut cost) = (0.0, 0.0);
        loop {
            obs.write_features(&mut features);
            let sel = ens.select_action(&features, mode, Phase::Eval, rng)?;
            let step = env.step(sel.action)?;
            ret += step.reward;
            cost += step.cost;
            if step.done || step.truncated {
                break;
            }
            obs = step.next_obs;
        }
        returns.push(ret);
        costs.push(cost);
    }
    let n = episodes as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(EvalResult {
        return_mean: mean,
        return_std: var.sqrt(),
        cost_mean: costs.iter().sum::<f64>() / n,
    })
}

fn run_with<A: Agent>(
    cfg: &ExperimentConfig,
    mut progress: impl FnMut(&MetricsRow),
    make_agent: impl Fn(usize, usize, &mut Rng) -> Result<A>,
) -> Result<MetricsLog> {
    let seed = cfg.seed;
    let mut env = Env::new(cfg.env.clone())?;
    let mut eval_env = Env::new(cfg.env.clone())?;
    let (obs_width, n_actions) = (env.obs_width(), env.n_actions());
    let agents = (0..cfg.n_agents)
        .map(|i| make_agent(obs_width, n_actions, &mut Rng::new(seed, stream::INIT + i as u64)))
        .collect::<Result<Vec<A>>>()?;
    let mut ens = EnsembleState::new(
        agents,
        EnsembleConfig {
            reset_interval: cfg.reset_interval()?,
            reset_depth: cfg.reset_depth,
            beta: cfg.beta,
            kappa: cfg.kappa,
            temperature_mode: cfg.temperature_mode,
        },
    )?;
    let mode = if cfg.algorithm == Algorithm::RdeSafe {
        SelectionMode::Safe
    } else {
        SelectionMode::Reward
    };
    let epsilon = cfg.epsilon_schedule()?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity, obs_width)?;

    let mut act_rng = Rng::new(seed, stream::ACT);
    let mut env_rng = Rng::new(seed, stream::ENV);
    let mut replay_rng = Rng::new(seed, stream::REPLAY);
    let mut eval_rng = Rng::new(seed, stream::EVAL);
    let mut reset_rng = Rng::new(seed, stream::RESET);
    let mut update_rng = Rng::new(seed, stream::UPDATE);

    let n = cfg.n_agents;
    let mut rows = Vec::new();
    let mut reset_events = Vec::new();
    let mut trace = Vec::new();
    let mut cumulative_cost = 0.0;
    let mut train_episodes = 0u64;
    let mut updates_per_agent = 0u64;
    let (mut loss_sum, mut loss_count) = (0.0, 0u64);
    let (mut p_sum, mut p_count) = (vec![0.0; n], 0u64);

    let mut features = vec![0.0; obs_width];
    let mut obs = env.reset(&mut env_rng);
    for t in 1..=cfg.total_env_steps {
        let diverged = as_divergence(t);
        obs.write_features(&mut features);
        let phase = Phase::Train {
            epsilon: epsilon.value(t - 1),
        };
        let sel = ens
            .select_action(&features, mode, phase, &mut act_rng)
            .map_err(&diverged)?;
        for (acc, p) in p_sum.iter_mut().zip(&sel.p) {
            *acc += p;
        }
        p_count += 1;
        if cfg.trace_selection {
            trace.push(SelectionRecord {
                step: t,
                p: sel.p.clone(),
                chosen: sel.chosen,
                oldest: sel.oldest_index,
            });
        }

        let step = env.step(sel.action)?;
        cumulative_cost += step.cost;
        let episode_over = step.done || step.truncated;
        buffer.push(Transition {
            obs,
            action: sel.action,
            reward: step.reward,
            cost: step.cost,
            next_obs: step.next_obs.clone(),
            done: step.done,
        })?;
        obs = if episode_over {
            train_episodes += 1;
            env.reset(&mut env_rng)
        } else {
            step.next_obs
        };

        if t > cfg.learning_starts {
            for _ in 0..updates_due(cfg.replay_ratio, t) {
                let shared = if cfg.shared_minibatch {
                    Some(buffer.sample(cfg.batch_size, &mut replay_rng)?)
                } else {
                    None
                };
                for (i, agent) in ens.agents_mut().iter_mut().enumerate() {
                    let own;
                    let batch = match &shared {
                        Some(b) => b,
                        None => {
                            own = buffer.sample(cfg.batch_size, &mut replay_rng)?;
                            &own
                        }
                    };
                    let loss = agent.update(batch, &mut update_rng).map_err(&diverged)?;
                    if !loss.is_finite() {
                        return Err(Error::Divergence {
                            step: t,
                            what: format!("agent {i} training loss {loss}"),
                        });
                    }
                    loss_sum += loss;
                    loss_count += 1;
                }
                updates_per_agent += 1;
            }
        }

        // An evaluation due at a reset step sees the agents before the reset.
        let eval = if t % cfg.eval_every == 0 {
            Some(
                evaluate(&ens, &mut eval_env, mode, cfg.eval_episodes, &mut eval_rng)
                    .map_err(&diverged)?,
            )
        } else {
            None
        };
        let reset = ens.maybe_reset(t, &mut reset_rng)?;
        if let Some(event) = reset {
            reset_events.push(event);
        }
        if eval.is_some() || reset.is_some() {
            let row = MetricsRow {
                env_step: t,
                eval_return_mean: eval.as_ref().map(|e| e.return_mean),
                eval_return_std: eval.as_ref().map(|e| e.return_std),
                eval_cost_mean: eval.as_ref().map(|e| e.cost_mean),
                train_loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
                reset_agent_index: reset.map_or(-1, |e| e.agent as i64),
                p_select: p_sum.iter().map(|s| s / p_count as f64).collect(),
                cumulative_train_cost: cumulative_cost,
            };
            progress(&row);
            rows.push(row);
            loss_sum = 0.0;
            loss_count = 0;
            p_sum.iter_mut().for_each(|s| *s = 0.0);
            p_count = 0;
        }
    }

    let curve = eval_curve(&rows);
    let reset_steps: Vec<u64> = reset_events.iter().map(|e| e.step).collect();
    let collapse = if curve.is_empty() {
        CollapseReport {
            drops: Vec::new(),
            skipped: reset_steps,
            max: 0.0,
            mean: 0.0,
        }
    } else {
        collapse_metric(&curve, &reset_steps, cfg.collapse_window)?
    };
    Ok(MetricsLog {
        n_agents: n,
        summary: RunSummary {
            final_return: final_return(&rows).unwrap_or(0.0),
            cumulative_train_cost: cumulative_cost,
            train_episodes,
            updates_per_agent,
            collapse,
        },
        rows,
        reset_events,
        selection_trace: trace,
    })
}

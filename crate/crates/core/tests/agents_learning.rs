use rde::agents::{DqnAgent, DqnConfig, SafeAcAgent, SafeAcConfig, TargetUpdate};
use rde::envs::{to_tabular, value_iteration, Env, EnvSpec, Observation};
use rde::nn::Rng;
use rde::replay::{ReplayBuffer, Transition};

fn chain_buffer(seed: u64) -> (Env, ReplayBuffer) {
    let mut env = Env::new(EnvSpec::chain(5)).unwrap();
    let mut buf = ReplayBuffer::new(10_000, env.obs_width()).unwrap();
    let mut rng = Rng::new(seed, 7);
    let mut obs = env.reset(&mut rng);
    for _ in 0..5_000 {
        let a = rng.below(2);
        let step = env.step(a).unwrap();
        buf.push(Transition {
            obs: obs.clone(),
            action: a,
            reward: step.reward,
            cost: step.cost,
            next_obs: step.next_obs.clone(),
            done: step.done,
        })
        .unwrap();
        obs = if step.done || step.truncated {
            env.reset(&mut rng)
        } else {
            step.next_obs
        };
    }
    (env, buf)
}

/// Max |Q_learned − Q*| over non-terminal chain states.
fn chain_error(agent: &DqnAgent, env: &Env) -> f64 {
    let mdp = to_tabular(env.spec()).unwrap();
    let q_star = value_iteration(&mdp, 0.9, 1e-12).unwrap();
    let mut worst = 0.0f64;
    for s in 0..mdp.n_states {
        if mdp.terminal[s] {
            continue;
        }
        let q = agent.online_q.predict(&env.observation_of(s).features()).unwrap();
        for a in 0..2 {
            worst = worst.max((q[a] - q_star.get(s, a)).abs());
        }
    }
    worst
}

pub fn train_chain(seed: u64, updates: usize) -> f64 {
    let (env, buf) = chain_buffer(seed);
    let config = DqnConfig {
        hidden: vec![32, 32],
        gamma: 0.9,
        lr: 1e-3,
        target_update: TargetUpdate::Hard(250),
    };
    let mut agent = DqnAgent::new(5, 2, config, &mut Rng::new(seed, 1)).unwrap();
    let mut rng = Rng::new(seed, 2);
    for _ in 0..updates {
        let batch = buf.sample(32, &mut rng).unwrap();
        agent.dqn_update(&batch).unwrap();
    }
    chain_error(&agent, &env)
}

#[test]
fn dqn_matches_value_iteration_on_chain() {
    for seed in 0..5 {
        let err = train_chain(seed, 50_000);
        assert!(err < 0.05, "seed {seed}: sup error {err}");
    }
}

fn cmdp_transition(action: usize) -> Transition {
    // One state, two actions; action 1 pays slightly more but costs 1.
    Transition {
        obs: Observation::from_ones(1, vec![0]),
        action,
        reward: if action == 1 { 0.5 } else { 0.0 },
        cost: if action == 1 { 1.0 } else { 0.0 },
        next_obs: Observation::from_ones(1, vec![0]),
        done: true,
    }
}

#[test]
fn constrained_agent_avoids_costly_action() {
    // With a zero budget the only feasible policy never takes action 1.
    let config = SafeAcConfig {
        hidden: vec![16],
        gamma: 0.9,
        lr: 3e-3,
        cost_budget: 0.0,
        ..SafeAcConfig::default()
    };
    let mut agent = SafeAcAgent::new(1, 2, config, &mut Rng::new(0, 0)).unwrap();
    let data = [cmdp_transition(0), cmdp_transition(1)];
    let mut rng = Rng::new(0, 1);
    for _ in 0..4_000 {
        let batch: Vec<&Transition> = (0..16).map(|_| &data[rng.below(2)]).collect();
        agent.safe_ac_update(&batch, &mut rng).unwrap();
    }
    let pi = agent.policy(&[1.0]).unwrap();
    assert!(pi[0] > 0.9, "policy {pi:?}, lambda {}", agent.lambda);
}

#[test]
fn zero_cost_critics_collapse_to_zero() {
    let config = SafeAcConfig {
        hidden: vec![16],
        lr: 3e-3,
        lambda_init: 1.0,
        ..SafeAcConfig::default()
    };
    let mut agent = SafeAcAgent::new(2, 2, config, &mut Rng::new(3, 0)).unwrap();
    let data: Vec<Transition> = (0..4)
        .map(|i| Transition {
            obs: Observation::from_ones(2, vec![(i % 2) as u32]),
            action: i / 2,
            reward: 1.0,
            cost: 0.0,
            next_obs: Observation::from_ones(2, vec![((i + 1) % 2) as u32]),
            done: i == 3,
        })
        .collect();
    let mut rng = Rng::new(3, 1);
    let mut last_lambda = f64::INFINITY;
    // The std critic outputs ln σ, so σ shrinks geometrically slowly toward 0.
    let max_sd = |agent: &SafeAcAgent| {
        [[1.0, 0.0], [0.0, 1.0]]
            .iter()
            .flat_map(|o| agent.cost_std(o).unwrap())
            .fold(0.0f64, f64::max)
    };
    let mut checkpoints = vec![max_sd(&agent)];
    for step in 1..=6_000 {
        let batch: Vec<&Transition> = (0..16).map(|_| &data[rng.below(4)]).collect();
        let l = agent.safe_ac_update(&batch, &mut rng).unwrap();
        assert!(l.lambda <= last_lambda);
        last_lambda = l.lambda;
        if step % 1_500 == 0 {
            checkpoints.push(max_sd(&agent));
        }
    }
    assert_eq!(agent.lambda, 0.0);
    for obs in [[1.0, 0.0], [0.0, 1.0]] {
        let mean = agent.cost_mean_critic.predict(&obs).unwrap();
        assert!(mean.iter().all(|m| m.abs() < 0.05), "cost mean {mean:?}");
    }
    assert!(checkpoints.windows(2).all(|w| w[1] < w[0]), "cost std {checkpoints:?}");
    assert!(*checkpoints.last().unwrap() < 0.2, "cost std {checkpoints:?}");
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion. With
//! `RDE_ACCEPTANCE_STRICT=1` any failure also makes the exit code non-zero.
//!
//! The FourRooms and HazardGrid experiments run through the same sweep
//! machinery as the CLI. Set `RDE_ACCEPTANCE_WORKERS` to use more threads.

use std::process::ExitCode;
use std::time::Instant;

use rde::agents::{cvar, DqnAgent, DqnConfig, TargetUpdate};
use rde::envs::{to_tabular, value_iteration, Env, EnvSpec};
use rde::harness::{
    iqm, reset_interval_for, run_experiment, sweep, ExperimentConfig, MetricsLog, SweepPlan,
};
use rde::nn::{normal_cdf, normal_quantile, softmax, Mlp, Rng};
use rde::replay::{ReplayBuffer, Transition};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Shared FourRooms settings for the collapse, ordering and replay-ratio runs.
const FOUR_ROOMS: &str = "
env = four_rooms
env_size = 9
hidden = [32, 32]
total_env_steps = 150000
eval_every = 2500
eval_episodes = 20
eps_decay_steps = 10000
base_reset_interval = 50000
n_agents = 2
beta = 50
collapse_window = 10
";

const HAZARD: &str = "
env = hazard_grid
env_size = 9
algorithm = [sr_safe, rde_safe]
hidden = [32, 32]
total_env_steps = 60000
eval_every = 2500
eval_episodes = 20
eps_decay_steps = 10000
base_reset_interval = 20000
n_agents = 2
beta = 50
kappa = 0.8
";

/// Agent 0 is reset at step 20000 (gap 40000 / 2); the trace covers the 500
/// selections after it.
const SELECTION: &str = "
env = four_rooms
env_size = 9
algorithm = rde
n_agents = 2
hidden = [32, 32]
total_env_steps = 20500
eval_every = 20500
eval_episodes = 1
eps_decay_steps = 10000
base_reset_interval = 40000
trace_selection = true
";

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
    budget: Option<f64>,
}

impl Verdict {
    fn line(&self) -> String {
        let in_budget = self.budget.map_or(true, |b| self.seconds < b);
        let ok = self.pass && in_budget;
        let budget = match self.budget {
            Some(b) => format!(" budget {b:.0}s"),
            None => String::new(),
        };
        format!(
            "{} [{}] {}: {} ({:.1}s{}{})",
            if ok { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail,
            self.seconds,
            budget,
            if in_budget { "" } else { ", over budget" },
        )
    }

    fn ok(&self) -> bool {
        self.pass && self.budget.map_or(true, |b| self.seconds < b)
    }
}

fn workers() -> usize {
    std::env::var("RDE_ACCEPTANCE_WORKERS")
        .ok()
        .and_then(|w| w.parse().ok())
        .unwrap_or(1)
}

/// One finished run of a sweep.
struct Run {
    cell: String,
    seed: u64,
    config: ExperimentConfig,
    log: MetricsLog,
    seconds: f64,
}

fn run_plan(text: &str) -> (Vec<Run>, f64) {
    let start = Instant::now();
    let plan = SweepPlan::parse(text).expect("acceptance plan parses");
    let labels: Vec<String> = plan.cells().unwrap().iter().map(|c| c.label()).collect();
    let out = sweep(&plan, workers(), |r| {
        eprintln!("  {} seed {} ({:.1}s)", labels[r.cell], r.seed, r.seconds);
    })
    .expect("sweep runs");
    let runs = out
        .runs
        .into_iter()
        .map(|r| Run {
            cell: labels[r.cell].clone(),
            seed: r.seed,
            config: r.config,
            log: r.outcome.unwrap_or_else(|e| panic!("run failed: {e}")),
            seconds: r.seconds,
        })
        .collect();
    (runs, start.elapsed().as_secs_f64())
}

fn by_seed<'a>(runs: &'a [Run], cell: &str) -> Vec<&'a Run> {
    let mut picked: Vec<&Run> = runs.iter().filter(|r| r.cell == cell).collect();
    picked.sort_by_key(|r| r.seed);
    picked
}

fn final_iqm(runs: &[&Run]) -> f64 {
    let finals: Vec<f64> = runs.iter().map(|r| r.log.summary.final_return).collect();
    iqm(&finals).unwrap()
}

fn fmt_list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

// ---------------------------------------------------------------------------
// 1. Analytic kernels
// ---------------------------------------------------------------------------

fn analytic_kernels() -> Verdict {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rng = Rng::new(11, 0);

    let mut simplex_err = 0.0f64;
    for _ in 0..1000 {
        let n = 1 + rng.below(10);
        let x: Vec<f64> = (0..n).map(|_| rng.uniform_range(-20.0, 20.0)).collect();
        let shift = rng.uniform_range(-100.0, 100.0);
        let p = softmax(&x).unwrap();
        let shifted: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let q = softmax(&shifted).unwrap();
        simplex_err = simplex_err.max((p.iter().sum::<f64>() - 1.0).abs());
        for (a, b) in p.iter().zip(&q) {
            simplex_err = simplex_err.max((a - b).abs());
            if *a < 0.0 {
                simplex_err = f64::INFINITY;
            }
        }
    }
    if simplex_err > 1e-12 {
        failures.push(format!("softmax error {simplex_err:e}"));
    }

    // φ(0) / 0.5 = sqrt(2/π)
    let coef = (2.0 / std::f64::consts::PI).sqrt();
    let mut cvar_err = 0.0f64;
    for _ in 0..1000 {
        let q_c = rng.uniform_range(-5.0, 5.0);
        let sigma = rng.uniform_range(0.0, 3.0);
        let got = cvar(q_c, sigma * sigma, 0.5).unwrap();
        cvar_err = cvar_err.max((got - (q_c + coef * sigma)).abs());
    }
    if cvar_err > 1e-6 || format!("{coef:.5}") != "0.79788" {
        failures.push(format!("cvar error {cvar_err:e}"));
    }

    let mut round_trip = 0.0f64;
    for i in 1..10_000 {
        let p = i as f64 / 10_000.0;
        round_trip = round_trip.max((normal_cdf(normal_quantile(p).unwrap()) - p).abs());
    }
    for p in [1e-10, 1e-6, 1e-3, 1.0 - 1e-3, 1.0 - 1e-6] {
        round_trip = round_trip.max((normal_cdf(normal_quantile(p).unwrap()) - p).abs());
    }
    if round_trip >= 1e-8 {
        failures.push(format!("quantile round trip {round_trip:e}"));
    }

    let scores: Vec<f64> = (1..=8).map(f64::from).collect();
    let iqm_18 = iqm(&scores).unwrap();
    if iqm_18 != 4.5 {
        failures.push(format!("iqm([1..8]) = {iqm_18}"));
    }
    let gap = reset_interval_for(400_000, 2.0, 2).unwrap();
    if gap != 100_000 {
        failures.push(format!("reset interval {gap}"));
    }

    Verdict {
        id: 1,
        name: "analytic kernels",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "softmax {simplex_err:.1e}, cvar {cvar_err:.1e}, quantile {round_trip:.1e}, iqm 4.5, gap 100000"
            )
        } else {
            failures.join("; ")
        },
        seconds: start.elapsed().as_secs_f64(),
        budget: Some(5.0),
    }
}

// ---------------------------------------------------------------------------
// 2. Gradient oracle
// ---------------------------------------------------------------------------

fn linear_loss(net: &Mlp, x: &[f64], g: &[f64]) -> f64 {
    net.predict(x).unwrap().iter().zip(g).map(|(y, g)| y * g).sum()
}

/// Max relative and absolute error of backward against central differences.
/// Entries where both gradients are below 1e-6 only count absolutely.
fn fd_error(net: &Mlp, x: &[f64], g: &[f64]) -> (f64, f64) {
    let h = 1e-4;
    let (_, cache) = net.forward(x).unwrap();
    let grads = net.backward(&cache, g).unwrap();
    let dims = net.layer_dims().to_vec();
    let mut probe = net.clone();
    let (mut rel, mut abs) = (0.0f64, 0.0f64);
    let mut check = |analytic: f64, numeric: f64| {
        let diff = (analytic - numeric).abs();
        let scale = analytic.abs().max(numeric.abs());
        abs = abs.max(diff);
        if scale >= 1e-6 {
            rel = rel.max(diff / scale);
        }
    };
    for l in 0..net.n_layers() {
        for o in 0..dims[l + 1] {
            for i in 0..dims[l] {
                let w = net.weight(l, o, i);
                probe.set_weight(l, o, i, w + h);
                let up = linear_loss(&probe, x, g);
                probe.set_weight(l, o, i, w - h);
                let down = linear_loss(&probe, x, g);
                probe.set_weight(l, o, i, w);
                check(grads.weight(net, l, o, i), (up - down) / (2.0 * h));
            }
            let b = net.bias(l, o);
            probe.set_bias(l, o, b + h);
            let up = linear_loss(&probe, x, g);
            probe.set_bias(l, o, b - h);
            let down = linear_loss(&probe, x, g);
            probe.set_bias(l, o, b);
            check(grads.biases[l][o], (up - down) / (2.0 * h));
        }
    }
    (rel, abs)
}

fn gradient_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = Rng::new(77, 0);
    let (mut worst, mut worst_abs) = (0.0f64, 0.0f64);
    for trial in 0..100 {
        let n_layers = 1 + rng.below(3);
        let dims: Vec<usize> = (0..=n_layers).map(|_| 1 + rng.below(12)).collect();
        let mut net = Mlp::new(&dims, &mut Rng::new(trial, 1)).unwrap();
        for l in 0..net.n_layers() {
            for o in 0..dims[l + 1] {
                net.set_bias(l, o, rng.uniform_range(-0.5, 0.5));
            }
        }
        let x: Vec<f64> = (0..dims[0]).map(|_| rng.uniform_range(-2.0, 2.0)).collect();
        let g: Vec<f64> = (0..dims[n_layers]).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let (rel, abs) = fd_error(&net, &x, &g);
        worst = worst.max(rel);
        worst_abs = worst_abs.max(abs);
    }
    Verdict {
        id: 2,
        name: "gradient oracle",
        pass: worst < 1e-4,
        detail: format!(
            "100 nets, max relative error {worst:.2e} (< 1e-4), max absolute {worst_abs:.2e}"
        ),
        seconds: start.elapsed().as_secs_f64(),
        budget: Some(10.0),
    }
}

// ---------------------------------------------------------------------------
// 3. DQN against value iteration
// ---------------------------------------------------------------------------

fn chain_sup_error(seed: u64, updates: usize) -> f64 {
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
    let config = DqnConfig {
        hidden: vec![32, 32],
        gamma: 0.9,
        lr: 1e-3,
        target_update: TargetUpdate::Hard(250),
    };
    let mut agent = DqnAgent::new(env.obs_width(), 2, config, &mut Rng::new(seed, 1)).unwrap();
    let mut batch_rng = Rng::new(seed, 2);
    for _ in 0..updates {
        let batch = buf.sample(32, &mut batch_rng).unwrap();
        agent.dqn_update(&batch).unwrap();
    }
    let mdp = to_tabular(env.spec()).unwrap();
    let q_star = value_iteration(&mdp, 0.9, 1e-12).unwrap();
    let mut worst = 0.0f64;
    for s in (0..mdp.n_states).filter(|&s| !mdp.terminal[s]) {
        let q = agent.online_q.predict(&env.observation_of(s).features()).unwrap();
        for (a, v) in q.iter().enumerate() {
            worst = worst.max((v - q_star.get(s, a)).abs());
        }
    }
    worst
}

fn dqn_vs_value_iteration() -> Verdict {
    let start = Instant::now();
    let errors: Vec<f64> = SEEDS.iter().map(|&s| chain_sup_error(s, 50_000)).collect();
    let hits = errors.iter().filter(|&&e| e < 0.05).count();
    Verdict {
        id: 3,
        name: "DQN vs value iteration",
        pass: hits == SEEDS.len(),
        detail: format!("Chain(5) sup error {} ({hits}/5 < 0.05)", fmt_list(&errors)),
        seconds: start.elapsed().as_secs_f64(),
        budget: Some(60.0),
    }
}

// ---------------------------------------------------------------------------
// 4. Reset schedule
// ---------------------------------------------------------------------------

/// Resets expected for a resolved config: multiples of the gap, cycling
/// through the agents in index order.
fn schedule_mismatch(cfg: &ExperimentConfig, log: &MetricsLog) -> Option<String> {
    let got: Vec<(u64, usize)> = log.reset_events.iter().map(|e| (e.step, e.agent)).collect();
    let expected: Vec<(u64, usize)> = match cfg.reset_interval().unwrap() {
        None => Vec::new(),
        Some(gap) => (1..=cfg.total_env_steps / gap)
            .map(|i| (i * gap, (i as usize - 1) % cfg.n_agents))
            .collect(),
    };
    (got != expected).then(|| {
        format!(
            "{} seed {}: got {:?}, expected {:?}",
            cfg.algorithm, cfg.seed, got, expected
        )
    })
}

fn reset_schedule(suite: &[(&ExperimentConfig, &MetricsLog)]) -> Verdict {
    let start = Instant::now();
    let mut mismatches = Vec::new();
    let mut checked = 0;
    for n in [2usize, 4] {
        for rr in [0.5, 1.0, 2.0] {
            let cfg = ExperimentConfig {
                n_agents: n,
                replay_ratio: rr,
                hidden: vec![16],
                total_env_steps: 4000,
                eval_every: 500,
                eval_episodes: 2,
                base_reset_interval: 2000,
                ..ExperimentConfig::default()
            }
            .resolve()
            .unwrap();
            let log = run_experiment(&cfg).unwrap();
            if log.reset_events.is_empty() {
                mismatches.push(format!("N={n} rr={rr}: no resets"));
            }
            mismatches.extend(schedule_mismatch(&cfg, &log));
            checked += 1;
        }
    }
    for (cfg, log) in suite {
        mismatches.extend(schedule_mismatch(cfg, log));
        checked += 1;
    }
    Verdict {
        id: 4,
        name: "reset schedule ledger",
        pass: mismatches.is_empty(),
        detail: if mismatches.is_empty() {
            format!("{checked} runs on schedule (6 grid runs + {} suite runs)", suite.len())
        } else {
            mismatches.join("; ")
        },
        seconds: start.elapsed().as_secs_f64(),
        budget: None,
    }
}

// ---------------------------------------------------------------------------
// 5. Selection dynamics after a reset
// ---------------------------------------------------------------------------

fn mean_p0_after_reset(log: &MetricsLog) -> Option<f64> {
    let t_r = log.reset_events.iter().find(|e| e.agent == 0)?.step;
    let window: Vec<f64> = log
        .selection_trace
        .iter()
        .filter(|r| r.step > t_r && r.step <= t_r + 500)
        .map(|r| r.p[0])
        .collect();
    (window.len() == 500).then(|| window.iter().sum::<f64>() / 500.0)
}

fn selection_dynamics(determinism_probe: &mut Option<(ExperimentConfig, String)>) -> Verdict {
    let start = Instant::now();
    let mut cold = Vec::new();
    let mut flat = Vec::new();
    for beta in [300.0, 0.0] {
        let text = format!("{SELECTION}beta = {beta}\nseed = [0, 1, 2, 3, 4]\n");
        let (runs, _) = run_plan(&text);
        for run in &runs {
            let p0 = mean_p0_after_reset(&run.log).unwrap_or(f64::NAN);
            if beta > 0.0 {
                cold.push(p0);
            } else {
                flat.push(p0);
            }
            if determinism_probe.is_none() {
                *determinism_probe = Some((run.config.clone(), run.log.to_csv()));
            }
        }
    }
    let cold_ok = cold.iter().filter(|&&p| p < 0.2).count();
    let flat_ok = flat.iter().filter(|&&p| (0.45..=0.55).contains(&p)).count();
    Verdict {
        id: 5,
        name: "selection dynamics after reset",
        pass: cold_ok == 5 && flat_ok == 5,
        detail: format!(
            "mean p0 over 500 post-reset selections: beta=300 {} ({cold_ok}/5 < 0.2), beta=0 {} ({flat_ok}/5 in [0.45, 0.55])",
            fmt_list(&cold),
            fmt_list(&flat)
        ),
        seconds: start.elapsed().as_secs_f64(),
        budget: Some(300.0),
    }
}

// ---------------------------------------------------------------------------
// 6-8. FourRooms suite
// ---------------------------------------------------------------------------

fn collapse_prevention(runs: &[Run]) -> Verdict {
    let sr = by_seed(runs, "algorithm=sr,replay_ratio=1");
    let rde = by_seed(runs, "algorithm=rde,replay_ratio=1");
    let sr_max: Vec<f64> = sr.iter().map(|r| r.log.summary.collapse.max).collect();
    let rde_max: Vec<f64> = rde.iter().map(|r| r.log.summary.collapse.max).collect();
    let better = sr_max.iter().zip(&rde_max).filter(|(s, r)| r < s).count();
    let deep = sr_max.iter().filter(|&&s| s > 0.5).count();
    let seconds = sr.iter().chain(&rde).map(|r| r.seconds).sum::<f64>() / workers() as f64;
    Verdict {
        id: 6,
        name: "collapse prevention",
        pass: better >= 4 && deep >= 4,
        detail: format!(
            "max drop SR {} RDE {} (RDE < SR in {better}/5, SR > 0.5 in {deep}/5)",
            fmt_list(&sr_max),
            fmt_list(&rde_max)
        ),
        seconds,
        budget: Some(900.0),
    }
}

fn ordering(runs: &[Run]) -> Verdict {
    let cells = ["base", "sr", "rde"].map(|a| by_seed(runs, &format!("algorithm={a},replay_ratio=1")));
    let [base, sr, rde] = cells.each_ref().map(|c| final_iqm(c));
    let seconds = cells.iter().flatten().map(|r| r.seconds).sum::<f64>() / workers() as f64;
    Verdict {
        id: 7,
        name: "ordering RDE > SR, RDE > base",
        pass: rde > sr && rde > base,
        detail: format!("final IQM base {base:.3}, SR {sr:.3}, RDE {rde:.3}"),
        seconds,
        budget: Some(1800.0),
    }
}

fn replay_ratio_direction(runs: &[Run]) -> Verdict {
    let cell = |a: &str, rr: u32| by_seed(runs, &format!("algorithm={a},replay_ratio={rr}"));
    let (b1, b4, r1, r4) = (cell("base", 1), cell("base", 4), cell("rde", 1), cell("rde", 4));
    let seconds = [&b1, &b4, &r1, &r4]
        .iter()
        .flat_map(|c| c.iter())
        .map(|r| r.seconds)
        .sum::<f64>()
        / workers() as f64;
    let (b1, b4, r1, r4) = (final_iqm(&b1), final_iqm(&b4), final_iqm(&r1), final_iqm(&r4));
    let floor = r1 - 0.1 * r1.abs();
    Verdict {
        id: 8,
        name: "replay-ratio direction",
        pass: b4 <= b1 && r4 >= floor,
        detail: format!(
            "base IQM rr1 {b1:.3} rr4 {b4:.3} (need rr4 <= rr1); RDE IQM rr1 {r1:.3} rr4 {r4:.3} (need >= {floor:.3})"
        ),
        seconds,
        budget: Some(2700.0),
    }
}

// ---------------------------------------------------------------------------
// 9. Safe RL on HazardGrid
// ---------------------------------------------------------------------------

fn safe_direction(runs: &[Run], seconds: f64) -> Verdict {
    let sr = by_seed(runs, "algorithm=sr_safe");
    let rde = by_seed(runs, "algorithm=rde_safe");
    let cost = |c: &[&Run]| -> Vec<f64> {
        c.iter().map(|r| r.log.summary.cumulative_train_cost).collect()
    };
    let (sr_cost, rde_cost) = (cost(&sr), cost(&rde));
    let cheaper = sr_cost.iter().zip(&rde_cost).filter(|(s, r)| r < s).count();
    let (sr_ret, rde_ret) = (final_iqm(&sr), final_iqm(&rde));
    let floor = sr_ret - 0.1 * sr_ret.abs();
    Verdict {
        id: 9,
        name: "safe RL training cost",
        pass: cheaper >= 4 && rde_ret >= floor,
        detail: format!(
            "cumulative cost SR-safe {} RDE-safe {} (RDE lower in {cheaper}/5); final IQM SR-safe {sr_ret:.3} RDE-safe {rde_ret:.3} (need >= {floor:.3})",
            fmt_list(&sr_cost),
            fmt_list(&rde_cost)
        ),
        seconds,
        budget: Some(1800.0),
    }
}

// ---------------------------------------------------------------------------
// 10. Determinism
// ---------------------------------------------------------------------------

fn determinism(probes: &[(ExperimentConfig, String)]) -> Verdict {
    let start = Instant::now();
    let mut diffs = Vec::new();
    for (cfg, csv) in probes {
        let text = cfg.to_config_string();
        let reparsed = ExperimentConfig::from_config_str(&text).unwrap();
        let again = run_experiment(&reparsed).unwrap().to_csv();
        if &again != csv {
            diffs.push(format!("{} seed {}", cfg.algorithm, cfg.seed));
        }
    }
    Verdict {
        id: 10,
        name: "determinism",
        pass: diffs.is_empty(),
        detail: if diffs.is_empty() {
            format!("{} reruns from the resolved config are byte-identical", probes.len())
        } else {
            format!("CSV differs: {}", diffs.join(", "))
        },
        seconds: start.elapsed().as_secs_f64(),
        budget: None,
    }
}

fn main() -> ExitCode {
    let mut verdicts = Vec::new();
    verdicts.push(analytic_kernels());
    verdicts.push(gradient_oracle());
    verdicts.push(dqn_vs_value_iteration());
    for v in &verdicts {
        println!("{}", v.line());
    }

    let mut probe = None;
    let selection = selection_dynamics(&mut probe);
    println!("{}", selection.line());

    eprintln!("FourRooms suite");
    let four_rooms = format!(
        "{FOUR_ROOMS}algorithm = [base, sr, rde]\nreplay_ratio = [1]\nseed = [0, 1, 2, 3, 4]\n"
    );
    let (mut suite, _) = run_plan(&four_rooms);
    let collapse = collapse_prevention(&suite);
    println!("{}", collapse.line());
    let order = ordering(&suite);
    println!("{}", order.line());

    let high_rr = format!(
        "{FOUR_ROOMS}algorithm = [base, rde]\nreplay_ratio = [4]\nseed = [0, 1, 2, 3, 4]\n"
    );
    let (rr4, _) = run_plan(&high_rr);
    suite.extend(rr4);
    let rr = replay_ratio_direction(&suite);
    println!("{}", rr.line());

    eprintln!("HazardGrid suite");
    let (hazard, hazard_seconds) = run_plan(&format!("{HAZARD}seed = [0, 1, 2, 3, 4]\n"));
    let safe = safe_direction(&hazard, hazard_seconds);

    let all_runs: Vec<(&ExperimentConfig, &MetricsLog)> = suite
        .iter()
        .chain(&hazard)
        .map(|r| (&r.config, &r.log))
        .collect();
    let schedule = reset_schedule(&all_runs);
    println!("{}", schedule.line());
    println!("{}", safe.line());

    let mut probes: Vec<(ExperimentConfig, String)> = probe.into_iter().collect();
    if let Some(r) = hazard.iter().find(|r| r.cell == "algorithm=rde_safe") {
        probes.push((r.config.clone(), r.log.to_csv()));
    }
    let det = determinism(&probes);
    println!("{}", det.line());

    verdicts.extend([selection, collapse, order, rr, schedule, safe, det]);
    verdicts.sort_by_key(|v| v.id);
    let passed = verdicts.iter().filter(|v| v.ok()).count();
    println!("\nsummary ({passed}/{} passed)", verdicts.len());
    for v in &verdicts {
        println!("{}", v.line());
    }
    let strict = std::env::var_os("RDE_ACCEPTANCE_STRICT").is_some_and(|v| v == "1");
    if passed == verdicts.len() || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

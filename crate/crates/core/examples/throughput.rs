//! Measures DQN update throughput on a FourRooms-sized network.
use std::time::Instant;

use rde::agents::{DqnAgent, DqnConfig};
use rde::envs::Observation;
use rde::nn::Rng;
use rde::replay::Transition;

fn main() {
    let width = 2 * 68;
    let hidden: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("hidden widths"))
        .collect();
    let config = DqnConfig {
        hidden: if hidden.is_empty() { vec![64, 64] } else { hidden },
        ..DqnConfig::default()
    };
    let mut rng = Rng::new(0, 0);
    let mut agent = DqnAgent::new(width, 4, config, &mut rng).unwrap();
    let data: Vec<Transition> = (0..1000)
        .map(|i| Transition {
            obs: Observation::from_ones(width, vec![(i % 68) as u32, (68 + i % 7) as u32]),
            action: i % 4,
            reward: (i % 13 == 0) as u8 as f64,
            cost: 0.0,
            next_obs: Observation::from_ones(width, vec![((i + 1) % 68) as u32, (68 + i % 7) as u32]),
            done: i % 13 == 0,
        })
        .collect();
    let n: usize = std::env::var("N").ok().and_then(|v| v.parse().ok()).unwrap_or(5_000);
    let start = Instant::now();
    for _ in 0..n {
        let batch: Vec<&Transition> = (0..32).map(|_| &data[rng.below(data.len())]).collect();
        agent.dqn_update(&batch).unwrap();
    }
    let secs = start.elapsed().as_secs_f64();
    println!("{n} updates in {secs:.3}s: {:.1} us/update", secs * 1e6 / n as f64);
}

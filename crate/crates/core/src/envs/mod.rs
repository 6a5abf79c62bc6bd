//! Desk-scale environments with exact tabular oracles.
//!
//! * `Chain`: states `0..n`, action 0 moves left, 1 moves right; entering the
//!   last state pays 1 and ends the episode.
//! * `FourRooms`: sparse goal-reaching in a four-room grid. Reaching the goal
//!   after `t` earlier steps pays `10 · (1 − 0.9 · t / max_steps)`.
//! * `HazardGrid`: reach the goal (reward 1) while every step that ends on a
//!   hazard cell costs 1. Hazards never end the episode.
//!
//! Grid observations are one-hot position ⊕ one-hot goal over floor cells.

mod layout;
mod tabular;

use serde::{Deserialize, Serialize};

pub use layout::{Cell, GridLayout};
pub use tabular::{bellman_backup, to_tabular, value_iteration, QTable, TabularMdp};

use crate::error::{Error, Result};
use crate::nn::Rng;

/// Sparse success reward for FourRooms.
pub const SUCCESS_REWARD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Chain,
    FourRooms,
    HazardGrid,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Chain => "chain",
            EnvKind::FourRooms => "four_rooms",
            EnvKind::HazardGrid => "hazard_grid",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "chain" => Some(EnvKind::Chain),
            "four_rooms" => Some(EnvKind::FourRooms),
            "hazard_grid" => Some(EnvKind::HazardGrid),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    /// Chain length, or grid side length including the outer wall.
    pub size: usize,
    pub max_steps: usize,
    pub discount: f64,
    pub layout_seed: u64,
    /// FourRooms only: draw a new goal every episode.
    pub random_goal: bool,
    /// ASCII map overriding the generated grid layout.
    pub layout: Option<String>,
}

impl EnvSpec {
    pub fn chain(n: usize) -> Self {
        EnvSpec {
            kind: EnvKind::Chain,
            size: n,
            max_steps: 50,
            discount: 0.9,
            layout_seed: 0,
            random_goal: false,
            layout: None,
        }
    }

    pub fn four_rooms(side: usize) -> Self {
        EnvSpec {
            kind: EnvKind::FourRooms,
            size: side,
            max_steps: 100,
            discount: 0.9,
            layout_seed: 0,
            random_goal: true,
            layout: None,
        }
    }

    pub fn hazard_grid(side: usize) -> Self {
        EnvSpec {
            kind: EnvKind::HazardGrid,
            size: side,
            max_steps: 100,
            discount: 0.9,
            layout_seed: 0,
            random_goal: false,
            layout: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::invalid(format!(
                "discount must lie in [0, 1), got {}",
                self.discount
            )));
        }
        if self.kind == EnvKind::Chain && self.size < 2 {
            return Err(Error::invalid("chain needs at least 2 states"));
        }
        if self.random_goal && self.kind != EnvKind::FourRooms {
            return Err(Error::invalid("random_goal is only supported by four_rooms"));
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        match self.kind {
            EnvKind::Chain => 2,
            EnvKind::FourRooms | EnvKind::HazardGrid => 4,
        }
    }

    pub fn grid_layout(&self) -> Result<Option<GridLayout>> {
        if self.kind == EnvKind::Chain {
            return Ok(None);
        }
        let layout = match (&self.layout, self.kind) {
            (Some(ascii), _) => GridLayout::parse(ascii)?,
            (None, EnvKind::FourRooms) => {
                GridLayout::four_rooms(self.size, self.layout_seed, !self.random_goal)?
            }
            (None, _) => GridLayout::hazard_grid(self.size, self.layout_seed)?,
        };
        if !self.random_goal && layout.goal().is_none() {
            return Err(Error::Layout("fixed-goal layout has no `G` cell".into()));
        }
        Ok(Some(layout))
    }
}

/// FourRooms success reward after `t` earlier steps.
pub fn success_reward(t: usize, max_steps: usize) -> f64 {
    SUCCESS_REWARD * (1.0 - 0.9 * t as f64 / max_steps as f64)
}

/// Per-episode cost budget: 25, scaled by `max_steps / 1000` for episodes
/// shorter than 1000 steps.
pub fn default_cost_budget(max_steps: usize) -> f64 {
    if max_steps < 1000 {
        25.0 * max_steps as f64 / 1000.0
    } else {
        25.0
    }
}

/// Binary feature vector stored as the positions of its ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    width: usize,
    ones: Vec<u32>,
}

impl Observation {
    pub fn from_ones(width: usize, ones: Vec<u32>) -> Self {
        debug_assert!(ones.iter().all(|&i| (i as usize) < width));
        Observation { width, ones }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ones(&self) -> &[u32] {
        &self.ones
    }

    pub fn features(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.width];
        self.write_features(&mut v);
        v
    }

    pub fn write_features(&self, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for &i in &self.ones {
            out[i as usize] = 1.0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub next_obs: Observation,
    pub reward: f64,
    pub cost: f64,
    /// The episode reached a terminal state.
    pub done: bool,
    /// The episode hit `max_steps` without terminating.
    pub truncated: bool,
}

/// A running environment instance.
#[derive(Debug, Clone)]
pub struct Env {
    spec: EnvSpec,
    layout: Option<GridLayout>,
    pos: usize,
    goal: usize,
    t: usize,
    finished: bool,
}

impl Env {
    pub fn new(spec: EnvSpec) -> Result<Self> {
        spec.validate()?;
        let layout = spec.grid_layout()?;
        let goal = match (&layout, spec.kind) {
            (None, _) => spec.size - 1,
            (Some(l), _) => l.goal().unwrap_or(l.floor_cells()[0]),
        };
        Ok(Env {
            spec,
            layout,
            pos: 0,
            goal,
            t: 0,
            finished: true,
        })
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn layout(&self) -> Option<&GridLayout> {
        self.layout.as_ref()
    }

    pub fn n_actions(&self) -> usize {
        self.spec.n_actions()
    }

    pub fn obs_width(&self) -> usize {
        match &self.layout {
            None => self.spec.size,
            Some(l) => 2 * l.n_floor(),
        }
    }

    /// Agent position: chain index or grid cell index.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn goal(&self) -> usize {
        self.goal
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    /// Tabular state index of the current position (see [`to_tabular`]).
    pub fn state_index(&self) -> usize {
        match &self.layout {
            None => self.pos,
            Some(l) => l.floor_index(self.pos).expect("agent is always on floor"),
        }
    }

    /// Observation of tabular state `state` with the current goal.
    pub fn observation_of(&self, state: usize) -> Observation {
        match &self.layout {
            None => Observation::from_ones(self.spec.size, vec![state as u32]),
            Some(l) => {
                let n = l.n_floor();
                let g = l.floor_index(self.goal).expect("goal is on floor");
                Observation::from_ones(2 * n, vec![state as u32, (n + g) as u32])
            }
        }
    }

    pub fn observe(&self) -> Observation {
        self.observation_of(self.state_index())
    }

    pub fn reset(&mut self, rng: &mut Rng) -> Observation {
        self.t = 0;
        self.finished = false;
        match &self.layout {
            None => self.pos = 0,
            Some(l) => {
                let floor = l.floor_cells();
                if self.spec.random_goal {
                    self.goal = floor[rng.below(floor.len())];
                }
                self.pos = match l.start() {
                    Some(s) if s != self.goal => s,
                    _ => {
                        let candidates: Vec<usize> = floor
                            .iter()
                            .copied()
                            .filter(|&c| c != self.goal && l.cell(c) != Cell::Hazard)
                            .collect();
                        candidates[rng.below(candidates.len())]
                    }
                };
            }
        }
        self.observe()
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        let n_actions = self.n_actions();
        if action >= n_actions {
            return Err(Error::InvalidAction { action, n_actions });
        }
        if self.finished {
            return Err(Error::invalid("episode has ended; call reset first"));
        }
        let mut reward = 0.0;
        let mut cost = 0.0;
        let done;
        match &self.layout {
            None => {
                self.pos = if action == 1 {
                    self.pos + 1
                } else {
                    self.pos.saturating_sub(1)
                };
                done = self.pos == self.goal;
                if done {
                    reward = 1.0;
                }
            }
            Some(l) => {
                self.pos = l.neighbor(self.pos, action);
                done = self.pos == self.goal;
                if l.cell(self.pos) == Cell::Hazard {
                    cost = 1.0;
                }
                if done {
                    reward = match self.spec.kind {
                        EnvKind::FourRooms => success_reward(self.t, self.spec.max_steps),
                        _ => 1.0,
                    };
                }
            }
        }
        self.t += 1;
        let truncated = !done && self.t >= self.spec.max_steps;
        self.finished = done || truncated;
        Ok(StepResult {
            next_obs: self.observe(),
            reward,
            cost,
            done,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_starts_at_zero() {
        let mut env = Env::new(EnvSpec::chain(5)).unwrap();
        let obs = env.reset(&mut Rng::new(0, 0));
        assert_eq!(obs.features(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn chain_reaches_goal() {
        let mut env = Env::new(EnvSpec::chain(3)).unwrap();
        env.reset(&mut Rng::new(0, 0));
        let r = env.step(0).unwrap();
        assert_eq!((env.position(), r.reward, r.done), (0, 0.0, false));
        env.step(1).unwrap();
        let r = env.step(1).unwrap();
        assert_eq!((r.reward, r.done, r.truncated), (1.0, true, false));
        assert!(env.step(1).is_err());
    }

    #[test]
    fn success_reward_endpoints() {
        assert_eq!(success_reward(0, 100), 10.0);
        assert!((success_reward(100, 100) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_action_rejected() {
        let mut env = Env::new(EnvSpec::chain(3)).unwrap();
        env.reset(&mut Rng::new(0, 0));
        assert_eq!(
            env.step(2),
            Err(Error::InvalidAction {
                action: 2,
                n_actions: 2
            })
        );
    }

    #[test]
    fn four_rooms_reset_is_deterministic() {
        let spec = EnvSpec::four_rooms(9);
        let mut a = Env::new(spec.clone()).unwrap();
        let mut b = Env::new(spec).unwrap();
        let oa = a.reset(&mut Rng::new(3, 1));
        let ob = b.reset(&mut Rng::new(3, 1));
        assert_eq!(oa, ob);
        assert_eq!((a.position(), a.goal()), (b.position(), b.goal()));
    }

    #[test]
    fn four_rooms_goal_at_first_step_pays_ten() {
        let mut spec = EnvSpec::four_rooms(9);
        spec.random_goal = false;
        spec.layout = Some("#####\n#S.G#\n#####\n".into());
        let mut env = Env::new(spec).unwrap();
        env.reset(&mut Rng::new(0, 0));
        env.step(1).unwrap();
        let r = env.step(1).unwrap();
        assert!(r.done);
        assert!((r.reward - success_reward(1, 100)).abs() < 1e-12);
    }

    #[test]
    fn hazard_step_costs_one_and_continues() {
        let mut env = Env::new(EnvSpec::hazard_grid(7)).unwrap();
        env.reset(&mut Rng::new(0, 0));
        let r = env.step(2).unwrap();
        assert_eq!((r.cost, r.done, r.reward), (1.0, false, 0.0));
        let r = env.step(0).unwrap();
        assert_eq!(r.cost, 0.0);
    }

    #[test]
    fn truncation_at_max_steps() {
        let mut spec = EnvSpec::hazard_grid(7);
        spec.max_steps = 3;
        let mut env = Env::new(spec).unwrap();
        env.reset(&mut Rng::new(0, 0));
        assert!(!env.step(0).unwrap().truncated);
        assert!(!env.step(0).unwrap().truncated);
        let r = env.step(0).unwrap();
        assert!(r.truncated && !r.done);
    }

    #[test]
    fn observation_has_two_ones() {
        let mut env = Env::new(EnvSpec::four_rooms(9)).unwrap();
        let obs = env.reset(&mut Rng::new(1, 1));
        assert_eq!(obs.width(), env.obs_width());
        assert_eq!(obs.features().iter().filter(|&&x| x == 1.0).count(), 2);
    }

    #[test]
    fn spec_validation() {
        let mut spec = EnvSpec::chain(5);
        spec.discount = 1.0;
        assert!(Env::new(spec).is_err());
        let mut spec = EnvSpec::chain(5);
        spec.max_steps = 0;
        assert!(Env::new(spec).is_err());
        assert!(Env::new(EnvSpec::chain(1)).is_err());
    }

    #[test]
    fn budget_scaling() {
        assert_eq!(default_cost_budget(100), 2.5);
        assert_eq!(default_cost_budget(1000), 25.0);
    }
}

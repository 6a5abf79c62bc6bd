use super::{EnvKind, EnvSpec, SUCCESS_REWARD};
use crate::error::{Error, Result};

/// Explicit finite MDP: dense transition tensor, expected rewards and costs,
/// and a terminal mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transitions[(s * n_actions + a) * n_states + s2] = P(s2 | s, a)`.
    pub transitions: Vec<f64>,
    /// `rewards[s * n_actions + a]`.
    pub rewards: Vec<f64>,
    pub costs: Vec<f64>,
    pub terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        TabularMdp {
            n_states,
            n_actions,
            transitions: vec![0.0; n_states * n_actions * n_states],
            rewards: vec![0.0; n_states * n_actions],
            costs: vec![0.0; n_states * n_actions],
            terminal: vec![false; n_states],
        }
    }

    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transitions[(s * self.n_actions + a) * self.n_states + s2]
    }

    pub fn set_p(&mut self, s: usize, a: usize, s2: usize, p: f64) {
        self.transitions[(s * self.n_actions + a) * self.n_states + s2] = p;
    }

    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[start..start + self.n_states]
    }

    pub fn validate(&self) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let total: f64 = self.row(s, a).iter().sum();
                if (total - 1.0).abs() > 1e-12 || self.row(s, a).iter().any(|&p| p < 0.0) {
                    return Err(Error::invalid(format!(
                        "P(.|{s},{a}) is not a distribution (sum {total})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Action values indexed by `(state, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
}

impl QTable {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Greedy action with lowest-index tie-break.
    pub fn greedy(&self, s: usize) -> usize {
        crate::agents::argmax(self.row(s))
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// One Bellman optimality backup. Terminal states keep `Q = r`, and
/// successors that are terminal contribute no continuation value.
pub fn bellman_backup(mdp: &TabularMdp, q: &QTable, gamma: f64) -> QTable {
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let v: Vec<f64> = (0..ns)
        .map(|s| {
            if mdp.terminal[s] {
                0.0
            } else {
                q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect();
    let mut values = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let r = mdp.r(s, a);
            values[s * na + a] = if mdp.terminal[s] {
                r
            } else {
                let cont: f64 = mdp
                    .row(s, a)
                    .iter()
                    .zip(&v)
                    .filter(|(&p, _)| p > 0.0)
                    .map(|(p, v)| p * v)
                    .sum();
                r + gamma * cont
            };
        }
    }
    QTable {
        n_states: ns,
        n_actions: na,
        values,
    }
}

/// Iterates Bellman backups until the sup-norm change falls below `tol`.
pub fn value_iteration(mdp: &TabularMdp, gamma: f64, tol: f64) -> Result<QTable> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::invalid(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tol must be positive, got {tol}")));
    }
    let mut q = QTable {
        n_states: mdp.n_states,
        n_actions: mdp.n_actions,
        values: vec![0.0; mdp.n_states * mdp.n_actions],
    };
    loop {
        let next = bellman_backup(mdp, &q, gamma);
        let change = next.max_abs_diff(&q);
        q = next;
        if change < tol {
            return Ok(q);
        }
    }
}

/// Exact tabular form of a fixed-goal environment.
///
/// States are chain positions or floor-cell indices. FourRooms' goal reward
/// decays with the episode clock, which a stationary table cannot express;
/// the table carries the undecayed `SUCCESS_REWARD`.
pub fn to_tabular(spec: &EnvSpec) -> Result<TabularMdp> {
    spec.validate()?;
    if spec.random_goal {
        return Err(Error::invalid(
            "episode-randomized goals have no single stationary MDP",
        ));
    }
    match spec.kind {
        EnvKind::Chain => {
            let n = spec.size;
            let mut mdp = TabularMdp::new(n, 2);
            for s in 0..n {
                if s == n - 1 {
                    mdp.terminal[s] = true;
                    for a in 0..2 {
                        mdp.set_p(s, a, s, 1.0);
                    }
                    continue;
                }
                mdp.set_p(s, 0, s.saturating_sub(1), 1.0);
                mdp.set_p(s, 1, s + 1, 1.0);
                if s + 1 == n - 1 {
                    mdp.rewards[s * 2 + 1] = 1.0;
                }
            }
            Ok(mdp)
        }
        EnvKind::FourRooms | EnvKind::HazardGrid => {
            let layout = spec.grid_layout()?.expect("grid kinds have a layout");
            let goal = layout.goal().expect("validated fixed goal");
            let n = layout.n_floor();
            let goal_reward = if spec.kind == EnvKind::FourRooms {
                SUCCESS_REWARD
            } else {
                1.0
            };
            let mut mdp = TabularMdp::new(n, 4);
            for (s, &cell) in layout.floor_cells().iter().enumerate() {
                if cell == goal {
                    mdp.terminal[s] = true;
                    for a in 0..4 {
                        mdp.set_p(s, a, s, 1.0);
                    }
                    continue;
                }
                for a in 0..4 {
                    let next = layout.neighbor(cell, a);
                    let s2 = layout.floor_index(next).expect("neighbor is floor");
                    mdp.set_p(s, a, s2, 1.0);
                    if next == goal {
                        mdp.rewards[s * 4 + a] = goal_reward;
                    }
                    if layout.cell(next) == super::Cell::Hazard {
                        mdp.costs[s * 4 + a] = 1.0;
                    }
                }
            }
            Ok(mdp)
        }
    }
}

//! FIFO experience replay shared by every ensemble member.

use serde::{Deserialize, Serialize};

use crate::envs::Observation;
use crate::error::{Error, Result};
use crate::nn::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub reward: f64,
    pub cost: f64,
    pub next_obs: Observation,
    /// True only for environment termination; time-limit truncation is
    /// stored as `false` so targets keep bootstrapping.
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_width: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_width: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            obs_width,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.obs.width() != self.obs_width || t.next_obs.width() != self.obs_width {
            return Err(Error::shape(format!(
                "transition observation width {}/{} does not match buffer width {}",
                t.obs.width(),
                t.next_obs.width(),
                self.obs_width
            )));
        }
        if !(t.cost >= 0.0) || !t.reward.is_finite() || !t.cost.is_finite() {
            return Err(Error::invalid("transition reward/cost must be finite, cost >= 0"));
        }
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
        Ok(())
    }

    /// Uniform draw with replacement.
    pub fn sample(&self, batch: usize, rng: &mut Rng) -> Result<Vec<&Transition>> {
        if self.storage.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        if batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        let n = self.storage.len();
        Ok((0..batch).map(|_| &self.storage[rng.below(n)]).collect())
    }

    /// Stored transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.storage.split_at(self.cursor);
        older.iter().chain(newer.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(tag: usize) -> Transition {
        Transition {
            obs: Observation::from_ones(4, vec![0]),
            action: tag,
            reward: tag as f64,
            cost: 0.0,
            next_obs: Observation::from_ones(4, vec![1]),
            done: false,
        }
    }

    #[test]
    fn fifo_eviction() {
        let mut buf = ReplayBuffer::new(2, 4).unwrap();
        for i in 0..3 {
            buf.push(tr(i)).unwrap();
        }
        let kept: Vec<usize> = buf.iter().map(|t| t.action).collect();
        assert_eq!(kept, vec![1, 2]);
    }

    #[test]
    fn push_to_empty() {
        let mut buf = ReplayBuffer::new(10, 4).unwrap();
        buf.push(tr(0)).unwrap();
        assert_eq!(buf.len(), 1);
    }

    #[test]
    fn counting_below_capacity() {
        let mut buf = ReplayBuffer::new(500_000, 4).unwrap();
        for i in 0..100_000 {
            buf.push(tr(i)).unwrap();
        }
        assert_eq!(buf.len(), 100_000);
    }

    #[test]
    fn width_mismatch() {
        let mut buf = ReplayBuffer::new(2, 5).unwrap();
        assert!(matches!(buf.push(tr(0)), Err(Error::Shape(_))));
    }

    #[test]
    fn negative_cost_rejected() {
        let mut buf = ReplayBuffer::new(2, 4).unwrap();
        let mut t = tr(0);
        t.cost = -1.0;
        assert!(buf.push(t).is_err());
    }

    #[test]
    fn single_item_batch() {
        let mut buf = ReplayBuffer::new(3, 4).unwrap();
        buf.push(tr(7)).unwrap();
        let batch = buf.sample(4, &mut Rng::new(0, 0)).unwrap();
        assert_eq!(batch.len(), 4);
        assert!(batch.iter().all(|t| **t == tr(7)));
    }

    #[test]
    fn sample_errors() {
        let buf = ReplayBuffer::new(3, 4).unwrap();
        assert_eq!(buf.sample(1, &mut Rng::new(0, 0)).unwrap_err(), Error::EmptyBuffer);
    }

    #[test]
    fn sampling_is_repeatable() {
        let mut buf = ReplayBuffer::new(10, 4).unwrap();
        for i in 0..10 {
            buf.push(tr(i)).unwrap();
        }
        let a: Vec<usize> = buf.sample(16, &mut Rng::new(4, 2)).unwrap().iter().map(|t| t.action).collect();
        let b: Vec<usize> = buf.sample(16, &mut Rng::new(4, 2)).unwrap().iter().map(|t| t.action).collect();
        assert_eq!(a, b);
    }
}

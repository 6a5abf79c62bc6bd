//! Reset with deep ensembles.
//!
//! `N` value-based (or safe actor-critic) agents share one replay buffer and
//! are re-initialized one at a time on a staggered schedule. At every step each
//! agent proposes an action and the agent reset longest ago picks among the
//! proposals through a softmax over its own value estimates, so a freshly
//! reset member has little say until it has relearned.
//!
//! The crate is organized bottom-up:
//!
//! - [`nn`]: dense networks, backpropagation, Adam and seeded random streams.
//! - [`envs`]: chain, four-rooms and hazard-grid environments plus exact
//!   value iteration.
//! - [`replay`]: the shared FIFO buffer.
//! - [`agents`]: DQN and a CVaR-constrained actor-critic.
//! - [`ensemble`]: the reset schedule and the action composition.
//! - [`harness`]: the training loop, metrics and sweeps.

pub mod agents;
pub mod ensemble;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod replay;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/resets.md")]
    mod resets {}
    #[doc = include_str!("../../../book/src/composition.md")]
    mod composition {}
    #[doc = include_str!("../../../book/src/safety.md")]
    mod safety {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
}

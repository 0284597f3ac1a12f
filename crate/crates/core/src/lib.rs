//! TAMER and Stochastic TAMER on a small Wumpus-World gridworld.
//!
//! The crate bundles the environment, the tabular TAMER learner, exact and
//! biased simulated critics, the bias guard that turns TAMER into Stochastic
//! TAMER, a seeded experiment harness, statistics over recorded feedback logs,
//! and a live session server a person can train the agent through.

pub mod analytics;
pub mod error;
pub mod gridworld;
pub mod guard;
pub mod harness;
pub mod oracles;
pub mod seeding;
pub mod server;
pub mod session;
pub mod tamer;
pub mod wire;

pub use error::{Error, Result};

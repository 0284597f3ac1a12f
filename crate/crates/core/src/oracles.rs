//! Ground truth and simulated critics.
//!
//! [`value_iteration`] solves the world exactly; the optimal critic approves an
//! action iff it is in the Q* argmax set. The biased critic approves with a
//! fixed probability regardless of what the agent did.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Action, Coord, GridWorld, Transition};
use crate::seeding::{stream_rng, Stream};
use crate::tamer::{FeedbackProvider, FeedbackSource, Sign};

/// Absolute tolerance used when collecting tied maxima.
pub const TIE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    width: usize,
    height: usize,
    q: Vec<[f64; 4]>,
    pub gamma: f64,
    pub converged_residual: f64,
    pub iterations: usize,
}

impl QTable {
    fn index(&self, s: Coord) -> usize {
        assert!(s.col < self.width && s.row < self.height, "{s} out of bounds");
        s.row * self.width + s.col
    }

    pub fn get(&self, s: Coord, a: Action) -> f64 {
        self.q[self.index(s)][a.index()]
    }

    pub fn row(&self, s: Coord) -> [f64; 4] {
        self.q[self.index(s)]
    }

    pub fn value(&self, s: Coord) -> f64 {
        self.row(s).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub gamma: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            tol: 1e-9,
            max_iter: 10_000,
        }
    }
}

/// Synchronous value iteration over action values. Terminal cells are fixed
/// at zero.
pub fn value_iteration(world: &GridWorld, params: SolverParams) -> Result<QTable> {
    if !(params.gamma > 0.0 && params.gamma <= 1.0) {
        return Err(Error::InvalidConfig(format!("gamma must lie in (0, 1], got {}", params.gamma)));
    }
    let mut table = QTable {
        width: world.width(),
        height: world.height(),
        q: vec![[0.0; 4]; world.width() * world.height()],
        gamma: params.gamma,
        converged_residual: f64::INFINITY,
        iterations: 0,
    };
    let states: Vec<Coord> = world.non_terminal_cells().collect();

    for iter in 1..=params.max_iter {
        let mut next = table.q.clone();
        let mut residual: f64 = 0.0;
        for &s in &states {
            for a in Action::ALL {
                let t = world.step(s, a)?;
                let future = if t.terminal { 0.0 } else { table.value(t.to) };
                let q = t.reward + params.gamma * future;
                let idx = table.index(s);
                residual = residual.max((q - table.q[idx][a.index()]).abs());
                next[idx][a.index()] = q;
            }
        }
        table.q = next;
        table.converged_residual = residual;
        table.iterations = iter;
        if residual <= params.tol {
            return Ok(table);
        }
    }
    Err(Error::SolverDiverged {
        iterations: params.max_iter,
        residual: table.converged_residual,
    })
}

/// Solve with default parameters.
pub fn solve(world: &GridWorld) -> Result<QTable> {
    value_iteration(world, SolverParams::default())
}

/// All actions whose Q* is within [`TIE_TOLERANCE`] of the best, in canonical
/// order.
pub fn optimal_actions_in_row(row: [f64; 4]) -> Vec<Action> {
    let best = row.into_iter().fold(f64::NEG_INFINITY, f64::max);
    Action::ALL
        .into_iter()
        .filter(|a| best - row[a.index()] <= TIE_TOLERANCE)
        .collect()
}

pub fn optimal_actions(world: &GridWorld, q: &QTable, state: Coord) -> Result<Vec<Action>> {
    check_non_terminal(world, state)?;
    Ok(optimal_actions_in_row(q.row(state)))
}

pub fn optimal_feedback(world: &GridWorld, q: &QTable, state: Coord, action: Action) -> Result<Sign> {
    Ok(if optimal_actions(world, q, state)?.contains(&action) {
        Sign::Positive
    } else {
        Sign::Negative
    })
}

fn check_non_terminal(world: &GridWorld, state: Coord) -> Result<()> {
    if !world.in_bounds(state) {
        return Err(Error::Contract(format!("state {state} is out of bounds")));
    }
    if world.is_terminal(state) {
        return Err(Error::Contract(format!("state {state} is terminal")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleKind {
    Optimal,
    BiasedPositive { positive_rate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    #[serde(flatten)]
    pub kind: OracleKind,
    /// Salt mixed into every run seed.
    #[serde(default)]
    pub seed: u64,
}

impl OracleConfig {
    pub fn optimal() -> Self {
        Self {
            kind: OracleKind::Optimal,
            seed: 0,
        }
    }

    pub fn biased(positive_rate: f64) -> Self {
        Self {
            kind: OracleKind::BiasedPositive { positive_rate },
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            OracleKind::Optimal => Ok(()),
            OracleKind::BiasedPositive { positive_rate } if (0.0..=1.0).contains(&positive_rate) => Ok(()),
            OracleKind::BiasedPositive { positive_rate } => Err(Error::InvalidConfig(format!(
                "positive_rate must lie in [0, 1], got {positive_rate}"
            ))),
        }
    }

    /// Builds the critic for one run seeded by `run_seed`.
    pub fn provider(&self, world: &GridWorld, q: Arc<QTable>, run_seed: u64) -> Box<dyn FeedbackProvider + Send> {
        match self.kind {
            OracleKind::Optimal => Box::new(OptimalOracle::new(world.clone(), q)),
            OracleKind::BiasedPositive { positive_rate } => Box::new(BiasedOracle::new(
                positive_rate,
                stream_rng(run_seed, self.seed, Stream::Oracle),
            )),
        }
    }
}

/// +1 with probability `positive_rate`, else -1.
pub fn biased_feedback<R: Rng + ?Sized>(positive_rate: f64, rng: &mut R) -> Sign {
    if rng.gen_bool(positive_rate) {
        Sign::Positive
    } else {
        Sign::Negative
    }
}

/// Critic that approves exactly the Q*-optimal actions.
#[derive(Debug, Clone)]
pub struct OptimalOracle {
    world: GridWorld,
    q: Arc<QTable>,
}

impl OptimalOracle {
    pub fn new(world: GridWorld, q: Arc<QTable>) -> Self {
        Self { world, q }
    }
}

impl FeedbackProvider for OptimalOracle {
    fn feedback(&mut self, t: &Transition) -> Option<Sign> {
        Some(
            optimal_feedback(&self.world, &self.q, t.from, t.action)
                .expect("transitions always start from a non-terminal cell"),
        )
    }

    fn source(&self) -> FeedbackSource {
        FeedbackSource::OptimalOracle
    }
}

/// Indiscriminately positive critic. Draws exactly one sign per transition,
/// so the sign stream is a function of the seed and the global step count only.
#[derive(Debug, Clone)]
pub struct BiasedOracle {
    positive_rate: f64,
    rng: ChaCha8Rng,
}

impl BiasedOracle {
    pub fn new(positive_rate: f64, rng: ChaCha8Rng) -> Self {
        Self { positive_rate, rng }
    }

    pub fn next_sign(&mut self) -> Sign {
        biased_feedback(self.positive_rate, &mut self.rng)
    }
}

impl FeedbackProvider for BiasedOracle {
    fn feedback(&mut self, _: &Transition) -> Option<Sign> {
        Some(self.next_sign())
    }

    fn source(&self) -> FeedbackSource {
        FeedbackSource::BiasedOracle
    }
}

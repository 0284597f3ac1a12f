//! Tabular TAMER: learn a model of the trainer's reinforcement and act
//! greedily on it.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Action, Coord, GridWorld, TerminalCause, Transition};
use crate::guard::Guard;

/// A binary critique. Serialized as `1` / `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }

    /// Keyboard token used by the live interface: `p` or `n`.
    pub fn from_token(token: &str) -> Option<Sign> {
        match token {
            "p" => Some(Sign::Positive),
            "n" => Some(Sign::Negative),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Sign::Positive => "p",
            Sign::Negative => "n",
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, String> {
        match v {
            1 => Ok(Sign::Positive),
            -1 => Ok(Sign::Negative),
            other => Err(format!("sign must be 1 or -1, got {other}")),
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Positive => 1,
            Sign::Negative => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackSource {
    Human,
    OptimalOracle,
    BiasedOracle,
    GuardFlipped,
}

/// One critique bound to the transition it follows. `sign: None` means the
/// trainer stayed silent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub episode: usize,
    pub step: usize,
    pub state: Coord,
    pub action: Action,
    pub sign: Option<Sign>,
    pub source: FeedbackSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub original_sign: Option<Sign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    CanonicalOrder,
    SeededUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TamerConfig {
    pub learning_rate: f64,
    pub tie_break: TieBreak,
}

impl Default for TamerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.3,
            tie_break: TieBreak::CanonicalOrder,
        }
    }
}

impl TamerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate > 0.0 && self.learning_rate <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "learning_rate must lie in (0, 1], got {}",
                self.learning_rate
            )))
        }
    }
}

/// Tabular estimate of the trainer's reinforcement. Unseen pairs read as 0.
/// Serializes as a list of [`ModelEntry`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<ModelEntry>", from = "Vec<ModelEntry>")]
pub struct RewardModel {
    table: BTreeMap<(Coord, Action), f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub state: Coord,
    pub action: Action,
    pub value: f64,
}

impl From<RewardModel> for Vec<ModelEntry> {
    fn from(m: RewardModel) -> Self {
        m.entries().map(|(state, action, value)| ModelEntry { state, action, value }).collect()
    }
}

impl From<Vec<ModelEntry>> for RewardModel {
    fn from(entries: Vec<ModelEntry>) -> Self {
        let table = entries.into_iter().map(|e| ((e.state, e.action), e.value)).collect();
        Self { table }
    }
}

impl RewardModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, state: Coord, action: Action) -> f64 {
        self.table.get(&(state, action)).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, state: Coord, action: Action, value: f64) {
        assert!(value.is_finite(), "reward model values must be finite");
        self.table.insert((state, action), value);
    }

    pub fn row(&self, state: Coord) -> [f64; 4] {
        Action::ALL.map(|a| self.get(state, a))
    }

    /// Entries that have been written at least once.
    pub fn entries(&self) -> impl Iterator<Item = (Coord, Action, f64)> + '_ {
        self.table.iter().map(|(&(s, a), &v)| (s, a, v))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Equality on the exact bit patterns of every stored value.
    pub fn bitwise_eq(&self, other: &RewardModel) -> bool {
        self.table.len() == other.table.len()
            && self
                .table
                .iter()
                .zip(other.table.iter())
                .all(|((k1, v1), (k2, v2))| k1 == k2 && v1.to_bits() == v2.to_bits())
    }
}

/// Greedy choice over the model's row for `state`.
pub fn select_action<R: Rng + ?Sized>(
    model: &RewardModel,
    state: Coord,
    cfg: &TamerConfig,
    rng: &mut R,
) -> Action {
    let row = model.row(state);
    let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<Action> = Action::ALL
        .into_iter()
        .filter(|a| row[a.index()] == best)
        .collect();
    match cfg.tie_break {
        TieBreak::CanonicalOrder => tied[0],
        TieBreak::SeededUniform if tied.len() == 1 => tied[0],
        TieBreak::SeededUniform => tied[rng.gen_range(0..tied.len())],
    }
}

/// Moves `H(s,a)` a fraction `learning_rate` of the way toward the sign.
pub fn update(mut model: RewardModel, ev: &FeedbackEvent, cfg: &TamerConfig) -> RewardModel {
    update_in_place(&mut model, ev, cfg);
    model
}

pub fn update_in_place(model: &mut RewardModel, ev: &FeedbackEvent, cfg: &TamerConfig) {
    if let Some(sign) = ev.sign {
        let h = model.get(ev.state, ev.action);
        model.set(ev.state, ev.action, h + cfg.learning_rate * (sign.value() - h));
    }
}

/// Anything that critiques a transition: a simulated oracle, a scripted
/// replay, or a human behind a socket.
pub trait FeedbackProvider {
    fn feedback(&mut self, transition: &Transition) -> Option<Sign>;

    fn source(&self) -> FeedbackSource;
}

/// Never says anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct Silent;

impl FeedbackProvider for Silent {
    fn feedback(&mut self, _: &Transition) -> Option<Sign> {
        None
    }

    fn source(&self) -> FeedbackSource {
        FeedbackSource::Human
    }
}

/// Replays a fixed sign sequence, one entry per transition, then goes silent.
#[derive(Debug, Clone, Default)]
pub struct Scripted {
    signs: std::collections::VecDeque<Option<Sign>>,
}

impl Scripted {
    pub fn new(signs: impl IntoIterator<Item = Option<Sign>>) -> Self {
        Self {
            signs: signs.into_iter().collect(),
        }
    }
}

impl FeedbackProvider for Scripted {
    fn feedback(&mut self, _: &Transition) -> Option<Sign> {
        self.signs.pop_front().flatten()
    }

    fn source(&self) -> FeedbackSource {
        FeedbackSource::Human
    }
}

/// Result of one episode of training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub episode: usize,
    pub total_return: f64,
    pub steps: usize,
    pub terminal_cause: TerminalCause,
    pub events: Vec<FeedbackEvent>,
    pub flips: usize,
    pub final_score: Option<f64>,
    pub trajectory: Vec<Transition>,
}

impl EpisodeOutcome {
    pub fn positive_count(&self) -> usize {
        self.count(Sign::Positive)
    }

    pub fn negative_count(&self) -> usize {
        self.count(Sign::Negative)
    }

    /// Counts the signs the model was actually trained on.
    fn count(&self, sign: Sign) -> usize {
        self.events.iter().filter(|e| e.sign == Some(sign)).count()
    }
}

/// Runs one episode from the world's start cell until a terminal cell or the
/// step cap. Every transition is critiqued, optionally rewritten by the guard,
/// and then used to update the model.
pub fn run_episode<R: Rng + ?Sized>(
    world: &GridWorld,
    mut model: RewardModel,
    cfg: &TamerConfig,
    provider: &mut dyn FeedbackProvider,
    mut guard: Option<&mut Guard>,
    rng: &mut R,
    episode: usize,
) -> Result<(EpisodeOutcome, RewardModel)> {
    let mut pos = world.start();
    let mut outcome = EpisodeOutcome {
        episode,
        total_return: 0.0,
        steps: 0,
        terminal_cause: TerminalCause::None,
        events: Vec::new(),
        flips: 0,
        final_score: None,
        trajectory: Vec::new(),
    };

    loop {
        let action = select_action(&model, pos, cfg, rng);
        let mut transition = world.step(pos, action)?;
        outcome.steps += 1;
        outcome.total_return += transition.reward;

        let sign = provider.feedback(&transition);
        let mut ev = FeedbackEvent {
            episode,
            step: outcome.steps,
            state: pos,
            action,
            sign,
            source: provider.source(),
            original_sign: None,
            wall_time: None,
        };
        if let Some(g) = guard.as_deref_mut() {
            ev = g.process(ev);
            if ev.source == FeedbackSource::GuardFlipped {
                outcome.flips += 1;
            }
        }
        update_in_place(&mut model, &ev, cfg);
        outcome.events.push(ev);

        if !transition.terminal && outcome.steps >= world.max_steps() {
            transition.terminal = true;
            transition.terminal_cause = TerminalCause::StepCap;
        }
        outcome.trajectory.push(transition);
        if transition.terminal {
            outcome.terminal_cause = transition.terminal_cause;
            break;
        }
        pos = transition.to;
    }

    outcome.final_score = guard.map(|g| g.state().score);
    Ok((outcome, model))
}

//! Live training session as a pure state machine.
//!
//! Time enters only through the `now_ms` arguments, so every transition is
//! reproducible in tests. An episode run here consumes the same random
//! streams, in the same order, as [`crate::harness::run_trial`]; a client
//! that replays an oracle's signs with no feedback window ends with a
//! bitwise-identical reward model.
//!
//! ```text
//! Idle --start--> AwaitingFeedback --feedback|timeout--> Animating --advance--> AwaitingFeedback
//!                                                    \-> EpisodeDone --advance--> AwaitingFeedback
//!                                                    \-> Finished
//! ```

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::FeedbackLog;
use crate::error::{Error, Result};
use crate::gridworld::{build_default_world, Coord, GridWorld, TerminalCause, Transition};
use crate::guard::{Guard, GuardConfig};
use crate::harness::Variant;
use crate::oracles::{solve, QTable};
use crate::seeding::{stream_rng, Stream};
use crate::tamer::{select_action, update_in_place, FeedbackEvent, FeedbackSource, RewardModel, Sign, TamerConfig};
use crate::wire::{ClientMessage, ErrorCode, PhaseName, ServerMessage, SessionPatch, StateView};

fn default_window() -> u64 {
    2000
}

fn default_delay() -> u64 {
    300
}

fn default_episodes() -> usize {
    10
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    #[serde(default)]
    pub world: Option<GridWorld>,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub tamer: TamerConfig,
    /// Required for the stochastic variant.
    #[serde(default)]
    pub guard: Option<GuardConfig>,
    /// 0 keeps every window open until feedback arrives.
    #[serde(default = "default_window")]
    pub feedback_window_ms: u64,
    #[serde(default = "default_delay")]
    pub step_delay_ms: u64,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub participant_id: Option<String>,
    /// Label written to the exported log; defaults to the variant name.
    #[serde(default)]
    pub condition: Option<String>,
}

fn default_variant() -> Variant {
    Variant::Baseline
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            world: None,
            variant: Variant::Baseline,
            tamer: TamerConfig::default(),
            guard: None,
            feedback_window_ms: default_window(),
            step_delay_ms: default_delay(),
            episodes: default_episodes(),
            seed: 0,
            participant_id: None,
            condition: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        self.tamer.validate()?;
        if self.episodes == 0 {
            return Err(Error::InvalidConfig("episodes must be at least 1".into()));
        }
        match (self.variant, &self.guard) {
            (Variant::Stochastic, None) => {
                Err(Error::InvalidConfig("the stochastic variant requires a guard config".into()))
            }
            (_, Some(g)) => g.validate(),
            _ => Ok(()),
        }
    }

    fn apply(&self, patch: &SessionPatch) -> SessionConfig {
        let mut next = self.clone();
        if let Some(v) = patch.variant {
            next.variant = v;
        }
        if let Some(g) = patch.guard {
            next.guard = Some(g);
        }
        if let Some(w) = patch.feedback_window_ms {
            next.feedback_window_ms = w;
        }
        if let Some(d) = patch.step_delay_ms {
            next.step_delay_ms = d;
        }
        if let Some(e) = patch.episodes {
            next.episodes = e;
        }
        if let Some(s) = patch.seed {
            next.seed = s;
        }
        next
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    /// `None` deadline: the window never closes.
    AwaitingFeedback { deadline: Option<u64> },
    Animating,
    EpisodeDone,
    Finished,
}

impl Phase {
    pub fn name(self) -> PhaseName {
        match self {
            Phase::Idle => PhaseName::Idle,
            Phase::AwaitingFeedback { .. } => PhaseName::AwaitingFeedback,
            Phase::Animating => PhaseName::Animating,
            Phase::EpisodeDone => PhaseName::EpisodeDone,
            Phase::Finished => PhaseName::Finished,
        }
    }
}

/// A refused client request. Becomes an `error` message on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    pub code: ErrorCode,
    pub message: String,
}

impl Rejection {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

pub type Reply = std::result::Result<Vec<ServerMessage>, Rejection>;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> String {
    format!("s{:06}", NEXT_ID.fetch_add(1, Ordering::Relaxed))
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    cfg: SessionConfig,
    world: GridWorld,
    q: Arc<QTable>,
    model: RewardModel,
    guard: Option<Guard>,
    rng: ChaCha8Rng,
    phase: Phase,
    episode: usize,
    step: usize,
    pos: Coord,
    total_return: f64,
    last_move: Option<Transition>,
    episode_returns: Vec<f64>,
    events: Vec<FeedbackEvent>,
    seq: u64,
}

/// Builds a session with a process-unique id.
pub fn create_session(cfg: SessionConfig) -> Result<Session> {
    Session::with_id(fresh_id(), cfg)
}

impl Session {
    pub fn with_id(id: impl Into<String>, cfg: SessionConfig) -> Result<Self> {
        cfg.validate()?;
        let world = cfg.world.clone().unwrap_or_else(build_default_world);
        let q = Arc::new(solve(&world)?);
        let mut s = Self {
            id: id.into(),
            rng: stream_rng(cfg.seed, 0, Stream::Agent),
            guard: None,
            model: RewardModel::new(),
            phase: Phase::Idle,
            episode: 0,
            step: 0,
            pos: world.start(),
            total_return: 0.0,
            last_move: None,
            episode_returns: Vec::new(),
            events: Vec::new(),
            seq: 0,
            world,
            q,
            cfg,
        };
        s.reset_learning();
        Ok(s)
    }

    fn reset_learning(&mut self) {
        self.rng = stream_rng(self.cfg.seed, 0, Stream::Agent);
        self.guard = match (self.cfg.variant, self.cfg.guard) {
            (Variant::Stochastic, Some(g)) => Some(Guard::new(g, self.world.clone(), self.q.clone(), self.cfg.seed)),
            _ => None,
        };
        self.model = RewardModel::new();
        self.phase = Phase::Idle;
        self.episode = 0;
        self.step = 0;
        self.pos = self.world.start();
        self.total_return = 0.0;
        self.last_move = None;
        self.episode_returns.clear();
        self.events.clear();
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    pub fn world(&self) -> &GridWorld {
        &self.world
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn model(&self) -> &RewardModel {
        &self.model
    }

    pub fn guard(&self) -> Option<&Guard> {
        self.guard.as_ref()
    }

    pub fn episode_returns(&self) -> &[f64] {
        &self.episode_returns
    }

    /// Every recorded event, silent ones included.
    pub fn events(&self) -> &[FeedbackEvent] {
        &self.events
    }

    /// `(episode, step)` of the move currently open for feedback.
    pub fn pending_key(&self) -> Option<(usize, usize)> {
        match self.phase {
            Phase::AwaitingFeedback { .. } => Some((self.episode, self.step)),
            _ => None,
        }
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    pub fn state_message(&mut self) -> ServerMessage {
        let seq = self.next_seq();
        self.view(seq)
    }

    /// Current state stamped with the latest seq, without consuming a new
    /// one. Sent to a newly attached client only.
    pub fn snapshot(&self) -> ServerMessage {
        self.view(self.seq)
    }

    fn view(&self, seq: u64) -> ServerMessage {
        let deadline = match self.phase {
            Phase::AwaitingFeedback { deadline } => deadline,
            _ => None,
        };
        let (user_score, p_flip, threshold) = match &self.guard {
            Some(g) => (Some(g.state().score), Some(g.state().p), Some(g.config().threshold)),
            None => (None, None, None),
        };
        ServerMessage::State(StateView {
            seq,
            session_id: self.id.clone(),
            variant: self.cfg.variant,
            grid: self.world.to_file(),
            agent_pos: self.pos,
            episode: self.episode,
            episodes_total: self.cfg.episodes,
            step: self.step,
            phase: self.phase.name(),
            total_return: self.total_return,
            user_score,
            p_flip,
            threshold,
            deadline,
            last_move: self.last_move,
            episode_returns: self.episode_returns.clone(),
        })
    }

    /// Dispatches a client message; refusals come back as `error` messages.
    pub fn handle(&mut self, msg: ClientMessage, now_ms: u64) -> Vec<ServerMessage> {
        let reply = match msg {
            ClientMessage::Start => self.start(now_ms),
            ClientMessage::Reset => Ok(self.reset()),
            ClientMessage::Feedback { sign, step } => self.handle_feedback(&sign, step, now_ms),
            ClientMessage::Configure(patch) => self.configure(&patch),
        };
        reply.unwrap_or_else(|r| vec![self.error_message(r)])
    }

    pub fn error_message(&mut self, r: Rejection) -> ServerMessage {
        ServerMessage::Error { seq: self.next_seq(), code: r.code, message: r.message }
    }

    pub fn start(&mut self, now_ms: u64) -> Reply {
        if self.phase != Phase::Idle {
            return Err(Rejection::new(ErrorCode::WrongPhase, "session already started; send reset first"));
        }
        self.advance(now_ms)
    }

    pub fn reset(&mut self) -> Vec<ServerMessage> {
        self.reset_learning();
        vec![self.state_message()]
    }

    pub fn configure(&mut self, patch: &SessionPatch) -> Reply {
        if self.phase != Phase::Idle {
            return Err(Rejection::new(ErrorCode::WrongPhase, "configure is only allowed while idle"));
        }
        let next = self.cfg.apply(patch);
        next.validate().map_err(|e| Rejection::new(ErrorCode::InvalidConfig, e.to_string()))?;
        self.cfg = next;
        self.reset_learning();
        Ok(vec![self.state_message()])
    }

    /// Takes the next move, starting a new episode first when needed, and
    /// opens a feedback window for it.
    pub fn advance(&mut self, now_ms: u64) -> Reply {
        match self.phase {
            Phase::Idle | Phase::EpisodeDone => {
                self.episode += 1;
                self.step = 0;
                self.pos = self.world.start();
                self.total_return = 0.0;
                self.last_move = None;
            }
            Phase::Animating => {}
            Phase::AwaitingFeedback { .. } => {
                return Err(Rejection::new(ErrorCode::WrongPhase, "a move is still awaiting feedback"))
            }
            Phase::Finished => return Err(Rejection::new(ErrorCode::WrongPhase, "session finished")),
        }

        let action = select_action(&self.model, self.pos, &self.cfg.tamer, &mut self.rng);
        let mut t = self
            .world
            .step(self.pos, action)
            .expect("the agent never stands on a terminal cell");
        self.step += 1;
        self.total_return += t.reward;
        if !t.terminal && self.step >= self.world.max_steps() {
            t.terminal = true;
            t.terminal_cause = TerminalCause::StepCap;
        }
        self.pos = t.to;
        self.last_move = Some(t);
        let deadline = (self.cfg.feedback_window_ms > 0).then(|| now_ms + self.cfg.feedback_window_ms);
        self.phase = Phase::AwaitingFeedback { deadline };
        Ok(vec![self.state_message()])
    }

    /// First feedback for the open move wins; anything later is refused.
    pub fn handle_feedback(&mut self, token: &str, step: Option<usize>, now_ms: u64) -> Reply {
        let Phase::AwaitingFeedback { deadline } = self.phase else {
            return Err(Rejection::new(ErrorCode::FeedbackClosed, "no move is open for feedback"));
        };
        if deadline.is_some_and(|d| now_ms >= d) {
            return Err(Rejection::new(ErrorCode::FeedbackClosed, "feedback window has closed"));
        }
        if step.is_some_and(|s| s != self.step) {
            return Err(Rejection::new(
                ErrorCode::FeedbackClosed,
                format!("feedback targets step {}, open step is {}", step.unwrap_or(0), self.step),
            ));
        }
        let sign = Sign::from_token(token)
            .ok_or_else(|| Rejection::new(ErrorCode::Malformed, format!("sign must be \"p\" or \"n\", got {token:?}")))?;

        let ev = self.record(Some(sign), now_ms);
        let ack = ServerMessage::FeedbackAck {
            seq: self.next_seq(),
            episode: ev.episode,
            step: ev.step,
            applied_sign: ev.sign.unwrap_or(sign),
            original_sign: sign,
            guard_flipped: ev.source == FeedbackSource::GuardFlipped,
        };
        let mut out = vec![ack];
        out.extend(self.close_window());
        Ok(out)
    }

    /// Closes an expired window with a silent event. Refused before the
    /// deadline and when windows never close.
    pub fn window_timeout(&mut self, now_ms: u64) -> Reply {
        match self.phase {
            Phase::AwaitingFeedback { deadline: Some(d) } if now_ms >= d => {
                self.record(None, now_ms);
                Ok(self.close_window())
            }
            _ => Err(Rejection::new(ErrorCode::WrongPhase, "no expired feedback window")),
        }
    }

    fn record(&mut self, sign: Option<Sign>, now_ms: u64) -> FeedbackEvent {
        let t = self.last_move.expect("an open window always has a move");
        let mut ev = FeedbackEvent {
            episode: self.episode,
            step: self.step,
            state: t.from,
            action: t.action,
            sign,
            source: FeedbackSource::Human,
            original_sign: None,
            wall_time: Some(now_ms),
        };
        if let Some(g) = self.guard.as_mut() {
            ev = g.process(ev);
        }
        update_in_place(&mut self.model, &ev, &self.cfg.tamer);
        self.events.push(ev.clone());
        ev
    }

    fn close_window(&mut self) -> Vec<ServerMessage> {
        let t = self.last_move.expect("an open window always has a move");
        if !t.terminal {
            self.phase = Phase::Animating;
            return vec![self.state_message()];
        }
        self.episode_returns.push(self.total_return);
        let end = ServerMessage::EpisodeEnd {
            seq: self.next_seq(),
            episode: self.episode,
            total_return: self.total_return,
            steps: self.step,
            cause: t.terminal_cause,
        };
        self.phase = if self.episode >= self.cfg.episodes { Phase::Finished } else { Phase::EpisodeDone };
        vec![end, self.state_message()]
    }

    /// Log of every non-silent critique, in order.
    pub fn export_log(&self) -> FeedbackLog {
        let condition = self.cfg.condition.clone().unwrap_or_else(|| self.cfg.variant.to_string());
        let participant = self.cfg.participant_id.clone().unwrap_or_else(|| self.id.clone());
        let mut log = FeedbackLog::new(self.id.clone(), participant, condition);
        log.events = self.events.iter().filter(|e| e.sign.is_some()).cloned().collect();
        log
    }
}

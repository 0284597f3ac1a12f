//! JSON messages exchanged with live-session clients. Every message is an
//! object with a `type` field; server messages also carry a strictly
//! increasing `seq`.

use serde::{Deserialize, Serialize};

use crate::gridworld::{Coord, TerminalCause, Transition, WorldFile};
use crate::guard::GuardConfig;
use crate::harness::Variant;
use crate::tamer::Sign;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Start,
    Reset,
    Feedback {
        /// `"p"` or `"n"`.
        sign: String,
        /// Optional step the critique is meant for; a mismatch is rejected.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        step: Option<usize>,
    },
    Configure(SessionPatch),
}

/// Settings a client may change while the session is idle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<GuardConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback_window_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_delay_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseName {
    Idle,
    AwaitingFeedback,
    Animating,
    EpisodeDone,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    FeedbackClosed,
    Malformed,
    WrongPhase,
    InvalidConfig,
}

/// Full session snapshot; clients render from this alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub seq: u64,
    pub session_id: String,
    pub variant: Variant,
    pub grid: WorldFile,
    pub agent_pos: Coord,
    pub episode: usize,
    pub episodes_total: usize,
    pub step: usize,
    pub phase: PhaseName,
    #[serde(rename = "return")]
    pub total_return: f64,
    pub user_score: Option<f64>,
    pub p_flip: Option<f64>,
    pub threshold: Option<f64>,
    /// Milliseconds since the Unix epoch; `None` while no window is open or
    /// when windows never close.
    pub deadline: Option<u64>,
    pub last_move: Option<Transition>,
    pub episode_returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum ServerMessage {
    State(StateView),
    FeedbackAck {
        seq: u64,
        episode: usize,
        step: usize,
        applied_sign: Sign,
        original_sign: Sign,
        guard_flipped: bool,
    },
    EpisodeEnd {
        seq: u64,
        episode: usize,
        #[serde(rename = "return")]
        total_return: f64,
        steps: usize,
        cause: TerminalCause,
    },
    Error {
        seq: u64,
        code: ErrorCode,
        message: String,
    },
}

impl ServerMessage {
    pub fn seq(&self) -> u64 {
        match self {
            ServerMessage::State(s) => s.seq,
            ServerMessage::FeedbackAck { seq, .. }
            | ServerMessage::EpisodeEnd { seq, .. }
            | ServerMessage::Error { seq, .. } => *seq,
        }
    }
}

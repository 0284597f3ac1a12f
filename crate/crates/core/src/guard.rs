//! Stochastic TAMER's bias guard.
//!
//! A running user score is penalized whenever the trainer approves an action
//! that is not Q*-optimal and credited otherwise. While the score sits below
//! the threshold, incoming approvals are flipped to disapprovals with a
//! probability that grows on every guarded step and resets once the score
//! recovers. Scoring always sees the trainer's original sign.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::GridWorld;
use crate::oracles::{optimal_actions, QTable};
use crate::seeding::{stream_rng, Stream};
use crate::tamer::{FeedbackEvent, FeedbackSource, Sign};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuardConfig {
    pub threshold: f64,
    pub penalty: f64,
    pub credit: f64,
    pub score_cap: f64,
    pub p0: f64,
    /// Multiplicative growth of the flip probability per below-threshold step.
    pub escalation: f64,
    pub p_max: f64,
    pub seed: u64,
}

impl Default for GuardConfig {
    fn default() -> Self {
        // One approval of a non-optimal action drops the score below the
        // threshold; one credit restores it.
        Self {
            threshold: -0.5,
            penalty: 1.0,
            credit: 1.0,
            score_cap: 0.0,
            p0: 0.9,
            escalation: 0.1,
            p_max: 1.0,
            seed: 0,
        }
    }
}

impl GuardConfig {
    pub fn validate(&self) -> Result<()> {
        let problems = [
            (self.threshold < self.score_cap, "threshold must be below score_cap"),
            (self.p0 > 0.0 && self.p0 <= self.p_max && self.p_max <= 1.0, "need 0 < p0 <= p_max <= 1"),
            (self.escalation >= 0.0, "escalation must be non-negative"),
            (self.penalty > 0.0, "penalty must be positive"),
            (self.credit >= 0.0, "credit must be non-negative"),
        ];
        match problems.iter().find(|(ok, _)| !ok) {
            None => Ok(()),
            Some((_, msg)) => Err(Error::InvalidConfig(format!("guard: {msg}"))),
        }
    }

    pub fn initial_state(&self) -> UserScoreState {
        UserScoreState {
            score: 0.0_f64.min(self.score_cap),
            p: self.p0,
            below_streak: 0,
            flips_total: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserScoreState {
    pub score: f64,
    pub p: f64,
    pub below_streak: usize,
    pub flips_total: usize,
}

pub fn score_update(
    mut state: UserScoreState,
    sign: Sign,
    action_is_optimal: bool,
    cfg: &GuardConfig,
) -> UserScoreState {
    if sign == Sign::Positive && !action_is_optimal {
        state.score -= cfg.penalty;
    } else {
        state.score = cfg.score_cap.min(state.score + cfg.credit);
    }
    state
}

/// Returns the (possibly flipped) sign, the new state and whether a flip
/// happened. Must run after [`score_update`] for the same event.
pub fn maybe_flip<R: Rng + ?Sized>(
    mut state: UserScoreState,
    sign: Sign,
    rng: &mut R,
    cfg: &GuardConfig,
) -> (Sign, UserScoreState, bool) {
    if state.score >= cfg.threshold {
        state.p = cfg.p0;
        state.below_streak = 0;
        return (sign, state, false);
    }
    state.below_streak += 1;
    let flipped = sign == Sign::Positive && rng.gen_bool(state.p);
    if flipped {
        state.flips_total += 1;
    }
    state.p = cfg.p_max.min(state.p * (1.0 + cfg.escalation));
    let out = if flipped { Sign::Negative } else { sign };
    (out, state, flipped)
}

/// Scores the event against ground truth, then possibly flips it. Silent
/// events pass straight through.
pub fn guard_pipeline<R: Rng + ?Sized>(
    state: UserScoreState,
    ev: FeedbackEvent,
    world: &GridWorld,
    q: &QTable,
    rng: &mut R,
    cfg: &GuardConfig,
) -> Result<(FeedbackEvent, UserScoreState)> {
    let Some(sign) = ev.sign else {
        return Ok((ev, state));
    };
    let optimal = optimal_actions(world, q, ev.state)?.contains(&ev.action);
    let state = score_update(state, sign, optimal, cfg);
    let (out, state, flipped) = maybe_flip(state, sign, rng, cfg);
    let ev = if flipped {
        FeedbackEvent {
            sign: Some(out),
            source: FeedbackSource::GuardFlipped,
            original_sign: Some(sign),
            ..ev
        }
    } else {
        ev
    };
    Ok((ev, state))
}

/// A guard instance bound to one world and one session or run.
#[derive(Debug, Clone)]
pub struct Guard {
    cfg: GuardConfig,
    state: UserScoreState,
    world: GridWorld,
    q: Arc<QTable>,
    rng: ChaCha8Rng,
}

impl Guard {
    pub fn new(cfg: GuardConfig, world: GridWorld, q: Arc<QTable>, run_seed: u64) -> Self {
        Self {
            state: cfg.initial_state(),
            rng: stream_rng(run_seed, cfg.seed, Stream::Guard),
            cfg,
            world,
            q,
        }
    }

    pub fn state(&self) -> &UserScoreState {
        &self.state
    }

    pub fn config(&self) -> &GuardConfig {
        &self.cfg
    }

    /// Panics if the event's state is terminal; transitions never start there.
    pub fn process(&mut self, ev: FeedbackEvent) -> FeedbackEvent {
        let (ev, state) = guard_pipeline(self.state, ev, &self.world, &self.q, &mut self.rng, &self.cfg)
            .expect("feedback events come from non-terminal states");
        self.state = state;
        ev
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{build_default_world, Action, Coord};
    use crate::oracles::solve;
    use rand::SeedableRng;

    /// Slow-trigger settings: threshold -3, half credit, p from 0.2 to 0.9.
    fn cfg() -> GuardConfig {
        GuardConfig {
            threshold: -3.0,
            credit: 0.5,
            p0: 0.2,
            p_max: 0.9,
            ..GuardConfig::default()
        }
    }

    fn at(score: f64) -> UserScoreState {
        UserScoreState { score, ..cfg().initial_state() }
    }

    #[test]
    fn score_rules() {
        let c = cfg();
        assert_eq!(score_update(at(0.0), Sign::Positive, false, &c).score, -1.0);
        assert_eq!(score_update(at(-1.0), Sign::Positive, true, &c).score, -0.5);
        assert_eq!(score_update(at(0.0), Sign::Negative, false, &c).score, 0.0);
        assert_eq!(score_update(at(-2.0), Sign::Negative, true, &c).score, -1.5);
    }

    #[test]
    fn above_threshold_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = at(-1.0);
        s.p = 0.7;
        s.below_streak = 4;
        let (sign, s, flipped) = maybe_flip(s, Sign::Positive, &mut rng, &cfg());
        assert_eq!((sign, flipped), (Sign::Positive, false));
        assert_eq!(s.p, cfg().p0);
        assert_eq!(s.below_streak, 0);
    }

    #[test]
    fn forced_flip() {
        let c = GuardConfig { p0: 1.0, p_max: 1.0, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (sign, s, flipped) = maybe_flip(UserScoreState { score: -4.0, ..c.initial_state() }, Sign::Positive, &mut rng, &c);
        assert_eq!(sign, Sign::Negative);
        assert!(flipped);
        assert_eq!(s.flips_total, 1);
    }

    #[test]
    fn negatives_never_flip() {
        let c = GuardConfig { p0: 1.0, p_max: 1.0, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (sign, s, flipped) = maybe_flip(at(-10.0), Sign::Negative, &mut rng, &c);
        assert_eq!((sign, flipped, s.flips_total), (Sign::Negative, false, 0));
    }

    #[test]
    fn escalation_after_five_steps() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = at(-5.0);
        for _ in 0..5 {
            s = maybe_flip(s, Sign::Negative, &mut rng, &c).1;
        }
        assert!((s.p - 0.2 * 1.1f64.powi(5)).abs() < 1e-12);
        assert!((s.p - 0.32210).abs() < 1e-4);
        assert_eq!(s.below_streak, 5);
    }

    #[test]
    fn escalation_caps_at_p_max() {
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = at(-5.0);
        for _ in 0..100 {
            s = maybe_flip(s, Sign::Negative, &mut rng, &c).1;
        }
        assert_eq!(s.p, c.p_max);
    }

    fn ev(state: Coord, action: Action, sign: Option<Sign>) -> FeedbackEvent {
        FeedbackEvent {
            episode: 1,
            step: 1,
            state,
            action,
            sign,
            source: FeedbackSource::Human,
            original_sign: None,
            wall_time: None,
        }
    }

    #[test]
    fn pipeline_cases() {
        let w = build_default_world();
        let q = solve(&w).unwrap();
        let c = cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s0 = Coord::new(0, 0);

        let e = ev(s0, Action::East, Some(Sign::Positive));
        let (out, st) = guard_pipeline(c.initial_state(), e.clone(), &w, &q, &mut rng, &c).unwrap();
        assert_eq!(out, e);
        assert_eq!(st.score, 0.0);

        let silent = ev(s0, Action::North, None);
        let (out, st) = guard_pipeline(at(-7.0), silent.clone(), &w, &q, &mut rng, &c).unwrap();
        assert_eq!(out, silent);
        assert_eq!(st, at(-7.0));

        // Four approvals of a wall bump drop the score to -4.
        let bad = ev(s0, Action::North, Some(Sign::Positive));
        let mut st = c.initial_state();
        for _ in 0..4 {
            st = guard_pipeline(st, bad.clone(), &w, &q, &mut rng, &c).unwrap().1;
        }
        assert_eq!(st.score, -4.0);
        assert!(st.score < c.threshold);
    }

    #[test]
    fn flipped_event_records_original() {
        let w = build_default_world();
        let q = solve(&w).unwrap();
        let c = GuardConfig { p0: 1.0, p_max: 1.0, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = ev(Coord::new(0, 0), Action::North, Some(Sign::Positive));
        let start = UserScoreState { score: -3.0, ..c.initial_state() };
        let (out, st) = guard_pipeline(start, bad, &w, &q, &mut rng, &c).unwrap();
        assert_eq!(out.sign, Some(Sign::Negative));
        assert_eq!(out.original_sign, Some(Sign::Positive));
        assert_eq!(out.source, FeedbackSource::GuardFlipped);
        assert_eq!(st.flips_total, 1);
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(GuardConfig::default().validate().is_ok());
        assert!(GuardConfig { threshold: 0.0, ..cfg() }.validate().is_err());
        assert!(GuardConfig { p0: 0.0, ..cfg() }.validate().is_err());
        assert!(GuardConfig { p0: 0.95, ..cfg() }.validate().is_err());
        assert!(GuardConfig { penalty: 0.0, ..cfg() }.validate().is_err());
        assert!(GuardConfig { escalation: -0.1, ..cfg() }.validate().is_err());
    }
}

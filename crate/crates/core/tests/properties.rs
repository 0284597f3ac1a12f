use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tamer_lab::analytics::{logs_to_string, paired_t, parse_logs, FeedbackLog, Tail};
use tamer_lab::gridworld::{Action, Coord};
use tamer_lab::guard::{maybe_flip, score_update, GuardConfig, UserScoreState};
use tamer_lab::harness::{read_records, records_to_csv, run_experiment, EpisodeRecord, ExperimentConfig, Variant};
use tamer_lab::oracles::OracleConfig;
use tamer_lab::tamer::{
    select_action, update, FeedbackEvent, FeedbackSource, RewardModel, Sign, TamerConfig, TieBreak,
};

fn coord() -> impl Strategy<Value = Coord> {
    (0usize..4, 0usize..4).prop_map(|(c, r)| Coord::new(c, r))
}

fn action() -> impl Strategy<Value = Action> {
    prop::sample::select(Action::ALL.to_vec())
}

fn sign() -> impl Strategy<Value = Sign> {
    prop_oneof![Just(Sign::Positive), Just(Sign::Negative)]
}

fn event(state: Coord, action: Action, sign: Option<Sign>) -> FeedbackEvent {
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

fn guard_cfg() -> impl Strategy<Value = GuardConfig> {
    (-5.0f64..-0.1, 0.1f64..3.0, 0.0f64..3.0, 0.01f64..1.0, 0.0f64..0.5, 0.0f64..1.0).prop_map(
        |(threshold, penalty, credit, p0, escalation, headroom)| GuardConfig {
            threshold,
            penalty,
            credit,
            score_cap: 0.0,
            p0,
            escalation,
            p_max: p0 + (1.0 - p0) * headroom,
            seed: 0,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn estimates_stay_in_unit_interval(
        alpha in 0.001f64..=1.0,
        steps in prop::collection::vec((coord(), action(), prop::option::of(sign())), 0..200),
    ) {
        let cfg = TamerConfig { learning_rate: alpha, ..Default::default() };
        let mut m = RewardModel::new();
        for (s, a, g) in steps {
            m = update(m, &event(s, a, g), &cfg);
        }
        for (_, _, v) in m.entries() {
            prop_assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn update_touches_only_its_pair(
        seed_steps in prop::collection::vec((coord(), action(), sign()), 0..40),
        s in coord(), a in action(), g in sign(),
    ) {
        let cfg = TamerConfig::default();
        let mut m = RewardModel::new();
        for (s, a, g) in seed_steps {
            m = update(m, &event(s, a, Some(g)), &cfg);
        }
        let next = update(m.clone(), &event(s, a, Some(g)), &cfg);
        for c in (0..4).flat_map(|col| (0..4).map(move |row| Coord::new(col, row))) {
            for b in Action::ALL {
                if (c, b) != (s, a) {
                    prop_assert_eq!(next.get(c, b).to_bits(), m.get(c, b).to_bits());
                }
            }
        }
        let want = m.get(s, a) + 0.3 * (g.value() - m.get(s, a));
        prop_assert_eq!(next.get(s, a).to_bits(), want.to_bits());
    }

    #[test]
    fn silent_events_change_nothing(s in coord(), a in action()) {
        let m = update(RewardModel::new(), &event(s, a, Some(Sign::Positive)), &TamerConfig::default());
        let after = update(m.clone(), &event(s, a, None), &TamerConfig::default());
        prop_assert!(after.bitwise_eq(&m));
    }

    #[test]
    fn greedy_picks_first_maximum(values in prop::array::uniform4(prop_oneof![Just(0.0), Just(0.3), -1.0f64..1.0]), s in coord()) {
        let mut m = RewardModel::new();
        for a in Action::ALL {
            m.set(s, a, values[a.index()]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let picked = select_action(&m, s, &TamerConfig::default(), &mut rng);
        let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(values[picked.index()], best);
        prop_assert!(Action::ALL.iter().take(picked.index()).all(|a| values[a.index()] < best));

        let uniform = TamerConfig { tie_break: TieBreak::SeededUniform, ..Default::default() };
        let picked = select_action(&m, s, &uniform, &mut rng);
        prop_assert_eq!(values[picked.index()], best);
    }

    #[test]
    fn guard_only_turns_approval_into_disapproval(
        cfg in guard_cfg(),
        stream in prop::collection::vec((sign(), any::<bool>()), 1..200),
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut st = cfg.initial_state();
        for (g, optimal) in stream {
            st = score_update(st, g, optimal, &cfg);
            prop_assert!(st.score <= cfg.score_cap);
            let (out, next, flipped) = maybe_flip(st, g, &mut rng, &cfg);
            prop_assert_eq!(flipped, out != g);
            if flipped {
                prop_assert_eq!((g, out), (Sign::Positive, Sign::Negative));
            }
            prop_assert!(next.p >= cfg.p0 && next.p <= cfg.p_max);
            st = next;
        }
    }

    #[test]
    fn score_after_k_bad_approvals(cfg in guard_cfg(), k in 0usize..50) {
        let mut st = UserScoreState { score: 0.0, ..cfg.initial_state() };
        for _ in 0..k {
            st = score_update(st, Sign::Positive, false, &cfg);
        }
        let want = -(k as f64) * cfg.penalty;
        prop_assert!((st.score - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn escalation_closed_form(cfg in guard_cfg(), k in 0usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = UserScoreState { score: cfg.threshold - 1.0, ..cfg.initial_state() };
        for _ in 0..k {
            st = maybe_flip(st, Sign::Negative, &mut rng, &cfg).1;
        }
        let want = cfg.p_max.min(cfg.p0 * (1.0 + cfg.escalation).powi(k as i32));
        prop_assert!((st.p - want).abs() < 1e-12, "{} vs {}", st.p, want);
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec(
        (any::<bool>(), 0u64..1000, 1usize..20, -40i32..=14, 1usize..31, 0usize..31, 0usize..31, 0usize..31, prop::option::of(-50.0f64..0.0)),
        0..30,
    )) {
        let records: Vec<EpisodeRecord> = rows
            .into_iter()
            .map(|(stoch, seed, episode, ret, steps, pos, neg, flips, score)| EpisodeRecord {
                variant: if stoch { Variant::Stochastic } else { Variant::Baseline },
                seed,
                episode,
                total_return: ret as f64,
                steps,
                positive_count: pos,
                negative_count: neg,
                flips,
                score,
            })
            .collect();
        let text = records_to_csv(&records).unwrap();
        prop_assert_eq!(read_records(text.as_bytes()).unwrap(), records);
    }

    #[test]
    fn model_json_round_trip(steps in prop::collection::vec((coord(), action(), sign()), 0..100)) {
        let mut m = RewardModel::new();
        for (s, a, g) in steps {
            m = update(m, &event(s, a, Some(g)), &TamerConfig::default());
        }
        let back: RewardModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        prop_assert!(back.bitwise_eq(&m));
    }

    #[test]
    fn log_round_trip(signs in prop::collection::vec((coord(), action(), sign()), 1..50)) {
        let mut log = FeedbackLog::new("s1", "alice", "stochastic");
        for (i, (s, a, g)) in signs.into_iter().enumerate() {
            log.events.push(FeedbackEvent { step: i + 1, wall_time: Some(i as u64), ..event(s, a, Some(g)) });
        }
        let text = logs_to_string(std::slice::from_ref(&log)).unwrap();
        let back = parse_logs(text.as_bytes(), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, vec![log]);
    }
}

fn well_conditioned(x: &[f64], y: &[f64]) -> bool {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let spread = d.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    spread > 1e-3 * (1.0 + mean.abs())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-7 * (1.0 + a.abs().max(b.abs()))
}

fn pairs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..25).prop_flat_map(|n| {
        (prop::collection::vec(-100.0f64..100.0, n), prop::collection::vec(-100.0f64..100.0, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn paired_t_antisymmetric((x, y) in pairs()) {
        prop_assume!(well_conditioned(&x, &y));
        let a = paired_t(&x, &y, Tail::TwoTailed).unwrap();
        let b = paired_t(&y, &x, Tail::TwoTailed).unwrap();
        prop_assert_eq!(a.t, -b.t);
        prop_assert_eq!(a.p, b.p);
        let one = paired_t(&x, &y, Tail::OneTailedGreater).unwrap();
        let other = paired_t(&y, &x, Tail::OneTailedGreater).unwrap();
        prop_assert!((one.p + other.p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn paired_t_shift_invariant((x, y) in pairs(), c in -1000.0f64..1000.0) {
        prop_assume!(well_conditioned(&x, &y));
        let a = paired_t(&x, &y, Tail::TwoTailed).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v + c).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + c).collect();
        let b = paired_t(&xs, &ys, Tail::TwoTailed).unwrap();
        prop_assert!(close(a.t, b.t), "{} vs {}", a.t, b.t);
        prop_assert!(close(a.p, b.p));
    }

    #[test]
    fn paired_t_scale_invariant((x, y) in pairs(), k in 0.001f64..1000.0) {
        prop_assume!(well_conditioned(&x, &y));
        let a = paired_t(&x, &y, Tail::TwoTailed).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v * k).collect();
        let ys: Vec<f64> = y.iter().map(|v| v * k).collect();
        let b = paired_t(&xs, &ys, Tail::TwoTailed).unwrap();
        prop_assert!(close(a.t, b.t), "{} vs {}", a.t, b.t);
        prop_assert!(close(a.p, b.p));
    }
}

#[test]
fn seeds_do_not_interact() {
    let mut alone = ExperimentConfig::new(OracleConfig::biased(0.5));
    alone.seeds = vec![5];
    alone.episodes = 4;
    let mut crowd = alone.clone();
    crowd.seeds = vec![9, 5, 1, 2];
    let a = run_experiment(&alone).unwrap();
    let b: Vec<_> = run_experiment(&crowd).unwrap().into_iter().filter(|r| r.seed == 5).collect();
    assert_eq!(a, b);
}

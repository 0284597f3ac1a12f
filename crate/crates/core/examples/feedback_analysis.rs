//! Writes a small set of session logs, reads them back and compares the
//! positive/negative ratio between conditions.

use tamer_lab::analytics::{analyze_by_condition, load_logs, pos_neg_ratio, save_logs, FeedbackLog, Tail};
use tamer_lab::gridworld::{Action, Coord};
use tamer_lab::tamer::{FeedbackEvent, FeedbackSource, Sign};

fn session(participant: &str, condition: &str, signs: &str) -> FeedbackLog {
    let mut log = FeedbackLog::new(format!("{participant}-{condition}"), participant, condition);
    for (i, c) in signs.chars().enumerate() {
        log.events.push(FeedbackEvent {
            episode: 1 + i / 10,
            step: 1 + i % 10,
            state: Coord::new(i % 4, (i / 4) % 4),
            action: Action::ALL[i % 4],
            sign: Sign::from_token(&c.to_string()),
            source: FeedbackSource::Human,
            original_sign: None,
            wall_time: Some(1_700_000_000_000 + 800 * i as u64),
        });
    }
    log
}

fn main() -> tamer_lab::Result<()> {
    let logs = vec![
        session("p1", "stochastic", "ppnppnpppn"),
        session("p1", "baseline", "ppnnpnpnnp"),
        session("p2", "stochastic", "pppnppppnp"),
        session("p2", "baseline", "pnpnppnnpp"),
        session("p3", "stochastic", "ppppnpppnn"),
        session("p3", "baseline", "pnnnpnppnp"),
        session("p4", "stochastic", "pppp"),
        session("p4", "baseline", "ppnp"),
    ];
    let dir = std::env::temp_dir().join("tamer-lab-logs");
    std::fs::create_dir_all(&dir)?;
    save_logs(&logs, dir.join("study.jsonl"))?;

    let loaded = load_logs(&dir)?;
    for log in &loaded {
        println!("{:<14} {:?}", log.session_id, pos_neg_ratio(log)?);
    }
    println!();
    println!("{}", analyze_by_condition(&loaded, Tail::OneTailedGreater, Some(("stochastic", "baseline")))?);
    Ok(())
}

//! Baseline TAMER taught by the exact critic, then the greedy route it learned.

use tamer_lab::gridworld::{build_default_world, render};
use tamer_lab::oracles::{solve, OracleConfig};
use tamer_lab::seeding::{stream_rng, Stream};
use tamer_lab::tamer::{run_episode, RewardModel, Silent, TamerConfig};

fn main() -> tamer_lab::Result<()> {
    let world = build_default_world();
    let q = std::sync::Arc::new(solve(&world)?);
    let cfg = TamerConfig::default();
    let mut critic = OracleConfig::optimal().provider(&world, q, 0);
    let mut rng = stream_rng(0, 0, Stream::Agent);

    let mut model = RewardModel::new();
    for episode in 1..=6 {
        let (out, next) = run_episode(&world, model, &cfg, critic.as_mut(), None, &mut rng, episode)?;
        model = next;
        println!(
            "episode {episode}: return {:>4} in {:>2} steps, {} approvals / {} disapprovals, {:?}",
            out.total_return,
            out.steps,
            out.positive_count(),
            out.negative_count(),
            out.terminal_cause
        );
    }
    println!("{} state-action estimates learned", model.len());

    // No more feedback: the agent just follows its estimates.
    let (out, _) = run_episode(&world, model, &cfg, &mut Silent, None, &mut rng, 7)?;
    for t in &out.trajectory {
        println!("{} {:?}", t.from, t.action);
    }
    println!("{}", render(&world, out.trajectory.last().map(|t| t.to)));
    println!("greedy return {}", out.total_return);
    Ok(())
}

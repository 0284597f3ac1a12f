//! A critic that approves half the time regardless of the move, with and
//! without the guard.

use std::sync::Arc;

use tamer_lab::gridworld::build_default_world;
use tamer_lab::guard::{Guard, GuardConfig};
use tamer_lab::oracles::{solve, OracleConfig};
use tamer_lab::seeding::{stream_rng, Stream};
use tamer_lab::tamer::{run_episode, RewardModel, TamerConfig};

fn main() -> tamer_lab::Result<()> {
    let world = build_default_world();
    let q = Arc::new(solve(&world)?);
    let cfg = TamerConfig::default();
    let critic = OracleConfig::biased(0.5);
    let seed = 4;

    for guarded in [false, true] {
        let mut provider = critic.provider(&world, q.clone(), seed);
        let mut guard = guarded.then(|| Guard::new(GuardConfig::default(), world.clone(), q.clone(), seed));
        let mut rng = stream_rng(seed, 0, Stream::Agent);
        let mut model = RewardModel::new();

        println!("{}", if guarded { "stochastic TAMER" } else { "baseline TAMER" });
        for episode in 1..=10 {
            let (out, next) = run_episode(&world, model, &cfg, provider.as_mut(), guard.as_mut(), &mut rng, episode)?;
            model = next;
            let score = out.final_score.map(|s| format!(", score {s:+.1}")).unwrap_or_default();
            println!(
                "  episode {episode:>2}: return {:>4}  steps {:>2}  +{} -{}  flips {}{score}",
                out.total_return,
                out.steps,
                out.positive_count(),
                out.negative_count(),
                out.flips
            );
        }
        if let Some(g) = &guard {
            println!("  total flips {}, final flip probability {:.3}", g.state().flips_total, g.state().p);
        }
    }
    Ok(())
}

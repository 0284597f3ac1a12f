//! Walk the default world by hand and print what each move returns.

use tamer_lab::gridworld::{build_default_world, render, Action};

fn main() -> tamer_lab::Result<()> {
    let world = build_default_world();
    let (lo, hi) = world.return_bounds();
    println!("{}x{} world, returns in [{lo}, {hi}], shortest safe path {} moves", world.width(), world.height(), world.shortest_path_len(world.start()).unwrap());
    println!("{}", render(&world, Some(world.start())));

    let route = [Action::South, Action::South, Action::South, Action::East, Action::East, Action::East];
    let mut pos = world.start();
    let mut total = 0.0;
    for action in route {
        let t = world.step(pos, action)?;
        total += t.reward;
        println!("{action:?}: {} -> {} reward {:+} ({:?})", t.from, t.to, t.reward, t.terminal_cause);
        pos = t.to;
        if t.terminal {
            break;
        }
    }
    println!("{}", render(&world, Some(pos)));
    println!("return {total}");

    // Bumping a wall costs a step and leaves the agent in place.
    let bump = world.step(world.start(), Action::North)?;
    assert_eq!(bump.to, world.start());
    Ok(())
}

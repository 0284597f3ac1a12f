use tamer_lab::gridworld::{build_default_world, CellKind, Coord};
use tamer_lab::oracles::{optimal_actions, value_iteration, SolverParams};

fn main() -> tamer_lab::Result<()> {
    let world = build_default_world();
    let q = value_iteration(&world, SolverParams::default())?;
    println!("converged in {} sweeps, residual {:.1e}\n", q.iterations, q.converged_residual);

    for row in 0..world.height() {
        let mut values = String::new();
        let mut arrows = String::new();
        for col in 0..world.width() {
            let c = Coord::new(col, row);
            match world.cell(c) {
                CellKind::Empty => {
                    values.push_str(&format!("{:>8.2}", q.value(c)));
                    let best: String = optimal_actions(&world, &q, c)?
                        .iter()
                        .map(|a| format!("{a:?}").chars().next().unwrap())
                        .collect();
                    arrows.push_str(&format!("{best:>5}"));
                }
                kind => {
                    let tag = format!("{kind:?}").chars().next().unwrap();
                    values.push_str(&format!("{tag:>8}"));
                    arrows.push_str(&format!("{tag:>5}"));
                }
            }
        }
        println!("{values}    {arrows}");
    }
    Ok(())
}

//! Deterministic Wumpus-World gridworld.
//!
//! Coordinates are `(col, row)` with row 0 at the top. Hole and Monster cells
//! are both terminal hazards with the same penalty; they differ only in how a
//! client draws them.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A cell coordinate, serialized as `[col, row]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Coord {
    pub col: usize,
    pub row: usize,
}

impl Coord {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

impl From<[usize; 2]> for Coord {
    fn from([col, row]: [usize; 2]) -> Self {
        Self { col, row }
    }
}

impl From<Coord> for [usize; 2] {
    fn from(c: Coord) -> Self {
        [c.col, c.row]
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Empty,
    Hole,
    Monster,
    Treasure,
}

impl CellKind {
    pub fn is_hazard(self) -> bool {
        matches!(self, CellKind::Hole | CellKind::Monster)
    }

    pub fn is_terminal(self) -> bool {
        self != CellKind::Empty
    }
}

/// Cardinal moves. The declaration order is the canonical tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    North,
    South,
    East,
    West,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::North, Action::South, Action::East, Action::West];

    pub fn index(self) -> usize {
        self as usize
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::North => (0, -1),
            Action::South => (0, 1),
            Action::East => (1, 0),
            Action::West => (-1, 0),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalCause {
    Treasure,
    Hazard,
    StepCap,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    #[serde(rename = "step")]
    pub step_penalty: f64,
    #[serde(rename = "treasure")]
    pub treasure_bonus: f64,
    #[serde(rename = "hazard")]
    pub hazard_penalty: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            step_penalty: -1.0,
            treasure_bonus: 20.0,
            hazard_penalty: -10.0,
        }
    }
}

impl RewardConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.treasure_bonus > 0.0
            && self.step_penalty <= 0.0
            && self.hazard_penalty < 0.0
            && [self.step_penalty, self.treasure_bonus, self.hazard_penalty]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidWorld(format!(
                "rewards must satisfy treasure > 0, step <= 0, hazard < 0; got {self:?}"
            )))
        }
    }

    fn cell_reward(&self, kind: CellKind) -> f64 {
        match kind {
            CellKind::Empty => 0.0,
            CellKind::Treasure => self.treasure_bonus,
            CellKind::Hole | CellKind::Monster => self.hazard_penalty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub from: Coord,
    pub action: Action,
    pub to: Coord,
    pub reward: f64,
    pub terminal: bool,
    pub terminal_cause: TerminalCause,
}

/// On-disk world definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub width: usize,
    pub height: usize,
    pub start: Coord,
    pub treasure: Coord,
    #[serde(default)]
    pub holes: Vec<Coord>,
    #[serde(default)]
    pub monsters: Vec<Coord>,
    #[serde(default)]
    pub rewards: RewardConfig,
    pub max_steps: usize,
}

/// A validated gridworld. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WorldFile", into = "WorldFile")]
pub struct GridWorld {
    width: usize,
    height: usize,
    start: Coord,
    cells: Vec<CellKind>,
    rewards: RewardConfig,
    max_steps: usize,
}

impl TryFrom<WorldFile> for GridWorld {
    type Error = Error;

    fn try_from(wf: WorldFile) -> Result<Self> {
        GridWorld::new(wf)
    }
}

impl From<GridWorld> for WorldFile {
    fn from(world: GridWorld) -> Self {
        world.to_file()
    }
}

impl GridWorld {
    pub fn new(wf: WorldFile) -> Result<Self> {
        if wf.width == 0 || wf.height == 0 {
            return Err(Error::InvalidWorld("grid must be at least 1x1".into()));
        }
        if wf.max_steps == 0 {
            return Err(Error::InvalidWorld("max_steps must be positive".into()));
        }
        wf.rewards.validate()?;

        let mut world = GridWorld {
            width: wf.width,
            height: wf.height,
            start: wf.start,
            cells: vec![CellKind::Empty; wf.width * wf.height],
            rewards: wf.rewards,
            max_steps: wf.max_steps,
        };

        let placements = std::iter::once((wf.treasure, CellKind::Treasure))
            .chain(wf.holes.iter().map(|&c| (c, CellKind::Hole)))
            .chain(wf.monsters.iter().map(|&c| (c, CellKind::Monster)));
        for (coord, kind) in placements {
            if !world.in_bounds(coord) {
                return Err(Error::InvalidWorld(format!("{kind:?} at {coord} is out of bounds")));
            }
            let idx = world.index(coord);
            if world.cells[idx] != CellKind::Empty {
                return Err(Error::InvalidWorld(format!("cell {coord} assigned twice")));
            }
            world.cells[idx] = kind;
        }

        if !world.in_bounds(wf.start) {
            return Err(Error::InvalidWorld(format!("start {} is out of bounds", wf.start)));
        }
        if world.cell(wf.start) != CellKind::Empty {
            return Err(Error::InvalidWorld(format!("start {} is not an empty cell", wf.start)));
        }
        if world.shortest_path_len(wf.start).is_none() {
            return Err(Error::InvalidWorld(
                "no path of empty cells connects start to treasure".into(),
            ));
        }
        Ok(world)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wf: WorldFile = serde_json::from_str(text)?;
        Self::new(wf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> WorldFile {
        let coords_of = |kind: CellKind| -> Vec<Coord> {
            self.coords().filter(|&c| self.cell(c) == kind).collect()
        };
        WorldFile {
            width: self.width,
            height: self.height,
            start: self.start,
            treasure: self.treasure(),
            holes: coords_of(CellKind::Hole),
            monsters: coords_of(CellKind::Monster),
            rewards: self.rewards,
            max_steps: self.max_steps,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Coord {
        self.start
    }

    pub fn rewards(&self) -> &RewardConfig {
        &self.rewards
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn treasure(&self) -> Coord {
        self.coords()
            .find(|&c| self.cell(c) == CellKind::Treasure)
            .expect("validated world has a treasure")
    }

    pub fn in_bounds(&self, c: Coord) -> bool {
        c.col < self.width && c.row < self.height
    }

    fn index(&self, c: Coord) -> usize {
        c.row * self.width + c.col
    }

    /// Panics if `c` is out of bounds.
    pub fn cell(&self, c: Coord) -> CellKind {
        assert!(self.in_bounds(c), "{c} out of bounds");
        self.cells[self.index(c)]
    }

    pub fn is_terminal(&self, c: Coord) -> bool {
        self.cell(c).is_terminal()
    }

    /// All coordinates in row-major order.
    pub fn coords(&self) -> impl Iterator<Item = Coord> + '_ {
        (0..self.height).flat_map(move |row| (0..self.width).map(move |col| Coord::new(col, row)))
    }

    pub fn non_terminal_cells(&self) -> impl Iterator<Item = Coord> + '_ {
        self.coords().filter(|&c| !self.is_terminal(c))
    }

    /// Target of a move, with off-grid moves leaving the agent in place.
    pub fn neighbor(&self, pos: Coord, action: Action) -> Coord {
        let (dc, dr) = action.delta();
        let col = pos.col as isize + dc;
        let row = pos.row as isize + dr;
        if col < 0 || row < 0 || col as usize >= self.width || row as usize >= self.height {
            pos
        } else {
            Coord::new(col as usize, row as usize)
        }
    }

    /// Applies one move. The step cap is enforced by the episode loop, not here.
    pub fn step(&self, pos: Coord, action: Action) -> Result<Transition> {
        if !self.in_bounds(pos) {
            return Err(Error::Contract(format!("position {pos} is out of bounds")));
        }
        if self.is_terminal(pos) {
            return Err(Error::Contract(format!("cannot step from terminal cell {pos}")));
        }
        let to = self.neighbor(pos, action);
        let kind = self.cell(to);
        let terminal_cause = match kind {
            CellKind::Treasure => TerminalCause::Treasure,
            CellKind::Hole | CellKind::Monster => TerminalCause::Hazard,
            CellKind::Empty => TerminalCause::None,
        };
        Ok(Transition {
            from: pos,
            action,
            to,
            reward: self.rewards.step_penalty + self.rewards.cell_reward(kind),
            terminal: terminal_cause != TerminalCause::None,
            terminal_cause,
        })
    }

    /// Breadth-first search over empty cells; the number of moves from `from`
    /// to the treasure, or `None` if hazards cut it off.
    pub fn shortest_path_len(&self, from: Coord) -> Option<usize> {
        if !self.in_bounds(from) || self.cell(from).is_hazard() {
            return None;
        }
        let mut dist = vec![usize::MAX; self.cells.len()];
        let mut queue = VecDeque::from([from]);
        dist[self.index(from)] = 0;
        while let Some(c) = queue.pop_front() {
            let d = dist[self.index(c)];
            if self.cell(c) == CellKind::Treasure {
                return Some(d);
            }
            for a in Action::ALL {
                let n = self.neighbor(c, a);
                let idx = self.index(n);
                if dist[idx] == usize::MAX && !self.cell(n).is_hazard() {
                    dist[idx] = d + 1;
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Best achievable episode return from the start cell.
    pub fn optimal_return(&self) -> f64 {
        let len = self.shortest_path_len(self.start).expect("validated world is solvable");
        self.rewards.treasure_bonus + self.rewards.step_penalty * len as f64
    }

    /// Inclusive `(min, max)` bounds on any episode return.
    pub fn return_bounds(&self) -> (f64, f64) {
        let lo = self.max_steps as f64 * self.rewards.step_penalty + self.rewards.hazard_penalty;
        (lo, self.optimal_return())
    }
}

impl Default for GridWorld {
    fn default() -> Self {
        build_default_world()
    }
}

/// The bundled `worlds/default.json`.
pub const DEFAULT_WORLD_JSON: &str = include_str!("../../../worlds/default.json");

/// Canonical 4x4 world: start top-left, treasure bottom-right, two holes and
/// one monster.
pub fn build_default_world() -> GridWorld {
    GridWorld::new(WorldFile {
        width: 4,
        height: 4,
        start: Coord::new(0, 0),
        treasure: Coord::new(3, 3),
        holes: vec![Coord::new(1, 1), Coord::new(3, 1)],
        monsters: vec![Coord::new(1, 2)],
        rewards: RewardConfig::default(),
        max_steps: 30,
    })
    .expect("default world is valid")
}

/// ASCII picture of the grid, optionally with the agent drawn at `agent`.
pub fn render(world: &GridWorld, agent: Option<Coord>) -> String {
    let mut out = String::new();
    for row in 0..world.height() {
        for col in 0..world.width() {
            let c = Coord::new(col, row);
            let glyph = if Some(c) == agent {
                'A'
            } else {
                match world.cell(c) {
                    CellKind::Empty => '.',
                    CellKind::Hole => 'O',
                    CellKind::Monster => 'M',
                    CellKind::Treasure => 'T',
                }
            };
            out.push(glyph);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(col: usize, row: usize) -> Coord {
        Coord::new(col, row)
    }

    #[test]
    fn default_layout() {
        let w = build_default_world();
        assert_eq!(w.start(), c(0, 0));
        assert_eq!(w.treasure(), c(3, 3));
        assert_eq!(w.cell(c(1, 1)), CellKind::Hole);
        assert_eq!(w.cell(c(3, 1)), CellKind::Hole);
        assert_eq!(w.cell(c(1, 2)), CellKind::Monster);
        assert_eq!(w.max_steps(), 30);
        assert_eq!(w, build_default_world());
        assert_eq!(w.non_terminal_cells().count(), 12);
    }

    #[test]
    fn bundled_json_matches_constructor() {
        assert_eq!(GridWorld::from_json(DEFAULT_WORLD_JSON).unwrap(), build_default_world());
    }

    #[test]
    fn step_examples() {
        let w = build_default_world();
        let t = w.step(c(0, 0), Action::East).unwrap();
        assert_eq!((t.to, t.reward, t.terminal), (c(1, 0), -1.0, false));

        let t = w.step(c(0, 0), Action::North).unwrap();
        assert_eq!((t.to, t.reward, t.terminal), (c(0, 0), -1.0, false));

        let t = w.step(c(2, 3), Action::East).unwrap();
        assert_eq!((t.to, t.reward, t.terminal_cause), (c(3, 3), 19.0, TerminalCause::Treasure));
        assert!(t.terminal);

        let t = w.step(c(1, 0), Action::South).unwrap();
        assert_eq!((t.to, t.reward, t.terminal_cause), (c(1, 1), -11.0, TerminalCause::Hazard));
    }

    #[test]
    fn step_contract_violations() {
        let w = build_default_world();
        assert!(matches!(w.step(c(4, 0), Action::East), Err(Error::Contract(_))));
        assert!(matches!(w.step(c(1, 1), Action::East), Err(Error::Contract(_))));
        assert!(matches!(w.step(c(3, 3), Action::West), Err(Error::Contract(_))));
    }

    #[test]
    fn wall_closure() {
        let w = build_default_world();
        for pos in w.coords() {
            for a in Action::ALL {
                assert!(w.in_bounds(w.neighbor(pos, a)));
            }
        }
    }

    #[test]
    fn shortest_path_and_bounds() {
        let w = build_default_world();
        // Manhattan distance is reachable along either corridor.
        assert_eq!(w.shortest_path_len(w.start()), Some(6));
        assert_eq!(w.optimal_return(), 14.0);
        assert_eq!(w.return_bounds(), (-40.0, 14.0));
    }

    #[test]
    fn rejects_invalid_worlds() {
        let mut wf = build_default_world().to_file();
        wf.holes.push(c(9, 9));
        assert!(GridWorld::new(wf).is_err());

        let mut wf = build_default_world().to_file();
        wf.start = c(1, 1);
        assert!(GridWorld::new(wf).is_err());

        // Walls of hazards around the treasure.
        let mut wf = build_default_world().to_file();
        wf.holes.extend([c(2, 3), c(3, 2)]);
        assert!(matches!(GridWorld::new(wf), Err(Error::InvalidWorld(_))));

        let mut wf = build_default_world().to_file();
        wf.rewards.treasure_bonus = 0.0;
        assert!(GridWorld::new(wf).is_err());

        let mut wf = build_default_world().to_file();
        wf.monsters.push(c(3, 3));
        assert!(GridWorld::new(wf).is_err());
    }

    #[test]
    fn render_marks_agent() {
        let w = build_default_world();
        assert_eq!(render(&w, Some(c(0, 0))), "A...\n.O.O\n.M..\n...T\n");
    }
}

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::{Env, EnvError, GridIndex, StepOutcome};
use crate::logic::Formula;
use crate::srm::Domain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    /// Action order: up, down, left, right.
    pub const ALL: [Direction; 4] = [
        Direction::Up,
        Direction::Down,
        Direction::Left,
        Direction::Right,
    ];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::Up => (0, 1),
            Direction::Down => (0, -1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    fn opposite(self) -> Direction {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }

    fn from_side(side: &str) -> Option<Direction> {
        match side {
            "north" => Some(Direction::Up),
            "south" => Some(Direction::Down),
            "west" => Some(Direction::Left),
            "east" => Some(Direction::Right),
            _ => None,
        }
    }
}

pub type Cell = (i64, i64);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutFile {
    width: i64,
    height: i64,
    start: [i64; 2],
    labels: BTreeMap<String, [i64; 2]>,
    #[serde(default)]
    rooms: Vec<RoomFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoomFile {
    x: [i64; 2],
    y: [i64; 2],
    doors: Vec<DoorFile>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DoorFile {
    cell: [i64; 2],
    side: String,
}

/// Grid, labeled cells and interior walls.
#[derive(Debug, Clone, PartialEq)]
pub struct OfficeLayout {
    pub width: i64,
    pub height: i64,
    pub start: Cell,
    pub labels: BTreeMap<String, Cell>,
    /// Blocked moves `(cell, direction)`; always stored in both directions.
    walls: HashSet<(Cell, Direction)>,
}

impl OfficeLayout {
    pub fn builtin() -> OfficeLayout {
        OfficeLayout::from_toml(include_str!("../../tasks/office.toml"))
            .expect("built-in layout parses")
    }

    pub fn from_toml(text: &str) -> Result<OfficeLayout, EnvError> {
        let file: LayoutFile = toml::from_str(text).map_err(|e| EnvError::Config(e.to_string()))?;
        let mut layout = OfficeLayout {
            width: file.width,
            height: file.height,
            start: (file.start[0], file.start[1]),
            labels: file
                .labels
                .into_iter()
                .map(|(k, v)| (k, (v[0], v[1])))
                .collect(),
            walls: HashSet::new(),
        };
        if layout.width <= 0 || layout.height <= 0 {
            return Err(EnvError::Config("empty grid".into()));
        }
        for cell in std::iter::once(&layout.start).chain(layout.labels.values()) {
            if !layout.in_bounds(*cell) {
                return Err(EnvError::Config(format!("cell {cell:?} outside the grid")));
            }
        }
        for room in &file.rooms {
            let mut doors = HashSet::new();
            for d in &room.doors {
                let dir = Direction::from_side(&d.side)
                    .ok_or_else(|| EnvError::Config(format!("bad door side '{}'", d.side)))?;
                doors.insert(((d.cell[0], d.cell[1]), dir));
            }
            for x in room.x[0]..=room.x[1] {
                for y in room.y[0]..=room.y[1] {
                    for dir in Direction::ALL {
                        let (dx, dy) = dir.delta();
                        let next = (x + dx, y + dy);
                        let inside = (room.x[0]..=room.x[1]).contains(&next.0)
                            && (room.y[0]..=room.y[1]).contains(&next.1);
                        if !inside && !doors.contains(&((x, y), dir)) {
                            layout.add_wall((x, y), dir);
                        }
                    }
                }
            }
        }
        Ok(layout)
    }

    fn add_wall(&mut self, cell: Cell, dir: Direction) {
        let (dx, dy) = dir.delta();
        self.walls.insert((cell, dir));
        self.walls
            .insert(((cell.0 + dx, cell.1 + dy), dir.opposite()));
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        (0..self.width).contains(&c.0) && (0..self.height).contains(&c.1)
    }

    pub fn blocked(&self, cell: Cell, dir: Direction) -> bool {
        let (dx, dy) = dir.delta();
        !self.in_bounds((cell.0 + dx, cell.1 + dy)) || self.walls.contains(&(cell, dir))
    }

    /// Deterministic unit move; blocked moves leave the cell unchanged.
    pub fn move_from(&self, cell: Cell, dir: Direction) -> Cell {
        if self.blocked(cell, dir) {
            cell
        } else {
            let (dx, dy) = dir.delta();
            (cell.0 + dx, cell.1 + dy)
        }
    }

    /// Unit box `[cx, cx+1) x [cy, cy+1)` around a labeled cell.
    pub fn region(&self, label: &str) -> Option<Formula> {
        let (cx, cy) = *self.labels.get(label)?;
        Some(Formula::half_open_box(&[
            ("x", cx as f64, cx as f64 + 1.0),
            ("y", cy as f64, cy as f64 + 1.0),
        ]))
    }
}

/// Office World navigation with actions up, down, left, right.
#[derive(Debug, Clone)]
pub struct OfficeWorld {
    layout: OfficeLayout,
    continuous: bool,
    noise: f64,
    rng: ChaCha8Rng,
    pos: (f64, f64),
    variables: Vec<String>,
}

impl OfficeWorld {
    /// Integer cells `{0..w-1} x {0..h-1}`.
    pub fn discrete(layout: OfficeLayout) -> OfficeWorld {
        OfficeWorld::build(layout, false, 0.0, 0)
    }

    /// Real positions in `[0, w) x [0, h)`, starting at the start-cell centre,
    /// moving 1.0 per step plus optional uniform noise in `[-noise, noise]`.
    pub fn continuous(layout: OfficeLayout, noise: f64, seed: u64) -> OfficeWorld {
        OfficeWorld::build(layout, true, noise, seed)
    }

    fn build(layout: OfficeLayout, continuous: bool, noise: f64, seed: u64) -> OfficeWorld {
        let mut w = OfficeWorld {
            layout,
            continuous,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pos: (0.0, 0.0),
            variables: vec!["x".into(), "y".into()],
        };
        w.reset();
        w
    }

    pub fn layout(&self) -> &OfficeLayout {
        &self.layout
    }

    pub fn position(&self) -> (f64, f64) {
        self.pos
    }

    fn cell_of(p: (f64, f64)) -> Cell {
        (p.0.floor() as i64, p.1.floor() as i64)
    }

    fn continuous_move(&mut self, dir: Direction) -> (f64, f64) {
        let (dx, dy) = dir.delta();
        let mut target = (self.pos.0 + dx as f64, self.pos.1 + dy as f64);
        if self.noise > 0.0 {
            target.0 += self.rng.gen_range(-self.noise..=self.noise);
            target.1 += self.rng.gen_range(-self.noise..=self.noise);
        }
        let (w, h) = (self.layout.width as f64, self.layout.height as f64);
        if !(0.0..w).contains(&target.0) || !(0.0..h).contains(&target.1) {
            return self.pos;
        }
        let from = Self::cell_of(self.pos);
        let to = Self::cell_of(target);
        let (cx, cy) = (to.0 - from.0, to.1 - from.1);
        if cx.abs() > 1 || cy.abs() > 1 {
            return self.pos;
        }
        let hx = match cx {
            1 => Some(Direction::Right),
            -1 => Some(Direction::Left),
            _ => None,
        };
        let vy = match cy {
            1 => Some(Direction::Up),
            -1 => Some(Direction::Down),
            _ => None,
        };
        // a diagonal cell change must be open along both orders of the two unit moves
        let path_open = |first: Option<Direction>, second: Option<Direction>| {
            let mut c = from;
            for d in [first, second].into_iter().flatten() {
                if self.layout.blocked(c, d) {
                    return false;
                }
                c = self.layout.move_from(c, d);
            }
            true
        };
        if path_open(hx, vy) && path_open(vy, hx) {
            target
        } else {
            self.pos
        }
    }
}

impl Env for OfficeWorld {
    fn name(&self) -> &str {
        if self.continuous {
            "office-continuous"
        } else {
            "office-discrete"
        }
    }

    fn variables(&self) -> &[String] {
        &self.variables
    }

    fn action_count(&self) -> usize {
        4
    }

    fn reset(&mut self) -> Vec<f64> {
        let (x, y) = self.layout.start;
        let off = if self.continuous { 0.5 } else { 0.0 };
        self.pos = (x as f64 + off, y as f64 + off);
        vec![self.pos.0, self.pos.1]
    }

    fn step(&mut self, action: usize) -> StepOutcome {
        let dir = Direction::ALL[action];
        self.pos = if self.continuous {
            self.continuous_move(dir)
        } else {
            let c = self.layout.move_from(Self::cell_of(self.pos), dir);
            (c.0 as f64, c.1 as f64)
        };
        StepOutcome {
            state: vec![self.pos.0, self.pos.1],
            signal: 0.0,
            terminal: false,
        }
    }

    fn domain(&self) -> Domain {
        let (w, h) = (self.layout.width as f64, self.layout.height as f64);
        if self.continuous {
            Domain::boxed(&[("x", 0.0, w), ("y", 0.0, h)], true)
        } else {
            Domain::boxed(&[("x", 0.0, w - 1.0), ("y", 0.0, h - 1.0)], false)
        }
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        let (w, h) = (self.layout.width as f64, self.layout.height as f64);
        if self.continuous {
            vec![(0.0, w), (0.0, h)]
        } else {
            vec![(0.0, w - 1.0), (0.0, h - 1.0)]
        }
    }

    fn grid(&self) -> Option<GridIndex> {
        (!self.continuous).then_some(GridIndex {
            width: self.layout.width as usize,
            height: self.layout.height as usize,
        })
    }

    fn fresh(&self, seed: u64) -> Box<dyn Env> {
        Box::new(OfficeWorld::build(
            self.layout.clone(),
            self.continuous,
            self.noise,
            seed,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_step_and_boundary_clipping() {
        let mut w = OfficeWorld::discrete(OfficeLayout::builtin());
        w.pos = (0.0, 0.0);
        assert_eq!(w.step(3).state, vec![1.0, 0.0]);
        w.pos = (0.0, 0.0);
        assert_eq!(w.step(2).state, vec![0.0, 0.0]);
        assert_eq!(w.step(1).state, vec![0.0, 0.0]);
    }

    #[test]
    fn state_space_is_15_by_11() {
        let mut w = OfficeWorld::discrete(OfficeLayout::builtin());
        assert_eq!(w.grid().map(|g| g.size()), Some(165));
        assert_eq!(w.reset(), vec![7.0, 0.0]);
    }

    #[test]
    fn inner_offices_have_single_doors() {
        let l = OfficeLayout::builtin();
        // left office: entered only from (5,5) moving left
        assert_eq!(l.move_from((5, 5), Direction::Left), (4, 5));
        assert_eq!(l.move_from((5, 4), Direction::Left), (5, 4));
        assert_eq!(l.move_from((3, 7), Direction::Down), (3, 7));
        assert_eq!(l.move_from((3, 4), Direction::Down), (3, 4));
        // right office: entered only from (9,5) moving right
        assert_eq!(l.move_from((9, 5), Direction::Right), (10, 5));
        assert_eq!(l.move_from((9, 6), Direction::Right), (9, 6));
        assert_eq!(l.move_from((13, 5), Direction::Left), (13, 5));
    }

    #[test]
    fn continuous_walls_match_discrete_walls() {
        let layout = OfficeLayout::builtin();
        let mut c = OfficeWorld::continuous(layout.clone(), 0.0, 0);
        let mut d = OfficeWorld::discrete(layout);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        c.reset();
        d.reset();
        for _ in 0..5000 {
            let a = rng.gen_range(0..4);
            let sc = c.step(a).state;
            let sd = d.step(a).state;
            assert_eq!(vec![sc[0] - 0.5, sc[1] - 0.5], sd);
        }
    }

    #[test]
    fn noisy_positions_stay_in_domain() {
        let mut c = OfficeWorld::continuous(OfficeLayout::builtin(), 0.3, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..5000 {
            let s = c.step(rng.gen_range(0..4)).state;
            assert!((0.0..15.0).contains(&s[0]) && (0.0..11.0).contains(&s[1]));
        }
    }
}

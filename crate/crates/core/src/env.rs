//! Deterministic GridWorld with an exact shortest-path teacher.
//!
//! Cells are `(x, y)` with `x` the column and `y` the row; `Up` decreases
//! `y`. Moves into a wall or off the grid leave the agent in place. The only
//! reward is `1.0` for entering the goal.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    /// Fixed order; also the teacher's tie-break order.
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Action> {
        Action::ALL
            .get(i)
            .copied()
            .ok_or(Error::IndexOutOfRange { index: i, len: 4 })
    }
}

/// Observation after a `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub reward: f64,
    /// Episode is over: goal reached or step cap hit.
    pub terminal: bool,
    /// Goal reached; the only true MDP terminal.
    pub reached_goal: bool,
}

pub const DEFAULT_MAX_STEPS: usize = 100;

#[derive(Debug, Clone)]
pub struct GridWorld {
    width: usize,
    height: usize,
    walls: Vec<bool>,
    start: Cell,
    goal: Cell,
    max_steps: usize,
    /// BFS distance to the goal for every cell; `None` when unreachable.
    distance: Vec<Option<usize>>,
    pos: Cell,
    steps: usize,
    done: bool,
}

impl GridWorld {
    pub fn new(
        width: usize,
        height: usize,
        walls: Vec<bool>,
        start: Cell,
        goal: Cell,
        max_steps: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidMap("empty grid".into()));
        }
        if walls.len() != width * height {
            return Err(Error::InvalidMap(format!(
                "wall mask has {} cells, grid has {}",
                walls.len(),
                width * height
            )));
        }
        if max_steps == 0 {
            return Err(Error::InvalidMap("max_steps must be positive".into()));
        }
        for (name, c) in [("start", start), ("goal", goal)] {
            if c.0 >= width || c.1 >= height {
                return Err(Error::InvalidMap(format!("{name} {c:?} outside grid")));
            }
            if walls[c.1 * width + c.0] {
                return Err(Error::InvalidMap(format!("{name} {c:?} is a wall")));
            }
        }
        if start == goal {
            return Err(Error::InvalidMap("start equals goal".into()));
        }
        let mut env = Self {
            width,
            height,
            walls,
            start,
            goal,
            max_steps,
            distance: Vec::new(),
            pos: start,
            steps: 0,
            done: false,
        };
        env.distance = env.bfs_from_goal();
        if env.distance_to_goal(start).is_none() {
            return Err(Error::InvalidMap("goal unreachable from start".into()));
        }
        Ok(env)
    }

    /// Open grid, start top-left, goal bottom-right.
    pub fn open(width: usize, height: usize, max_steps: usize) -> Result<Self> {
        Self::new(
            width,
            height,
            vec![false; width * height],
            (0, 0),
            (width - 1, height - 1),
            max_steps,
        )
    }

    /// Four rooms split by a wall cross with two doorways per wall.
    pub fn four_rooms(width: usize, height: usize, max_steps: usize) -> Result<Self> {
        if width < 5 || height < 5 {
            return Err(Error::InvalidMap("four-rooms needs at least 5x5".into()));
        }
        let (mx, my) = (width / 2, height / 2);
        let mut walls = vec![false; width * height];
        for y in 0..height {
            walls[y * width + mx] = true;
        }
        for x in 0..width {
            walls[my * width + x] = true;
        }
        for y in [my / 2, (my + height) / 2] {
            walls[y * width + mx] = false;
        }
        for x in [mx / 2, (mx + width) / 2] {
            walls[my * width + x] = false;
        }
        Self::new(width, height, walls, (0, 0), (width - 1, height - 1), max_steps)
    }

    /// Each non-terminal cell is a wall with probability `density`; layouts
    /// are resampled from the same seeded stream until the goal is reachable.
    pub fn random_walls(
        width: usize,
        height: usize,
        density: f64,
        seed: u64,
        max_steps: usize,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&density) {
            return Err(Error::InvalidMap(format!("wall density {density} not in [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (start, goal) = ((0, 0), (width - 1, height - 1));
        for _ in 0..10_000 {
            let walls: Vec<bool> = (0..width * height)
                .map(|i| {
                    let c = (i % width, i / width);
                    c != start && c != goal && rng.gen::<f64>() < density
                })
                .collect();
            match Self::new(width, height, walls, start, goal, max_steps) {
                Ok(env) => return Ok(env),
                Err(Error::InvalidMap(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::InvalidMap("no solvable layout found".into()))
    }

    /// Parses the text map format: `.` floor, `#` wall, `S` start, `G` goal.
    pub fn parse_map(text: &str, max_steps: usize) -> Result<Self> {
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.chars().count());
        let mut walls = Vec::with_capacity(width * height);
        let (mut start, mut goal) = (None, None);
        for (y, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(Error::InvalidMap(format!("row {y} has a different width")));
            }
            for (x, ch) in row.chars().enumerate() {
                match ch {
                    '.' => walls.push(false),
                    '#' => walls.push(true),
                    'S' | 'G' => {
                        let slot = if ch == 'S' { &mut start } else { &mut goal };
                        if slot.replace((x, y)).is_some() {
                            return Err(Error::InvalidMap(format!("more than one '{ch}'")));
                        }
                        walls.push(false);
                    }
                    other => {
                        return Err(Error::InvalidMap(format!(
                            "unexpected character {other:?} at ({x}, {y})"
                        )))
                    }
                }
            }
        }
        let start = start.ok_or_else(|| Error::InvalidMap("missing 'S'".into()))?;
        let goal = goal.ok_or_else(|| Error::InvalidMap("missing 'G'".into()))?;
        Self::new(width, height, walls, start, goal, max_steps)
    }

    pub fn load_map(path: &Path, max_steps: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_map(&text, max_steps).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn to_map_string(&self) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                s.push(if (x, y) == self.start {
                    'S'
                } else if (x, y) == self.goal {
                    'G'
                } else if self.is_wall((x, y)) {
                    '#'
                } else {
                    '.'
                });
            }
            s.push('\n');
        }
        s
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> Cell {
        self.start
    }

    pub fn goal(&self) -> Cell {
        self.goal
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn position(&self) -> Cell {
        self.pos
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.walls[c.1 * self.width + c.0]
    }

    /// Length of every state encoding: `(x, y)` plus a 3×3 wall window.
    pub fn state_dim(&self) -> usize {
        11
    }

    pub fn num_actions(&self) -> usize {
        Action::COUNT
    }

    /// Neighbor reached by `action`, or `c` itself when blocked.
    pub fn neighbor(&self, c: Cell, action: Action) -> Cell {
        let (x, y) = c;
        let next = match action {
            Action::Up if y > 0 => (x, y - 1),
            Action::Down if y + 1 < self.height => (x, y + 1),
            Action::Left if x > 0 => (x - 1, y),
            Action::Right if x + 1 < self.width => (x + 1, y),
            _ => return c,
        };
        if self.is_wall(next) {
            c
        } else {
            next
        }
    }

    /// Normalized coordinates followed by the 3×3 occupancy window around
    /// `c` (row-major, out-of-grid cells count as walls).
    pub fn encode(&self, c: Cell) -> Vec<f64> {
        let norm = |v: usize, n: usize| if n > 1 { v as f64 / (n - 1) as f64 } else { 0.0 };
        let mut out = Vec::with_capacity(11);
        out.push(norm(c.0, self.width));
        out.push(norm(c.1, self.height));
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let (x, y) = (c.0 as i64 + dx, c.1 as i64 + dy);
                let blocked = x < 0
                    || y < 0
                    || x >= self.width as i64
                    || y >= self.height as i64
                    || self.is_wall((x as usize, y as usize));
                out.push(if blocked { 1.0 } else { 0.0 });
            }
        }
        out
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.pos = self.start;
        self.steps = 0;
        self.done = false;
        self.encode(self.pos)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        self.pos = self.neighbor(self.pos, action);
        self.steps += 1;
        let reached_goal = self.pos == self.goal;
        self.done = reached_goal || self.steps >= self.max_steps;
        Ok(StepOutcome {
            state: self.encode(self.pos),
            reward: if reached_goal { 1.0 } else { 0.0 },
            terminal: self.done,
            reached_goal,
        })
    }

    fn bfs_from_goal(&self) -> Vec<Option<usize>> {
        // moves are reversible, so distance from the goal equals distance to it
        let mut dist = vec![None; self.width * self.height];
        let idx = |c: Cell| c.1 * self.width + c.0;
        dist[idx(self.goal)] = Some(0);
        let mut queue = VecDeque::from([self.goal]);
        while let Some(c) = queue.pop_front() {
            let d = dist[idx(c)].unwrap();
            for a in Action::ALL {
                let n = self.neighbor(c, a);
                if dist[idx(n)].is_none() {
                    dist[idx(n)] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// Shortest-path length from `c` to the goal.
    pub fn distance_to_goal(&self, c: Cell) -> Option<usize> {
        if c.0 >= self.width || c.1 >= self.height {
            return None;
        }
        self.distance[c.1 * self.width + c.0]
    }

    /// First move of a shortest path from `c`, ties broken up < down < left < right.
    pub fn teacher_action(&self, c: Cell) -> Result<Action> {
        let d = self.distance_to_goal(c).ok_or(Error::NoPath { from: c })?;
        if d == 0 {
            // already at the goal: any move is optimal, keep the order
            return Ok(Action::Up);
        }
        Action::ALL
            .into_iter()
            .find(|&a| {
                let n = self.neighbor(c, a);
                n != c && self.distance_to_goal(n) == Some(d - 1)
            })
            .ok_or(Error::NoPath { from: c })
    }
}

/// How to build the environment for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "kebab-case")]
pub enum EnvSpec {
    Open {
        width: usize,
        height: usize,
    },
    FourRooms {
        width: usize,
        height: usize,
    },
    RandomWalls {
        width: usize,
        height: usize,
        density: f64,
        map_seed: u64,
    },
    MapFile {
        path: String,
    },
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec::RandomWalls {
            width: 10,
            height: 10,
            density: 0.2,
            map_seed: 0,
        }
    }
}

impl EnvSpec {
    pub fn build(&self, max_steps: usize) -> Result<GridWorld> {
        match self {
            EnvSpec::Open { width, height } => GridWorld::open(*width, *height, max_steps),
            EnvSpec::FourRooms { width, height } => {
                GridWorld::four_rooms(*width, *height, max_steps)
            }
            EnvSpec::RandomWalls {
                width,
                height,
                density,
                map_seed,
            } => GridWorld::random_walls(*width, *height, *density, *map_seed, max_steps),
            EnvSpec::MapFile { path } => GridWorld::load_map(Path::new(path), max_steps),
        }
    }
}

impl FromStr for EnvSpec {
    type Err = Error;

    /// `gridworld` (the default random-walls map), `open`, `four-rooms`, or a
    /// path to a map file.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gridworld" | "random-walls" => EnvSpec::default(),
            "open" => EnvSpec::Open {
                width: 10,
                height: 10,
            },
            "four-rooms" => EnvSpec::FourRooms {
                width: 11,
                height: 11,
            },
            path => EnvSpec::MapFile { path: path.into() },
        })
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EnvSpec::Open { width, height } => write!(f, "open {width}x{height}"),
            EnvSpec::FourRooms { width, height } => write!(f, "four-rooms {width}x{height}"),
            EnvSpec::RandomWalls {
                width,
                height,
                density,
                map_seed,
            } => write!(f, "random-walls {width}x{height} density {density} seed {map_seed}"),
            EnvSpec::MapFile { path } => write!(f, "map {path}"),
        }
    }
}

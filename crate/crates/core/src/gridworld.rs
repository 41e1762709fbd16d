//! Benchmark instance generators: 2D gridworlds with obstacles and random
//! sparse MDPs.

use std::fmt::Write as _;

use rand::rngs::StdRng;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, Successor};

pub const DEFAULT_P_INTENDED: f64 = 0.8;
pub const DEFAULT_P_LATERAL: f64 = 0.1;
pub const DEFAULT_GOAL_REWARD: f64 = 100.0;
pub const DEFAULT_STEP_REWARD: f64 = 0.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Compass moves, in action-index order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    North,
    East,
    South,
    West,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::North, Move::East, Move::South, Move::West];

    fn index(self) -> usize {
        self as usize
    }

    fn lateral(self) -> [Move; 2] {
        let i = self.index();
        [Self::ALL[(i + 1) % 4], Self::ALL[(i + 3) % 4]]
    }

    fn offset(self) -> (isize, isize) {
        match self {
            Move::North => (-1, 0),
            Move::East => (0, 1),
            Move::South => (1, 0),
            Move::West => (0, -1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub obstacles: Vec<Cell>,
    pub goals: Vec<Cell>,
    /// Only used when rendering trajectories.
    pub start: Option<Cell>,
    pub p_intended: f64,
    /// Probability of slipping to each perpendicular direction.
    pub p_lateral: f64,
    pub goal_reward: f64,
    pub step_reward: f64,
}

impl GridSpec {
    /// An obstacle-free grid with default noise and rewards.
    pub fn open(width: usize, height: usize, goal: Cell) -> Self {
        Self {
            width,
            height,
            obstacles: Vec::new(),
            goals: vec![goal],
            start: None,
            p_intended: DEFAULT_P_INTENDED,
            p_lateral: DEFAULT_P_LATERAL,
            goal_reward: DEFAULT_GOAL_REWARD,
            step_reward: DEFAULT_STEP_REWARD,
        }
    }

    pub fn deterministic(mut self) -> Self {
        self.p_intended = 1.0;
        self.p_lateral = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidGrid("width and height must be positive".into()));
        }
        if !(self.p_intended > 0.0 && self.p_intended <= 1.0) || self.p_lateral < 0.0 {
            return Err(Error::InvalidGrid(format!(
                "noise out of range: p_intended={}, p_lateral={}",
                self.p_intended, self.p_lateral
            )));
        }
        if (self.p_intended + 2.0 * self.p_lateral - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidGrid(format!(
                "p_intended + 2 * p_lateral = {} != 1",
                self.p_intended + 2.0 * self.p_lateral
            )));
        }
        if !self.goal_reward.is_finite() || !self.step_reward.is_finite() {
            return Err(Error::InvalidGrid("rewards must be finite".into()));
        }
        let blocked = self.blocked_mask();
        for c in self.obstacles.iter().chain(&self.goals).chain(&self.start) {
            if c.row >= self.height || c.col >= self.width {
                return Err(Error::InvalidGrid(format!(
                    "cell ({}, {}) outside the {}x{} grid",
                    c.row, c.col, self.width, self.height
                )));
            }
        }
        if blocked.iter().all(|&b| b) {
            return Err(Error::InvalidGrid("grid is fully obstructed".into()));
        }
        if self.goals.is_empty() {
            return Err(Error::InvalidGrid("no goal cell".into()));
        }
        if let Some(g) = self.goals.iter().find(|g| blocked[g.row * self.width + g.col]) {
            return Err(Error::InvalidGrid(format!(
                "goal ({}, {}) is an obstacle",
                g.row, g.col
            )));
        }
        Ok(())
    }

    fn blocked_mask(&self) -> Vec<bool> {
        let mut blocked = vec![false; self.width * self.height];
        for c in &self.obstacles {
            if c.row < self.height && c.col < self.width {
                blocked[c.row * self.width + c.col] = true;
            }
        }
        blocked
    }

    /// Renders the grid text format (`W H` header, one line per row).
    pub fn to_text(&self) -> String {
        let mut chars = vec![b'.'; self.width * self.height];
        for c in &self.obstacles {
            chars[c.row * self.width + c.col] = b'#';
        }
        if let Some(s) = self.start {
            chars[s.row * self.width + s.col] = b'S';
        }
        for g in &self.goals {
            chars[g.row * self.width + g.col] = b'G';
        }
        let mut out = format!("{} {}\n", self.width, self.height);
        for row in chars.chunks(self.width) {
            out.push_str(std::str::from_utf8(row).expect("ascii"));
            out.push('\n');
        }
        out
    }

    /// Parses the grid text format. Noise and rewards take default values.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (width, height) = match lines.next() {
            Some((_, header)) => {
                let mut parts = header.split_whitespace();
                let mut dim = |name: &str| -> Result<usize> {
                    let tok = parts.next().ok_or_else(|| Error::GridParse {
                        line: 1,
                        column: 1,
                        message: format!("missing {name} in header"),
                    })?;
                    tok.parse::<usize>()
                        .ok()
                        .filter(|&v| v > 0)
                        .ok_or_else(|| Error::GridParse {
                            line: 1,
                            column: header.find(tok).map_or(1, |p| p + 1),
                            message: format!("bad {name} {tok:?}"),
                        })
                };
                let w = dim("width")?;
                let h = dim("height")?;
                if parts.next().is_some() {
                    return Err(Error::GridParse {
                        line: 1,
                        column: 1,
                        message: "header must be \"W H\"".into(),
                    });
                }
                (w, h)
            }
            None => {
                return Err(Error::GridParse {
                    line: 1,
                    column: 1,
                    message: "empty grid file".into(),
                })
            }
        };

        let mut spec = GridSpec {
            goals: Vec::new(),
            ..GridSpec::open(width, height, Cell::new(0, 0))
        };
        let mut rows_seen = 0;
        for (idx, line) in lines {
            let line = line.trim_end_matches('\r');
            if rows_seen == height {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(Error::GridParse {
                    line: idx + 1,
                    column: 1,
                    message: format!("more than {height} rows"),
                });
            }
            let row = rows_seen;
            let mut count = 0;
            for (col, ch) in line.chars().enumerate() {
                if col >= width {
                    return Err(Error::GridParse {
                        line: idx + 1,
                        column: col + 1,
                        message: format!("row longer than width {width}"),
                    });
                }
                let cell = Cell::new(row, col);
                match ch {
                    '.' => {}
                    '#' => spec.obstacles.push(cell),
                    'G' => spec.goals.push(cell),
                    'S' => {
                        if spec.start.replace(cell).is_some() {
                            return Err(Error::GridParse {
                                line: idx + 1,
                                column: col + 1,
                                message: "more than one start cell".into(),
                            });
                        }
                    }
                    other => {
                        return Err(Error::GridParse {
                            line: idx + 1,
                            column: col + 1,
                            message: format!("unexpected character {other:?}"),
                        })
                    }
                }
                count += 1;
            }
            if count != width {
                return Err(Error::GridParse {
                    line: idx + 1,
                    column: count + 1,
                    message: format!("row has {count} cells, expected {width}"),
                });
            }
            rows_seen += 1;
        }
        if rows_seen != height {
            return Err(Error::GridParse {
                line: rows_seen + 2,
                column: 1,
                message: format!("expected {height} rows, found {rows_seen}"),
            });
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Cell <-> state index correspondence of a grid MDP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    state_of: Vec<Option<usize>>,
    cell_of: Vec<Cell>,
}

/// Serializable form of a [`GridMap`]: `cells[s]` is the cell of state `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
}

impl GridMap {
    pub fn layout(&self) -> GridLayout {
        GridLayout {
            width: self.width,
            height: self.height,
            cells: self.cell_of.clone(),
        }
    }

    pub fn from_layout(layout: &GridLayout) -> Result<Self> {
        let (w, h) = (layout.width, layout.height);
        let mut state_of = vec![None; w * h];
        for (s, c) in layout.cells.iter().enumerate() {
            if c.row >= h || c.col >= w {
                return Err(Error::InvalidGrid(format!(
                    "cell ({}, {}) outside the {w}x{h} grid",
                    c.row, c.col
                )));
            }
            let slot = &mut state_of[c.row * w + c.col];
            if slot.is_some() {
                return Err(Error::InvalidGrid(format!(
                    "cell ({}, {}) mapped to two states",
                    c.row, c.col
                )));
            }
            *slot = Some(s);
        }
        Ok(Self {
            width: w,
            height: h,
            state_of,
            cell_of: layout.cells.clone(),
        })
    }

    pub fn state(&self, cell: Cell) -> Option<usize> {
        if cell.row >= self.height || cell.col >= self.width {
            return None;
        }
        self.state_of[cell.row * self.width + cell.col]
    }

    pub fn cell(&self, state: usize) -> Cell {
        self.cell_of[state]
    }

    pub fn n_states(&self) -> usize {
        self.cell_of.len()
    }
}

/// One state per free cell, numbered row-major. Moves off the grid or into an
/// obstacle leave the agent in place; goals are absorbing with zero reward.
pub fn build_grid_mdp(spec: &GridSpec) -> Result<(Mdp, GridMap)> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let blocked = spec.blocked_mask();

    let mut state_of = vec![None; w * h];
    let mut cell_of = Vec::new();
    for row in 0..h {
        for col in 0..w {
            if !blocked[row * w + col] {
                state_of[row * w + col] = Some(cell_of.len());
                cell_of.push(Cell::new(row, col));
            }
        }
    }
    let map = GridMap {
        width: w,
        height: h,
        state_of,
        cell_of,
    };
    let n = map.n_states();
    let mut is_goal = vec![false; n];
    let goals: Vec<usize> = spec
        .goals
        .iter()
        .map(|&g| map.state(g).expect("goal validated as free"))
        .collect();
    for &g in &goals {
        is_goal[g] = true;
    }

    let target = |from: Cell, mv: Move| -> usize {
        let (dr, dc) = mv.offset();
        let r = from.row as isize + dr;
        let c = from.col as isize + dc;
        let stay = map.state(from).expect("from is free");
        if r < 0 || c < 0 {
            return stay;
        }
        map.state(Cell::new(r as usize, c as usize)).unwrap_or(stay)
    };

    let mut rows = Vec::with_capacity(n * 4);
    for s in 0..n {
        for mv in Move::ALL {
            if is_goal[s] {
                rows.push(vec![Successor::new(s, 1.0, 0.0)]);
                continue;
            }
            let from = map.cell(s);
            let mut row: Vec<Successor> = Vec::with_capacity(3);
            let [left, right] = mv.lateral();
            for (dir, p) in [
                (mv, spec.p_intended),
                (left, spec.p_lateral),
                (right, spec.p_lateral),
            ] {
                if p == 0.0 {
                    continue;
                }
                let t = target(from, dir);
                match row.iter_mut().find(|x| x.state == t) {
                    Some(x) => x.prob += p,
                    None => {
                        let reward = if is_goal[t] {
                            spec.goal_reward
                        } else {
                            spec.step_reward
                        };
                        row.push(Successor::new(t, p, reward));
                    }
                }
            }
            rows.push(row);
        }
    }
    Ok((Mdp::from_rows(n, 4, rows, goals)?, map))
}

/// Parameters for seeded random gridworlds (benchmark ladders and the demo
/// map). Obstacles are dropped as small rectangular blocks until the target
/// density is reached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomGrid {
    pub width: usize,
    pub height: usize,
    pub obstacle_density: f64,
    /// Goal cell; when absent a free cell is drawn from the seed.
    #[serde(default)]
    pub goal: Option<Cell>,
    pub seed: u64,
}

impl RandomGrid {
    pub fn generate(&self) -> Result<GridSpec> {
        let (w, h) = (self.width, self.height);
        if w == 0 || h == 0 {
            return Err(Error::InvalidGrid("width and height must be positive".into()));
        }
        if !(0.0..0.9).contains(&self.obstacle_density) {
            return Err(Error::InvalidGrid(format!(
                "obstacle density {} outside [0, 0.9)",
                self.obstacle_density
            )));
        }
        let mut rng = StdRng::seed_from_u64(self.seed);
        let goal = match self.goal {
            Some(g) => g,
            None => Cell::new(rng.random_range(0..h), rng.random_range(0..w)),
        };
        if goal.row >= h || goal.col >= w {
            return Err(Error::InvalidGrid("goal outside grid".into()));
        }
        let target = (self.obstacle_density * (w * h) as f64).round() as usize;
        let mut blocked = vec![false; w * h];
        let mut count = 0;
        let near_goal =
            |r: usize, c: usize| r.abs_diff(goal.row) <= 1 && c.abs_diff(goal.col) <= 1;
        let mut attempts = 0;
        while count < target && attempts < 100 * w * h {
            attempts += 1;
            let bh = rng.random_range(1..=3usize);
            let bw = rng.random_range(1..=3usize);
            let r0 = rng.random_range(0..h);
            let c0 = rng.random_range(0..w);
            for r in r0..(r0 + bh).min(h) {
                for c in c0..(c0 + bw).min(w) {
                    if count < target && !blocked[r * w + c] && !near_goal(r, c) {
                        blocked[r * w + c] = true;
                        count += 1;
                    }
                }
            }
        }
        let free: Vec<Cell> = (0..h)
            .flat_map(|r| (0..w).map(move |c| Cell::new(r, c)))
            .filter(|c| !blocked[c.row * w + c.col] && *c != goal)
            .collect();
        let start = free
            .iter()
            .copied()
            .max_by_key(|c| c.row.abs_diff(goal.row) + c.col.abs_diff(goal.col));
        Ok(GridSpec {
            obstacles: (0..h)
                .flat_map(|r| (0..w).map(move |c| Cell::new(r, c)))
                .filter(|c| blocked[c.row * w + c.col])
                .collect(),
            start,
            ..GridSpec::open(w, h, goal)
        })
    }
}

/// MDP JSON with the grid layout embedded.
pub fn grid_mdp_to_json(mdp: &Mdp, map: &GridMap) -> String {
    let mut file = mdp.to_file_format();
    file.grid = Some(map.layout());
    serde_json::to_string(&file).expect("MDP serialization cannot fail")
}

/// Loads an MDP file, returning its grid map when one is embedded.
pub fn load_mdp(path: impl AsRef<std::path::Path>) -> Result<(Mdp, Option<GridMap>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut file: crate::mdp::MdpFile = serde_json::from_str(&text)?;
    let map = match file.grid.take() {
        Some(layout) => Some(GridMap::from_layout(&layout)?),
        None => None,
    };
    let mdp = Mdp::from_file_format(file)?;
    if let Some(m) = &map {
        if m.n_states() != mdp.n_states() {
            return Err(Error::LengthMismatch {
                expected: mdp.n_states(),
                actual: m.n_states(),
            });
        }
    }
    Ok((mdp, map))
}

/// Random sparse MDP: each `(state, action)` of a non-goal state moves to
/// `successors_per_action` distinct uniformly drawn states with random
/// weights and rewards in `[-1, 1)`. One uniformly chosen state is the
/// absorbing goal.
pub fn build_random_mdp(
    n_states: usize,
    n_actions: usize,
    successors_per_action: usize,
    seed: u64,
) -> Result<Mdp> {
    if n_states == 0 || n_actions == 0 || successors_per_action == 0 {
        return Err(Error::Config(
            "n_states, n_actions and successors_per_action must be positive".into(),
        ));
    }
    let k = successors_per_action.min(n_states);
    let mut rng = StdRng::seed_from_u64(seed);
    let goal = rng.random_range(0..n_states);
    let mut rows = Vec::with_capacity(n_states * n_actions);
    for s in 0..n_states {
        for _ in 0..n_actions {
            if s == goal {
                rows.push(vec![Successor::new(goal, 1.0, 0.0)]);
                continue;
            }
            let targets = sample(&mut rng, n_states, k);
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let mut row: Vec<Successor> = targets
                .iter()
                .zip(&weights)
                .map(|(t, wgt)| Successor::new(t, wgt / total, rng.random_range(-1.0..1.0)))
                .collect();
            row.sort_by_key(|x| x.state);
            rows.push(row);
        }
    }
    Mdp::from_rows(n_states, n_actions, rows, [goal])
}

/// ASCII rendering of a policy over a grid (`^>v<`, `G` for goals, `#` for
/// obstacles).
pub fn render_policy(map: &GridMap, mdp: &Mdp, policy: &[usize]) -> String {
    let mut out = String::with_capacity((map.width + 1) * map.height);
    for row in 0..map.height {
        for col in 0..map.width {
            let ch = match map.state(Cell::new(row, col)) {
                None => '#',
                Some(s) if mdp.is_goal(s) => 'G',
                Some(s) => ['^', '>', 'v', '<'][policy[s] % 4],
            };
            out.push(ch);
        }
        let _ = writeln!(out);
    }
    out
}

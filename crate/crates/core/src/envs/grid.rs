//! MultiRoom-style gridworld: a chain of small rooms joined by closed doors,
//! with the goal square somewhere in the last room.

use std::collections::VecDeque;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{Goal, GoalId, Observation};
use crate::{Error, Result};

pub const N_ACTIONS: usize = 4;
pub const TURN_LEFT: usize = 0;
pub const TURN_RIGHT: usize = 1;
pub const FORWARD: usize = 2;
pub const OPEN_DOOR: usize = 3;

pub const ACTION_NAMES: [&str; N_ACTIONS] = ["turn-left", "turn-right", "forward", "open-door"];

/// Per-cell observation codes.
pub const CODE_WALL: u16 = 0;
pub const CODE_FLOOR: u16 = 1;
pub const CODE_DOOR_CLOSED: u16 = 2;
pub const CODE_DOOR_OPEN: u16 = 3;
pub const CODE_GOAL: u16 = 4;
const N_CELL_CODES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    Wall,
    Floor,
    /// Door joining room `k` to room `k + 1` (1-based `k`).
    Door(u8),
    Goal,
}

/// Facing direction, clockwise from east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Facing {
    East,
    South,
    West,
    North,
}

impl Facing {
    pub const ALL: [Facing; 4] = [Facing::East, Facing::South, Facing::West, Facing::North];

    pub fn index(self) -> usize {
        self as usize
    }

    fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Facing::East => (0, 1),
            Facing::South => (1, 0),
            Facing::West => (0, -1),
            Facing::North => (-1, 0),
        }
    }

    fn left(self) -> Self {
        Self::from_index(self.index() + 3)
    }

    fn right(self) -> Self {
        Self::from_index(self.index() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pose {
    pub row: usize,
    pub col: usize,
    pub facing: Facing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    top: usize,
    left: usize,
    height: usize,
    width: usize,
}

impl Rect {
    fn bottom(&self) -> usize {
        self.top + self.height - 1
    }

    fn right(&self) -> usize {
        self.left + self.width - 1
    }

    fn interior_overlaps_outer(&self, other: &Rect) -> bool {
        // interior rows top+1..=bottom-1, cols left+1..=right-1
        let (t, b, l, r) = (self.top + 1, self.bottom() - 1, self.left + 1, self.right() - 1);
        t <= other.bottom() && other.top <= b && l <= other.right() && other.left <= r
    }

    fn interior_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.top + 1..self.bottom()).flat_map(move |r| (self.left + 1..self.right()).map(move |c| (r, c)))
    }
}

/// Static structure of one generated world.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<Cell>,
    /// Cell index of door `k + 1`.
    pub doors: Vec<usize>,
    pub goal: usize,
    /// Cells the agent may start on.
    pub start_cells: Vec<usize>,
    /// Fixed start pose (ASCII layouts); otherwise drawn per episode.
    pub fixed_start: Option<Pose>,
}

impl Layout {
    pub fn n_rooms(&self) -> usize {
        self.doors.len() + 1
    }

    fn walkable(&self, idx: usize) -> bool {
        !matches!(self.cells[idx], Cell::Wall)
    }

    /// Parses a layout drawn with `#` walls, `.` floor, `1`-`9` closed doors,
    /// `G` goal and one of `>v<^` for the agent (standing on floor).
    pub fn from_ascii(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let height = lines.len();
        let width = lines.first().map_or(0, |l| l.chars().count());
        if height == 0 || lines.iter().any(|l| l.chars().count() != width) {
            return Err(Error::InvalidEnv("ascii layout must be a nonempty rectangle".into()));
        }
        let mut cells = Vec::with_capacity(width * height);
        let mut doors: Vec<(u8, usize)> = Vec::new();
        let mut goal = None;
        let mut start = None;
        for (r, line) in lines.iter().enumerate() {
            for (c, ch) in line.chars().enumerate() {
                let idx = r * width + c;
                let cell = match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Floor,
                    'G' => {
                        goal = Some(idx);
                        Cell::Goal
                    }
                    '1'..='9' => {
                        let k = ch as u8 - b'0';
                        doors.push((k, idx));
                        Cell::Door(k)
                    }
                    '>' | 'v' | '<' | '^' => {
                        let facing = match ch {
                            '>' => Facing::East,
                            'v' => Facing::South,
                            '<' => Facing::West,
                            _ => Facing::North,
                        };
                        start = Some(Pose { row: r, col: c, facing });
                        Cell::Floor
                    }
                    other => {
                        return Err(Error::InvalidEnv(format!("unknown layout character {other:?}")))
                    }
                };
                cells.push(cell);
            }
        }
        doors.sort();
        if doors.iter().enumerate().any(|(i, &(k, _))| k as usize != i + 1) {
            return Err(Error::InvalidEnv("doors must be numbered 1..k without gaps".into()));
        }
        let goal = goal.ok_or_else(|| Error::InvalidEnv("layout has no goal".into()))?;
        let start = start.ok_or_else(|| Error::InvalidEnv("layout has no agent".into()))?;
        let layout = Layout {
            width,
            height,
            cells,
            doors: doors.into_iter().map(|(_, i)| i).collect(),
            goal,
            start_cells: vec![start.row * width + start.col],
            fixed_start: Some(start),
        };
        if !layout.is_solvable() {
            return Err(Error::InvalidEnv("goal unreachable from start".into()));
        }
        Ok(layout)
    }

    /// Random chain of `n_rooms` rooms on a `canvas x canvas` grid.
    pub fn generate(n_rooms: usize, canvas: usize, room_sizes: (usize, usize), seed: u64) -> Result<Self> {
        let (min_room, max_room) = room_sizes;
        if n_rooms == 0 || min_room < 4 || max_room < min_room || canvas < max_room {
            return Err(Error::InvalidEnv(format!(
                "cannot lay out {n_rooms} rooms of size {min_room}..={max_room} on a {canvas}x{canvas} canvas"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10_000 {
            if let Some(layout) = try_generate(n_rooms, canvas, min_room, max_room, &mut rng) {
                if layout.is_solvable() {
                    return Ok(layout);
                }
            }
        }
        Err(Error::InvalidEnv(format!(
            "no layout with {n_rooms} rooms fits a {canvas}x{canvas} canvas"
        )))
    }

    /// Breadth-first search from every start cell to the goal, treating doors as passable.
    pub fn is_solvable(&self) -> bool {
        self.start_cells
            .iter()
            .all(|&s| self.shortest_path(s, self.goal).is_some())
    }

    fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = ((idx / self.width) as isize, (idx % self.width) as isize);
        Facing::ALL.into_iter().filter_map(move |f| {
            let (dr, dc) = f.delta();
            let (nr, nc) = (r + dr, c + dc);
            (nr >= 0 && nc >= 0 && (nr as usize) < self.height && (nc as usize) < self.width)
                .then(|| nr as usize * self.width + nc as usize)
        })
    }

    /// Cell sequence from `from` to `to` (inclusive), doors treated as passable.
    pub fn shortest_path(&self, from: usize, to: usize) -> Option<Vec<usize>> {
        let mut prev = vec![usize::MAX; self.cells.len()];
        let mut queue = VecDeque::from([from]);
        prev[from] = from;
        while let Some(cur) = queue.pop_front() {
            if cur == to {
                let mut path = vec![to];
                let mut at = to;
                while at != from {
                    at = prev[at];
                    path.push(at);
                }
                path.reverse();
                return Some(path);
            }
            for n in self.neighbors(cur) {
                if prev[n] == usize::MAX && self.walkable(n) {
                    prev[n] = cur;
                    queue.push_back(n);
                }
            }
        }
        None
    }
}

fn try_generate<R: Rng>(n_rooms: usize, canvas: usize, min_room: usize, max_room: usize, rng: &mut R) -> Option<Layout> {
    let mut rooms: Vec<Rect> = Vec::with_capacity(n_rooms);
    let mut door_pos: Vec<(usize, usize)> = Vec::new();
    let mut entry_side: Option<Facing> = None;

    let (h, w) = (rng.random_range(min_room..=max_room), rng.random_range(min_room..=max_room));
    rooms.push(Rect {
        top: rng.random_range(0..=canvas - h),
        left: rng.random_range(0..=canvas - w),
        height: h,
        width: w,
    });

    while rooms.len() < n_rooms {
        let cur = *rooms.last().unwrap();
        let mut placed = false;
        for _ in 0..16 {
            let dirs: Vec<Facing> = Facing::ALL.into_iter().filter(|&d| Some(d) != entry_side).collect();
            let dir = *dirs.choose(rng).unwrap();
            let (h2, w2) = (rng.random_range(min_room..=max_room), rng.random_range(min_room..=max_room));
            // Door on `cur`'s wall facing `dir`; new room shares that wall.
            let (door, top, left) = match dir {
                Facing::East | Facing::West => {
                    let dr = rng.random_range(cur.top + 1..cur.bottom());
                    let dc = if dir == Facing::East { cur.right() } else { cur.left };
                    let off = rng.random_range(1..h2 - 1);
                    let left = if dir == Facing::East {
                        dc as isize
                    } else {
                        dc as isize - (w2 as isize - 1)
                    };
                    ((dr, dc), dr as isize - off as isize, left)
                }
                Facing::South | Facing::North => {
                    let dc = rng.random_range(cur.left + 1..cur.right());
                    let dr = if dir == Facing::South { cur.bottom() } else { cur.top };
                    let off = rng.random_range(1..w2 - 1);
                    let top = if dir == Facing::South {
                        dr as isize
                    } else {
                        dr as isize - (h2 as isize - 1)
                    };
                    ((dr, dc), top, dc as isize - off as isize)
                }
            };
            if top < 0 || left < 0 || top as usize + h2 > canvas || left as usize + w2 > canvas {
                continue;
            }
            let cand = Rect {
                top: top as usize,
                left: left as usize,
                height: h2,
                width: w2,
            };
            if rooms
                .iter()
                .any(|r| cand.interior_overlaps_outer(r) || r.interior_overlaps_outer(&cand))
            {
                continue;
            }
            // A door must not sit on a corner of either room.
            rooms.push(cand);
            door_pos.push(door);
            entry_side = Some(match dir {
                Facing::East => Facing::West,
                Facing::West => Facing::East,
                Facing::South => Facing::North,
                Facing::North => Facing::South,
            });
            placed = true;
            break;
        }
        if !placed {
            return None;
        }
    }

    let mut cells = vec![Cell::Wall; canvas * canvas];
    for room in &rooms {
        for (r, c) in room.interior_cells() {
            cells[r * canvas + c] = Cell::Floor;
        }
    }
    let doors: Vec<usize> = door_pos.iter().map(|&(r, c)| r * canvas + c).collect();
    for (k, &d) in doors.iter().enumerate() {
        cells[d] = Cell::Door(k as u8 + 1);
    }
    let last: Vec<(usize, usize)> = rooms.last().unwrap().interior_cells().collect();
    let (gr, gc) = *last.choose(rng).unwrap();
    let goal = gr * canvas + gc;
    cells[goal] = Cell::Goal;
    let start_cells: Vec<usize> = rooms[0]
        .interior_cells()
        .map(|(r, c)| r * canvas + c)
        .filter(|&i| i != goal)
        .collect();
    if start_cells.is_empty() {
        return None;
    }
    Some(Layout {
        width: canvas,
        height: canvas,
        cells,
        doors,
        goal,
        start_cells,
        fixed_start: None,
    })
}

/// How the environment obtains its layout.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutSpec {
    /// One layout for the whole run, drawn from this seed; start poses vary per episode.
    Fixed { seed: u64 },
    /// A fresh layout every episode, drawn from the reset seed.
    PerEpisode,
    /// A hand-drawn layout.
    Ascii { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n_rooms: usize,
    pub horizon: usize,
    pub canvas: usize,
    pub min_room: usize,
    pub max_room: usize,
    pub layout: LayoutSpec,
}

impl GridConfig {
    /// MultiRoom-N`n_rooms` defaults: 20 steps of budget per room.
    pub fn multiroom(n_rooms: usize, layout_seed: u64) -> Self {
        let max_room = 5;
        Self {
            n_rooms,
            horizon: 20 * n_rooms,
            canvas: n_rooms * (max_room - 1) + 1,
            min_room: 4,
            max_room,
            layout: LayoutSpec::Fixed { seed: layout_seed },
        }
    }

    pub fn ascii(text: &str, horizon: usize) -> Result<Self> {
        let layout = Layout::from_ascii(text)?;
        Ok(Self {
            n_rooms: layout.n_rooms(),
            horizon,
            canvas: layout.width.max(layout.height),
            min_room: 4,
            max_room: 4,
            layout: LayoutSpec::Ascii { text: text.to_string() },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    /// Door (1-based) opened by this step, if any.
    pub door_opened: Option<u8>,
}

/// Expands grid observations into one-hot features:
/// `5 x cells` cell types, `cells` agent position, and 4 facing bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridEncoder {
    n_cells: usize,
}

impl GridEncoder {
    pub fn new(n_cells: usize) -> Self {
        Self { n_cells }
    }

    pub fn dim(&self) -> usize {
        N_CELL_CODES * self.n_cells + self.n_cells + 4
    }

    /// Writes the features into `out`, which must be zeroed and `dim()` long.
    pub fn encode_into(&self, obs: &Observation, out: &mut [f64]) {
        let codes = obs.codes();
        debug_assert_eq!(codes.len(), self.n_cells + 2);
        for (cell, &code) in codes[..self.n_cells].iter().enumerate() {
            out[cell * N_CELL_CODES + code as usize] = 1.0;
        }
        out[N_CELL_CODES * self.n_cells + codes[self.n_cells] as usize] = 1.0;
        out[N_CELL_CODES * self.n_cells + self.n_cells + codes[self.n_cells + 1] as usize] = 1.0;
    }
}

#[derive(Debug, Clone)]
pub struct GridMultiRoom {
    config: GridConfig,
    layout: Layout,
    doors_open: Vec<bool>,
    agent: Pose,
    step_count: usize,
    done: bool,
    rng_seed: u64,
}

impl GridMultiRoom {
    pub fn new(config: GridConfig) -> Result<Self> {
        if config.horizon == 0 {
            return Err(Error::InvalidEnv("horizon must be positive".into()));
        }
        let layout = match &config.layout {
            LayoutSpec::Fixed { seed } => {
                Layout::generate(config.n_rooms, config.canvas, (config.min_room, config.max_room), *seed)?
            }
            LayoutSpec::PerEpisode => {
                Layout::generate(config.n_rooms, config.canvas, (config.min_room, config.max_room), 0)?
            }
            LayoutSpec::Ascii { text } => Layout::from_ascii(text)?,
        };
        if layout.n_rooms() != config.n_rooms {
            return Err(Error::InvalidEnv(format!(
                "layout has {} rooms, config says {}",
                layout.n_rooms(),
                config.n_rooms
            )));
        }
        let mut env = Self {
            doors_open: vec![false; layout.doors.len()],
            agent: Pose {
                row: 0,
                col: 0,
                facing: Facing::East,
            },
            layout,
            config,
            step_count: 0,
            done: false,
            rng_seed: 0,
        };
        env.reset(0);
        Ok(env)
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_rooms(&self) -> usize {
        self.layout.n_rooms()
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn agent(&self) -> Pose {
        self.agent
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn door_is_open(&self, k: usize) -> bool {
        self.doors_open[k - 1]
    }

    pub fn encoder(&self) -> GridEncoder {
        GridEncoder::new(self.layout.cells.len())
    }

    pub fn goal(&self) -> Goal {
        let id = match &self.config.layout {
            LayoutSpec::Fixed { seed } => *seed as u32,
            _ => 0,
        };
        Goal::new(
            GoalId(id),
            format!(
                "Navigate through the {} rooms and reach the goal square",
                self.n_rooms()
            ),
            self.config.horizon,
        )
        .expect("valid goal")
    }

    /// Starts a new episode. The start pose (and, for per-episode layouts,
    /// the layout itself) is a deterministic function of `seed`.
    pub fn reset(&mut self, seed: u64) -> Observation {
        self.rng_seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        if self.config.layout == LayoutSpec::PerEpisode {
            self.layout = Layout::generate(
                self.config.n_rooms,
                self.config.canvas,
                (self.config.min_room, self.config.max_room),
                seed,
            )
            .expect("per-episode layout parameters were validated at construction");
        }
        self.doors_open = vec![false; self.layout.doors.len()];
        self.agent = match self.layout.fixed_start {
            Some(pose) => pose,
            None => {
                let cell = *self.layout.start_cells.choose(&mut rng).expect("start cells");
                Pose {
                    row: cell / self.layout.width,
                    col: cell % self.layout.width,
                    facing: Facing::from_index(rng.random_range(0..4)),
                }
            }
        };
        self.step_count = 0;
        self.done = false;
        self.observation()
    }

    fn cell_code(&self, idx: usize) -> u16 {
        match self.layout.cells[idx] {
            Cell::Wall => CODE_WALL,
            Cell::Floor => CODE_FLOOR,
            Cell::Goal => CODE_GOAL,
            Cell::Door(k) => {
                if self.doors_open[k as usize - 1] {
                    CODE_DOOR_OPEN
                } else {
                    CODE_DOOR_CLOSED
                }
            }
        }
    }

    pub fn observation(&self) -> Observation {
        let n = self.layout.cells.len();
        let mut codes = Vec::with_capacity(n + 2);
        codes.extend((0..n).map(|i| self.cell_code(i)));
        codes.push((self.agent.row * self.layout.width + self.agent.col) as u16);
        codes.push(self.agent.facing.index() as u16);
        Observation::new(codes)
    }

    fn front_cell(&self) -> Option<usize> {
        let (dr, dc) = self.agent.facing.delta();
        let (r, c) = (self.agent.row as isize + dr, self.agent.col as isize + dc);
        (r >= 0 && c >= 0 && (r as usize) < self.layout.height && (c as usize) < self.layout.width)
            .then(|| r as usize * self.layout.width + c as usize)
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        if action >= N_ACTIONS {
            return Err(Error::InvalidAction {
                action,
                n_actions: N_ACTIONS,
            });
        }
        self.step_count += 1;
        let mut reward = 0.0;
        let mut door_opened = None;
        match action {
            TURN_LEFT => self.agent.facing = self.agent.facing.left(),
            TURN_RIGHT => self.agent.facing = self.agent.facing.right(),
            FORWARD => {
                if let Some(front) = self.front_cell() {
                    let passable = match self.layout.cells[front] {
                        Cell::Wall => false,
                        Cell::Floor | Cell::Goal => true,
                        Cell::Door(k) => self.doors_open[k as usize - 1],
                    };
                    if passable {
                        self.agent.row = front / self.layout.width;
                        self.agent.col = front % self.layout.width;
                        if front == self.layout.goal {
                            reward = 1.0;
                        }
                    }
                }
            }
            OPEN_DOOR => {
                if let Some(front) = self.front_cell() {
                    if let Cell::Door(k) = self.layout.cells[front] {
                        if !self.doors_open[k as usize - 1] {
                            self.doors_open[k as usize - 1] = true;
                            door_opened = Some(k);
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        self.done = reward == 1.0 || self.step_count >= self.config.horizon;
        Ok(StepOutcome {
            obs: self.observation(),
            reward,
            done: self.done,
            door_opened,
        })
    }

    /// Shortest action sequence from the current state to the goal: walk the
    /// BFS cell path, turning the short way and opening doors on the way.
    pub fn oracle_actions(&self) -> Vec<usize> {
        let here = self.agent.row * self.layout.width + self.agent.col;
        let Some(path) = self.layout.shortest_path(here, self.layout.goal) else {
            return Vec::new();
        };
        let mut facing = self.agent.facing;
        let mut doors_open = self.doors_open.clone();
        let mut actions = Vec::new();
        for pair in path.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let w = self.layout.width as isize;
            let diff = b as isize - a as isize;
            let want = if diff == 1 {
                Facing::East
            } else if diff == -1 {
                Facing::West
            } else if diff == w {
                Facing::South
            } else {
                Facing::North
            };
            let turns = (want.index() + 4 - facing.index()) % 4;
            match turns {
                1 => actions.push(TURN_RIGHT),
                2 => actions.extend([TURN_RIGHT, TURN_RIGHT]),
                3 => actions.push(TURN_LEFT),
                _ => {}
            }
            facing = want;
            if let Cell::Door(k) = self.layout.cells[b] {
                if !doors_open[k as usize - 1] {
                    actions.push(OPEN_DOOR);
                    doors_open[k as usize - 1] = true;
                }
            }
            actions.push(FORWARD);
        }
        actions
    }

    /// ASCII picture of the current state (walls `#`, floor `.`, closed doors
    /// by number, open doors `/`, goal `G`, agent `>v<^`).
    pub fn render(&self) -> String {
        let mut s = String::with_capacity((self.layout.width + 1) * self.layout.height);
        for r in 0..self.layout.height {
            for c in 0..self.layout.width {
                let idx = r * self.layout.width + c;
                let ch = if (r, c) == (self.agent.row, self.agent.col) {
                    match self.agent.facing {
                        Facing::East => '>',
                        Facing::South => 'v',
                        Facing::West => '<',
                        Facing::North => '^',
                    }
                } else {
                    match self.layout.cells[idx] {
                        Cell::Wall => '#',
                        Cell::Floor => '.',
                        Cell::Goal => 'G',
                        Cell::Door(k) if self.doors_open[k as usize - 1] => '/',
                        Cell::Door(k) => char::from(b'0' + k),
                    }
                };
                s.push(ch);
            }
            s.push('\n');
        }
        s
    }
}

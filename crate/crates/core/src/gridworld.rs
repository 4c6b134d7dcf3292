//! Deterministic key/door grid environments.
//!
//! The layout is a walled rectangle split into two rooms by an internal wall
//! column. The agent starts in the left room, must pick up a key, open a
//! door in the internal wall and walk to a fixed goal in the right room.
//! An [`Environment`] fixes the key cell and the door row; the
//! [`LayoutConfig`] fixes everything else.
//!
//! Coordinates are grid indices with `y` increasing downward, so "upper"
//! means a smaller `y`.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A grid cell, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, o: Orientation) -> Cell {
        let (dx, dy) = o.delta();
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, other: Cell) -> i32 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

impl From<[i32; 2]> for Cell {
    fn from(v: [i32; 2]) -> Self {
        Cell::new(v[0], v[1])
    }
}

impl From<Cell> for [i32; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    N,
    E,
    S,
    W,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [Orientation::N, Orientation::E, Orientation::S, Orientation::W];

    pub fn index(self) -> i32 {
        match self {
            Orientation::N => 0,
            Orientation::E => 1,
            Orientation::S => 2,
            Orientation::W => 3,
        }
    }

    pub fn from_index(i: i32) -> Option<Self> {
        Self::ALL.get(usize::try_from(i).ok()?).copied()
    }

    /// Unit step in grid coordinates (`y` grows downward).
    pub fn delta(self) -> (i32, i32) {
        match self {
            Orientation::N => (0, -1),
            Orientation::E => (1, 0),
            Orientation::S => (0, 1),
            Orientation::W => (-1, 0),
        }
    }

    pub fn left(self) -> Self {
        Self::ALL[((self.index() + 3) % 4) as usize]
    }

    pub fn right(self) -> Self {
        Self::ALL[((self.index() + 1) % 4) as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    Pickup,
    OpenDoor,
}

impl Action {
    /// All actions, in the fixed tie-break order used by the planner.
    pub const ALL: [Action; 5] = [
        Action::Forward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::Pickup,
        Action::OpenDoor,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Forward => "forward",
            Action::TurnLeft => "turn_left",
            Action::TurnRight => "turn_right",
            Action::Pickup => "pickup",
            Action::OpenDoor => "open_door",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown action {s:?}")))
    }
}

/// Position, heading and task phase of the agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentState {
    pub pos: Cell,
    pub orientation: Orientation,
    pub has_key: bool,
    pub door_open: bool,
}

impl AgentState {
    pub const fn new(pos: Cell, orientation: Orientation, has_key: bool, door_open: bool) -> Self {
        Self {
            pos,
            orientation,
            has_key,
            door_open,
        }
    }

    /// Node feature vector: `(x, y, orientation, has_key, door_open)`.
    pub fn features(&self) -> [i32; 5] {
        [
            self.pos.x,
            self.pos.y,
            self.orientation.index(),
            self.has_key as i32,
            self.door_open as i32,
        ]
    }

    pub fn from_features(f: [i32; 5]) -> Option<Self> {
        let flag = |v: i32| match v {
            0 => Some(false),
            1 => Some(true),
            _ => None,
        };
        Some(Self::new(
            Cell::new(f[0], f[1]),
            Orientation::from_index(f[2])?,
            flag(f[3])?,
            flag(f[4])?,
        ))
    }

    /// Compact textual key `x,y,o,k,d` used in JSON maps.
    pub fn key(&self) -> String {
        let f = self.features();
        format!("{},{},{},{},{}", f[0], f[1], f[2], f[3], f[4])
    }

    pub fn parse_key(s: &str) -> Result<Self> {
        let parts: Vec<i32> = s
            .split(',')
            .map(|p| p.trim().parse::<i32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("state key {s:?}: {e}")))?;
        let f: [i32; 5] = parts
            .try_into()
            .map_err(|_| Error::Parse(format!("state key {s:?} needs 5 fields")))?;
        Self::from_features(f).ok_or_else(|| Error::Parse(format!("state key {s:?} out of range")))
    }
}

/// One key/door placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Environment {
    pub env_id: usize,
    pub key: Cell,
    pub door: Cell,
}

impl Environment {
    pub fn door_row(&self) -> i32 {
        self.door.y
    }
}

/// Fixed geometry shared by every environment in a catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub width: i32,
    pub height: i32,
    pub wall_column: i32,
    pub key_region: Vec<Cell>,
    pub door_rows: Vec<i32>,
    pub goal: Cell,
    pub start: Cell,
    pub start_orientation: Orientation,
}

impl Default for LayoutConfig {
    /// 8 columns by 9 rows, internal wall at `x = 4`. The key may sit
    /// anywhere in the left room below the start row (3 x 6 = 18 cells),
    /// the door in any of rows 2..=7, giving 108 environments.
    fn default() -> Self {
        let key_region = (2..=7)
            .flat_map(|y| (1..=3).map(move |x| Cell::new(x, y)))
            .collect();
        Self {
            width: 8,
            height: 9,
            wall_column: 4,
            key_region,
            door_rows: (2..=7).collect(),
            goal: Cell::new(6, 7),
            start: Cell::new(1, 1),
            start_orientation: Orientation::E,
        }
    }
}

impl LayoutConfig {
    /// Cells of the outer border or of the internal wall (door cells
    /// included; whether a door is passable depends on the environment).
    pub fn is_wall(&self, c: Cell) -> bool {
        c.x <= 0 || c.y <= 0 || c.x >= self.width - 1 || c.y >= self.height - 1 || c.x == self.wall_column
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && c.x < self.width && c.y < self.height
    }

    pub fn initial_state(&self) -> AgentState {
        AgentState::new(self.start, self.start_orientation, false, false)
    }

    pub fn is_terminal(&self, s: &AgentState) -> bool {
        s.pos == self.goal
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.width < 3 || self.height < 3 {
            return cfg(format!("grid {}x{} is too small", self.width, self.height));
        }
        if self.wall_column <= 0 || self.wall_column >= self.width - 1 {
            return cfg(format!("wall column {} is not interior", self.wall_column));
        }
        if self.key_region.is_empty() {
            return cfg("key region is empty".into());
        }
        if self.door_rows.is_empty() {
            return cfg("door rows are empty".into());
        }
        for (name, c) in [("goal", self.goal), ("start", self.start)] {
            if !self.in_bounds(c) || self.is_wall(c) {
                return cfg(format!("{name} {c} is not a free cell"));
            }
        }
        if self.goal == self.start {
            return cfg("start and goal coincide".into());
        }
        if self.goal.x <= self.wall_column {
            return cfg(format!("goal {} must lie right of the wall", self.goal));
        }
        let mut seen = BTreeSet::new();
        for &k in &self.key_region {
            if !self.in_bounds(k) || self.is_wall(k) || k.x >= self.wall_column {
                return cfg(format!("key cell {k} must be a free cell left of the wall"));
            }
            if k == self.start || k == self.goal {
                return cfg(format!("key cell {k} overlaps start or goal"));
            }
            if !seen.insert(k) {
                return cfg(format!("duplicate key cell {k}"));
            }
        }
        let mut rows = BTreeSet::new();
        for &y in &self.door_rows {
            if y <= 0 || y >= self.height - 1 {
                return cfg(format!("door row {y} is not interior"));
            }
            if !rows.insert(y) {
                return cfg(format!("duplicate door row {y}"));
            }
        }
        Ok(())
    }

    /// Successor of `s` under `a` in `env`. Blocked or inapplicable actions
    /// leave the state unchanged; terminal states are absorbing.
    pub fn step(&self, env: &Environment, s: AgentState, a: Action) -> AgentState {
        if self.is_terminal(&s) {
            return s;
        }
        let ahead = s.pos.offset(s.orientation);
        let mut next = s;
        match a {
            Action::TurnLeft => next.orientation = s.orientation.left(),
            Action::TurnRight => next.orientation = s.orientation.right(),
            Action::Forward => {
                if self.passable(env, &s, ahead) {
                    next.pos = ahead;
                }
            }
            Action::Pickup => {
                if !s.has_key && ahead == env.key {
                    next.has_key = true;
                }
            }
            Action::OpenDoor => {
                if s.has_key && !s.door_open && ahead == env.door {
                    next.door_open = true;
                }
            }
        }
        next
    }

    fn passable(&self, env: &Environment, s: &AgentState, c: Cell) -> bool {
        if !self.in_bounds(c) {
            return false;
        }
        if c == env.door {
            return s.door_open;
        }
        if self.is_wall(c) {
            return false;
        }
        !(c == env.key && !s.has_key)
    }

    /// Breadth-first closure of the initial state under all actions.
    pub fn explore(&self, env: &Environment) -> StateSpace {
        let start = self.initial_state();
        let mut index: HashMap<AgentState, usize> = HashMap::new();
        let mut order = vec![start];
        index.insert(start, 0);
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            if self.is_terminal(&s) {
                continue;
            }
            for a in Action::ALL {
                let t = self.step(env, s, a);
                if let std::collections::hash_map::Entry::Vacant(e) = index.entry(t) {
                    e.insert(order.len());
                    order.push(t);
                    queue.push_back(t);
                }
            }
        }
        // Canonical (sorted) numbering so the result does not depend on
        // expansion order.
        order.sort();
        let index: HashMap<AgentState, usize> = order.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let successors = order
            .iter()
            .map(|s| {
                if self.is_terminal(s) {
                    None
                } else {
                    Some(Action::ALL.map(|a| index[&self.step(env, *s, a)]))
                }
            })
            .collect();
        StateSpace {
            env_id: env.env_id,
            states: order,
            index,
            successors,
        }
    }

    /// Reachable states and undirected, self-loop-free transitions.
    pub fn reachable(&self, env: &Environment) -> (BTreeSet<AgentState>, BTreeSet<(AgentState, AgentState)>) {
        let space = self.explore(env);
        let states = space.states.iter().copied().collect();
        let transitions = space
            .edges()
            .into_iter()
            .map(|(i, j)| (space.states[i], space.states[j]))
            .collect();
        (states, transitions)
    }
}

/// Directed reachable state graph of one environment.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub env_id: usize,
    /// Sorted reachable states.
    pub states: Vec<AgentState>,
    pub index: HashMap<AgentState, usize>,
    /// Successor index per action; `None` for terminal states.
    pub successors: Vec<Option<[usize; 5]>>,
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn contains(&self, s: &AgentState) -> bool {
        self.index.contains_key(s)
    }

    /// Unordered index pairs `(i, j)` with `i < j`, sorted, no self-loops.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = BTreeSet::new();
        for (i, succ) in self.successors.iter().enumerate() {
            if let Some(succ) = succ {
                for &j in succ {
                    if i != j {
                        edges.insert((i.min(j), i.max(j)));
                    }
                }
            }
        }
        edges.into_iter().collect()
    }
}

/// Environment catalog over one layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub layout: LayoutConfig,
    pub environments: Vec<Environment>,
}

impl Catalog {
    pub fn build(layout: LayoutConfig) -> Result<Self> {
        let environments = build_catalog(&layout)?;
        Ok(Self { layout, environments })
    }

    pub fn len(&self) -> usize {
        self.environments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.environments.is_empty()
    }

    pub fn get(&self, env_id: usize) -> Option<&Environment> {
        self.environments
            .get(env_id)
            .filter(|e| e.env_id == env_id)
            .or_else(|| self.environments.iter().find(|e| e.env_id == env_id))
    }

    pub fn env(&self, env_id: usize) -> Result<&Environment> {
        self.get(env_id).ok_or(Error::UnknownEnvironment(env_id))
    }

    /// Environment with the given key and door placement, if catalogued.
    pub fn find(&self, key: Cell, door: Cell) -> Option<&Environment> {
        self.environments.iter().find(|e| e.key == key && e.door == door)
    }

    pub fn ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.environments.iter().map(|e| e.env_id)
    }
}

/// Cross product of key cells and door rows, sorted by `(key, door)` with
/// ids assigned in that order.
pub fn build_catalog(layout: &LayoutConfig) -> Result<Vec<Environment>> {
    layout.validate()?;
    let mut placements: Vec<(Cell, Cell)> = layout
        .key_region
        .iter()
        .flat_map(|&k| layout.door_rows.iter().map(move |&y| (k, Cell::new(layout.wall_column, y))))
        .collect();
    placements.sort();
    Ok(placements
        .into_iter()
        .enumerate()
        .map(|(env_id, (key, door))| Environment { env_id, key, door })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: i32, x1: i32, y0: i32, y1: i32) -> Vec<Cell> {
        (y0..=y1).flat_map(|y| (x0..=x1).map(move |x| Cell::new(x, y))).collect()
    }

    /// The plain 8x8 two-room grid with the start parked in the right room,
    /// so every left-room cell may hold the key.
    fn eight_by_eight() -> LayoutConfig {
        LayoutConfig {
            width: 8,
            height: 8,
            wall_column: 4,
            key_region: rect(1, 3, 1, 6),
            door_rows: (1..=6).collect(),
            goal: Cell::new(6, 6),
            start: Cell::new(5, 1),
            start_orientation: Orientation::E,
        }
    }

    #[test]
    fn catalog_sizes() {
        // Count free cells left of the wall directly from the wall predicate.
        let l = eight_by_eight();
        let free_left = (0..l.width)
            .flat_map(|x| (0..l.height).map(move |y| Cell::new(x, y)))
            .filter(|&c| !l.is_wall(c) && c.x < l.wall_column)
            .count();
        assert_eq!(free_left, 18);
        assert_eq!(build_catalog(&l).unwrap().len(), 108);
        assert_eq!(build_catalog(&LayoutConfig::default()).unwrap().len(), 108);

        let mut wide = eight_by_eight();
        wide.width = 10;
        wide.wall_column = 5;
        wide.key_region = rect(1, 4, 1, 6);
        wide.goal = Cell::new(8, 6);
        wide.start = Cell::new(6, 1);
        assert_eq!(build_catalog(&wide).unwrap().len(), 24 * 6);

        let mut single = LayoutConfig::default();
        single.key_region = vec![Cell::new(2, 3)];
        single.door_rows = vec![5];
        let cat = build_catalog(&single).unwrap();
        assert_eq!(cat.len(), 1);
        assert_eq!(cat[0].door, Cell::new(4, 5));
    }

    #[test]
    fn catalog_is_sorted_and_ids_follow_order() {
        let cat = build_catalog(&LayoutConfig::default()).unwrap();
        for (i, w) in cat.windows(2).enumerate() {
            assert!((w[0].key, w[0].door) < (w[1].key, w[1].door));
            assert_eq!(w[0].env_id, i);
        }
    }

    #[test]
    fn empty_regions_are_configuration_errors() {
        let mut l = LayoutConfig::default();
        l.key_region.clear();
        assert!(matches!(build_catalog(&l), Err(Error::Config(_))));
        let mut l = LayoutConfig::default();
        l.door_rows.clear();
        assert!(matches!(build_catalog(&l), Err(Error::Config(_))));
        let mut l = LayoutConfig::default();
        l.key_region.push(l.start);
        assert!(matches!(build_catalog(&l), Err(Error::Config(_))));
    }

    #[test]
    fn turning_and_blocked_moves() {
        let l = LayoutConfig::default();
        let env = build_catalog(&l).unwrap()[0];
        let s = AgentState::new(Cell::new(2, 1), Orientation::E, false, false);
        let t = l.step(&env, s, Action::TurnLeft);
        assert_eq!(t.orientation, Orientation::N);
        assert_eq!(t.pos, s.pos);
        // Facing the outer wall.
        let north = AgentState::new(Cell::new(2, 1), Orientation::N, false, false);
        assert_eq!(l.step(&env, north, Action::Forward), north);
    }

    #[test]
    fn pickup_and_open() {
        let l = LayoutConfig::default();
        let env = Environment {
            env_id: 0,
            key: Cell::new(2, 3),
            door: Cell::new(4, 5),
        };
        let facing_key = AgentState::new(Cell::new(2, 2), Orientation::S, false, false);
        // The key blocks movement until picked up.
        assert_eq!(l.step(&env, facing_key, Action::Forward), facing_key);
        let got = l.step(&env, facing_key, Action::Pickup);
        assert!(got.has_key);
        assert_eq!(l.step(&env, got, Action::Forward).pos, Cell::new(2, 3));

        let at_door = AgentState::new(Cell::new(3, 5), Orientation::E, false, false);
        assert_eq!(l.step(&env, at_door, Action::OpenDoor), at_door);
        let with_key = AgentState { has_key: true, ..at_door };
        let opened = l.step(&env, with_key, Action::OpenDoor);
        assert!(opened.door_open);
        assert_eq!(l.step(&env, opened, Action::Forward).pos, env.door);
    }

    /// Independent reachability oracle: repeated sweeps over every
    /// well-formed grid state until the reached set stops growing.
    fn brute_force_reachable(l: &LayoutConfig, env: &Environment) -> BTreeSet<AgentState> {
        let mut all = Vec::new();
        for x in 0..l.width {
            for y in 0..l.height {
                for o in Orientation::ALL {
                    for k in [false, true] {
                        for d in [false, true] {
                            all.push(AgentState::new(Cell::new(x, y), o, k, d));
                        }
                    }
                }
            }
        }
        let mut reached: BTreeSet<AgentState> = [l.initial_state()].into();
        loop {
            let before = reached.len();
            for s in &all {
                if reached.contains(s) && !l.is_terminal(s) {
                    for a in Action::ALL {
                        reached.insert(l.step(env, *s, a));
                    }
                }
            }
            if reached.len() == before {
                return reached;
            }
        }
    }

    #[test]
    fn tiny_room_reachability_matches_brute_force() {
        // Left room is two cells: the start and the key next to it.
        let l = LayoutConfig {
            width: 6,
            height: 4,
            wall_column: 3,
            key_region: vec![Cell::new(2, 1)],
            door_rows: vec![2],
            goal: Cell::new(4, 2),
            start: Cell::new(1, 1),
            start_orientation: Orientation::E,
        };
        for env in build_catalog(&l).unwrap() {
            let (states, _) = l.reachable(&env);
            assert_eq!(states, brute_force_reachable(&l, &env));
            assert!(states.iter().any(|s| s.pos == l.goal));
        }
    }

    #[test]
    fn default_catalog_reachability() {
        let l = LayoutConfig::default();
        for env in build_catalog(&l).unwrap() {
            let (states, transitions) = l.reachable(&env);
            assert_eq!(states, brute_force_reachable(&l, &env));
            assert!(states.iter().any(|s| s.pos == l.goal), "goal unreachable in {env:?}");
            assert!(transitions.iter().all(|(a, b)| a != b));
            // Exactly one state opens the door.
            let openers = states
                .iter()
                .filter(|s| !s.door_open && l.step(&env, **s, Action::OpenDoor).door_open)
                .count();
            assert_eq!(openers, 1);
        }
    }

    #[test]
    fn open_door_states_trace_back_to_a_key_holder() {
        let l = LayoutConfig::default();
        let env = build_catalog(&l).unwrap()[17];
        let space = l.explore(&env);
        // Reverse directed edges and walk back from every door-open state.
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); space.len()];
        for (i, succ) in space.successors.iter().enumerate() {
            for &j in succ.iter().flatten() {
                if i != j {
                    preds[j].push(i);
                }
            }
        }
        for (i, s) in space.states.iter().enumerate() {
            if !s.door_open {
                continue;
            }
            let mut seen = vec![false; space.len()];
            let mut stack = vec![i];
            let mut found = false;
            while let Some(k) = stack.pop() {
                let st = space.states[k];
                if st.has_key && !st.door_open {
                    found = true;
                    break;
                }
                for &p in &preds[k] {
                    if !seen[p] {
                        seen[p] = true;
                        stack.push(p);
                    }
                }
            }
            assert!(found, "{s:?}");
        }
    }

    #[test]
    fn state_key_round_trip() {
        let s = AgentState::new(Cell::new(3, 5), Orientation::W, true, false);
        assert_eq!(AgentState::parse_key(&s.key()).unwrap(), s);
        assert!(AgentState::parse_key("1,2,3").is_err());
        assert!(AgentState::parse_key("1,2,7,0,0").is_err());
    }
}

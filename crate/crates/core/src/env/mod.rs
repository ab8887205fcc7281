//! Deterministic two-player mini-Pommerman.
//!
//! A [`GameState`] is a plain value: [`GameState::step`] returns a new state and
//! leaves the receiver untouched. [`GameState::advance`] is the in-place variant
//! used by the planner's rollouts.

mod board;
mod encode;
mod render;
mod step;

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

pub use board::{generate_board, path_exists, BoardConfig};
pub use encode::{encode_observation, FeatureStack, CHANNELS};
pub use render::render_ascii;
pub(crate) use step::blast_cells;
pub use step::{Death, Event, StepResult};

/// Fuse length of a freshly placed bomb.
pub const BOMB_LIFE: u8 = 10;
/// Number of timesteps a flame stays on the board.
pub const FLAME_LIFE: u8 = 2;
/// Episode cap.
pub const DEFAULT_MAX_STEPS: u32 = 800;
/// Default board edge.
pub const DEFAULT_BOARD_SIZE: usize = 8;
/// Smallest board `generate_board` accepts.
pub const MIN_GENERATED_SIZE: usize = 6;
pub const NUM_AGENTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnvError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("step called on a terminal state (timestep {timestep})")]
    TerminalState { timestep: u32 },
    #[error("agent {0} is dead")]
    DeadAgent(usize),
    #[error("agent id {0} out of range")]
    BadAgent(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Action {
    MoveUp = 0,
    MoveDown = 1,
    MoveLeft = 2,
    MoveRight = 3,
    Stop = 4,
    PlaceBomb = 5,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; 6] = [Action::MoveUp, Action::MoveDown, Action::MoveLeft, Action::MoveRight, Action::Stop, Action::PlaceBomb];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Action> {
        Action::ALL.get(code).copied()
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            Action::MoveUp => Some(Direction::Up),
            Action::MoveDown => Some(Direction::Down),
            Action::MoveLeft => Some(Direction::Left),
            Action::MoveRight => Some(Direction::Right),
            Action::Stop | Action::PlaceBomb => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::MoveUp => "up",
            Action::MoveDown => "down",
            Action::MoveLeft => "left",
            Action::MoveRight => "right",
            Action::Stop => "stop",
            Action::PlaceBomb => "bomb",
        }
    }

    /// Accepts either the numeric code or the lowercase name.
    pub fn parse(token: &str) -> Option<Action> {
        if let Ok(code) = token.parse::<usize>() {
            return Action::from_code(code);
        }
        Action::ALL.iter().copied().find(|a| a.name() == token)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn delta(self) -> (i32, i32) {
        match self {
            Direction::Up => (0, -1),
            Direction::Down => (0, 1),
            Direction::Left => (-1, 0),
            Direction::Right => (1, 0),
        }
    }

    pub fn action(self) -> Action {
        match self {
            Direction::Up => Action::MoveUp,
            Direction::Down => Action::MoveDown,
            Direction::Left => Action::MoveLeft,
            Direction::Right => Action::MoveRight,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Direction::Up => 'U',
            Direction::Down => 'D',
            Direction::Left => 'L',
            Direction::Right => 'R',
        }
    }

    pub fn from_letter(c: char) -> Option<Direction> {
        match c {
            'U' => Some(Direction::Up),
            'D' => Some(Direction::Down),
            'L' => Some(Direction::Left),
            'R' => Some(Direction::Right),
            _ => None,
        }
    }
}

/// Grid coordinate; `x` is the column, `y` the row (row 0 at the top).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub x: u8,
    pub y: u8,
}

impl Pos {
    pub const fn new(x: u8, y: u8) -> Pos {
        Pos { x, y }
    }

    pub fn offset(self, dir: Direction, size: usize) -> Option<Pos> {
        let (dx, dy) = dir.delta();
        let x = self.x as i32 + dx;
        let y = self.y as i32 + dy;
        if x < 0 || y < 0 || x >= size as i32 || y >= size as i32 {
            None
        } else {
            Some(Pos::new(x as u8, y as u8))
        }
    }

    pub fn index(self, size: usize) -> usize {
        self.y as usize * size + self.x as usize
    }

    pub fn from_index(idx: usize, size: usize) -> Pos {
        Pos::new((idx % size) as u8, (idx / size) as u8)
    }

    pub fn manhattan(self, other: Pos) -> u32 {
        (self.x as i32 - other.x as i32).unsigned_abs() + (self.y as i32 - other.y as i32).unsigned_abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Terrain {
    Passage,
    Rigid,
    Wood,
}

impl Terrain {
    pub fn symbol(self) -> char {
        match self {
            Terrain::Passage => '.',
            Terrain::Rigid => '#',
            Terrain::Wood => 'W',
        }
    }

    pub fn from_symbol(c: char) -> Option<Terrain> {
        match c {
            '.' => Some(Terrain::Passage),
            '#' => Some(Terrain::Rigid),
            'W' => Some(Terrain::Wood),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PowerUp {
    ExtraBomb,
    BlastRadius,
    Kick,
}

impl PowerUp {
    pub const ALL: [PowerUp; 3] = [PowerUp::ExtraBomb, PowerUp::BlastRadius, PowerUp::Kick];

    pub fn token(self) -> &'static str {
        match self {
            PowerUp::ExtraBomb => "extrabomb",
            PowerUp::BlastRadius => "radius",
            PowerUp::Kick => "kick",
        }
    }

    pub fn from_token(s: &str) -> Option<PowerUp> {
        PowerUp::ALL.iter().copied().find(|p| p.token() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bomb {
    /// Unique within an episode; assigned in placement order.
    pub id: u32,
    pub pos: Pos,
    pub owner: u8,
    pub life: u8,
    pub blast_radius: u8,
    pub moving: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flame {
    pub pos: Pos,
    pub life: u8,
    /// Bit `i` set when agent `i`'s bomb contributed to this flame.
    pub owners: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentState {
    pub pos: Pos,
    pub alive: bool,
    pub ammo: u8,
    pub max_ammo: u8,
    pub blast_radius: u8,
    pub can_kick: bool,
}

impl AgentState {
    pub fn fresh(pos: Pos) -> AgentState {
        AgentState { pos, alive: true, ammo: 1, max_ammo: 1, blast_radius: 2, can_kick: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GameState {
    pub size: usize,
    /// Row-major, `size * size` cells.
    pub terrain: Vec<Terrain>,
    /// Sorted by position. Entries under wood are hidden until the wood burns.
    pub powerups: Vec<(Pos, PowerUp)>,
    pub bombs: Vec<Bomb>,
    pub flames: Vec<Flame>,
    pub agents: [AgentState; NUM_AGENTS],
    pub timestep: u32,
    pub max_steps: u32,
    pub next_bomb_id: u32,
}

impl GameState {
    /// An all-passage board with both agents at the given cells.
    pub fn open(size: usize, a0: Pos, a1: Pos) -> GameState {
        GameState {
            size,
            terrain: vec![Terrain::Passage; size * size],
            powerups: Vec::new(),
            bombs: Vec::new(),
            flames: Vec::new(),
            agents: [AgentState::fresh(a0), AgentState::fresh(a1)],
            timestep: 0,
            max_steps: DEFAULT_MAX_STEPS,
            next_bomb_id: 0,
        }
    }

    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.size && (y as usize) < self.size
    }

    pub fn terrain_at(&self, p: Pos) -> Terrain {
        self.terrain[p.index(self.size)]
    }

    pub fn set_terrain(&mut self, p: Pos, t: Terrain) {
        let idx = p.index(self.size);
        self.terrain[idx] = t;
    }

    pub fn bomb_at(&self, p: Pos) -> Option<&Bomb> {
        self.bombs.iter().find(|b| b.pos == p)
    }

    pub fn has_bomb(&self, p: Pos) -> bool {
        self.bombs.iter().any(|b| b.pos == p)
    }

    pub fn flame_at(&self, p: Pos) -> Option<&Flame> {
        self.flames.iter().find(|f| f.pos == p)
    }

    pub fn powerup_at(&self, p: Pos) -> Option<PowerUp> {
        self.powerups.binary_search_by(|(q, _)| q.cmp(&p)).ok().map(|i| self.powerups[i].1)
    }

    /// A power-up lying on a passage cell (not hidden under wood).
    pub fn revealed_powerup_at(&self, p: Pos) -> Option<PowerUp> {
        if self.terrain_at(p) == Terrain::Passage {
            self.powerup_at(p)
        } else {
            None
        }
    }

    pub fn insert_powerup(&mut self, p: Pos, kind: PowerUp) {
        match self.powerups.binary_search_by(|(q, _)| q.cmp(&p)) {
            Ok(i) => self.powerups[i].1 = kind,
            Err(i) => self.powerups.insert(i, (p, kind)),
        }
    }

    pub fn remove_powerup(&mut self, p: Pos) -> Option<PowerUp> {
        match self.powerups.binary_search_by(|(q, _)| q.cmp(&p)) {
            Ok(i) => Some(self.powerups.remove(i).1),
            Err(_) => None,
        }
    }

    /// Alive agent standing on `p`, if any.
    pub fn agent_at(&self, p: Pos) -> Option<usize> {
        self.agents.iter().position(|a| a.alive && a.pos == p)
    }

    pub fn alive_count(&self) -> usize {
        self.agents.iter().filter(|a| a.alive).count()
    }

    pub fn is_terminal(&self) -> bool {
        self.agents.iter().any(|a| !a.alive) || self.timestep >= self.max_steps
    }

    /// Terminal rewards: winner +1 / loser -1, everything else (both dead,
    /// timeout) -1 for both. `None` while the episode is running.
    pub fn terminal_rewards(&self) -> Option<[i8; NUM_AGENTS]> {
        if !self.is_terminal() {
            return None;
        }
        Some(match (self.agents[0].alive, self.agents[1].alive) {
            (true, false) => [1, -1],
            (false, true) => [-1, 1],
            _ => [-1, -1],
        })
    }

    pub fn opponent_of(agent: usize) -> usize {
        1 - agent
    }

    /// Number of live bombs owned by `agent`.
    pub fn bombs_owned(&self, agent: usize) -> usize {
        self.bombs.iter().filter(|b| b.owner as usize == agent).count()
    }

    /// A cell a kicked bomb may slide into.
    pub(crate) fn free_for_bomb(&self, p: Pos) -> bool {
        self.terrain_at(p) == Terrain::Passage && !self.has_bomb(p) && self.agent_at(p).is_none()
    }

    /// Legal actions for an alive agent.
    pub fn legal_actions(&self, agent: usize) -> Result<ActionSet, EnvError> {
        let a = self.agents.get(agent).ok_or(EnvError::BadAgent(agent))?;
        if !a.alive {
            return Err(EnvError::DeadAgent(agent));
        }
        let mut set = ActionSet::EMPTY.with(Action::Stop);
        for dir in Direction::ALL {
            let Some(target) = a.pos.offset(dir, self.size) else { continue };
            if self.terrain_at(target) != Terrain::Passage {
                continue;
            }
            let ok = if self.has_bomb(target) {
                a.can_kick && target.offset(dir, self.size).is_some_and(|beyond| self.free_for_bomb(beyond))
            } else {
                true
            };
            if ok {
                set = set.with(dir.action());
            }
        }
        if a.ammo > 0 && !self.has_bomb(a.pos) {
            set = set.with(Action::PlaceBomb);
        }
        Ok(set)
    }
}

/// Compact set of actions, iterated in ascending code order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct ActionSet(u8);

impl ActionSet {
    pub const EMPTY: ActionSet = ActionSet(0);
    pub const ALL: ActionSet = ActionSet(0b11_1111);

    pub fn with(self, a: Action) -> ActionSet {
        ActionSet(self.0 | (1 << a.code()))
    }

    pub fn without(self, a: Action) -> ActionSet {
        ActionSet(self.0 & !(1 << a.code()))
    }

    pub fn contains(self, a: Action) -> bool {
        self.0 & (1 << a.code()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn first(self) -> Option<Action> {
        if self.0 == 0 {
            None
        } else {
            Action::from_code(self.0.trailing_zeros() as usize)
        }
    }

    /// The `n`-th member in ascending order.
    pub fn nth(self, n: usize) -> Option<Action> {
        self.iter().nth(n)
    }

    pub fn iter(self) -> impl Iterator<Item = Action> {
        Action::ALL.into_iter().filter(move |a| self.contains(*a))
    }
}

impl FromIterator<Action> for ActionSet {
    fn from_iter<I: IntoIterator<Item = Action>>(iter: I) -> Self {
        iter.into_iter().fold(ActionSet::EMPTY, ActionSet::with)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn walled_corner() -> GameState {
        let mut s = GameState::open(6, Pos::new(0, 0), Pos::new(5, 5));
        s.set_terrain(Pos::new(1, 0), Terrain::Rigid);
        s.set_terrain(Pos::new(0, 1), Terrain::Rigid);
        s
    }

    #[test]
    fn action_codes_are_stable() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.code(), i);
            assert_eq!(Action::from_code(i), Some(*a));
            assert_eq!(Action::parse(a.name()), Some(*a));
        }
        assert_eq!(Action::from_code(6), None);
    }

    #[test]
    fn open_interior_has_all_actions() {
        let s = GameState::open(6, Pos::new(2, 2), Pos::new(5, 5));
        assert_eq!(s.legal_actions(0).unwrap(), ActionSet::ALL);
    }

    #[test]
    fn walled_corner_without_ammo_only_stops() {
        let mut s = walled_corner();
        s.agents[0].ammo = 0;
        let legal = s.legal_actions(0).unwrap();
        assert_eq!(legal.iter().collect::<Vec<_>>(), vec![Action::Stop]);
    }

    #[test]
    fn kick_makes_bomb_cell_enterable() {
        let mut s = GameState::open(6, Pos::new(1, 2), Pos::new(5, 5));
        s.bombs.push(Bomb { id: 0, pos: Pos::new(2, 2), owner: 1, life: 5, blast_radius: 2, moving: None });
        assert!(!s.legal_actions(0).unwrap().contains(Action::MoveRight));
        s.agents[0].can_kick = true;
        assert!(s.legal_actions(0).unwrap().contains(Action::MoveRight));
        // Blocked beyond: no kick.
        s.set_terrain(Pos::new(3, 2), Terrain::Wood);
        assert!(!s.legal_actions(0).unwrap().contains(Action::MoveRight));
    }

    #[test]
    fn bomb_under_agent_blocks_placement() {
        let mut s = GameState::open(6, Pos::new(2, 2), Pos::new(5, 5));
        s.agents[0].ammo = 2;
        s.bombs.push(Bomb { id: 0, pos: Pos::new(2, 2), owner: 0, life: 5, blast_radius: 2, moving: None });
        assert!(!s.legal_actions(0).unwrap().contains(Action::PlaceBomb));
    }

    #[test]
    fn dead_agent_has_no_legal_actions() {
        let mut s = GameState::open(6, Pos::new(2, 2), Pos::new(5, 5));
        s.agents[1].alive = false;
        assert_eq!(s.legal_actions(1), Err(EnvError::DeadAgent(1)));
        assert_eq!(s.legal_actions(2), Err(EnvError::BadAgent(2)));
    }

    #[test]
    fn terminal_reward_table() {
        let mut s = GameState::open(6, Pos::new(0, 0), Pos::new(5, 5));
        assert_eq!(s.terminal_rewards(), None);
        s.agents[1].alive = false;
        assert_eq!(s.terminal_rewards(), Some([1, -1]));
        s.agents[0].alive = false;
        assert_eq!(s.terminal_rewards(), Some([-1, -1]));
        let mut t = GameState::open(6, Pos::new(0, 0), Pos::new(5, 5));
        t.timestep = t.max_steps;
        assert_eq!(t.terminal_rewards(), Some([-1, -1]));
    }
}

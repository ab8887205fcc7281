//! Scripted opponents and the common agent interface.

use alloc::boxed::Box;
use alloc::collections::{BinaryHeap, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::env::{blast_cells, encode_observation, Action, Bomb, Direction, GameState, Pos, Terrain, BOMB_LIFE, FLAME_LIFE};
use crate::mcts::{self, OpponentModel, SearchConfig, UniformRandom};
use crate::nn::NetworkParams;
use crate::{mix_seed, rng_from_seed, Rng};

/// Steps simulated ahead when looking for flames.
pub const DANGER_HORIZON: usize = 12;
/// Extra path cost of a wood cell, which has to be bombed first.
pub const WOOD_PATH_COST: u32 = 4;

pub trait AgentPolicy {
    /// A legal action for `agent`, which must be alive.
    fn act(&mut self, state: &GameState, agent: usize) -> Action;
    /// Called before each episode.
    fn reset(&mut self, _seed: u64) {}
    fn name(&self) -> String;
}

impl<P: AgentPolicy + ?Sized> AgentPolicy for Box<P> {
    fn act(&mut self, state: &GameState, agent: usize) -> Action {
        (**self).act(state, agent)
    }
    fn reset(&mut self, seed: u64) {
        (**self).reset(seed)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

fn guard(state: &GameState, agent: usize, a: Action) -> Action {
    match state.legal_actions(agent) {
        Ok(set) if set.contains(a) => a,
        _ => Action::Stop,
    }
}

pub fn static_act(_: &GameState, _: usize) -> Action {
    Action::Stop
}

/// Always stays put.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticAgent;

impl AgentPolicy for StaticAgent {
    fn act(&mut self, state: &GameState, agent: usize) -> Action {
        static_act(state, agent)
    }
    fn name(&self) -> String {
        "static".into()
    }
}

/// Uniform over legal actions.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: Rng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent { rng: rng_from_seed(seed) }
    }
}

impl AgentPolicy for RandomAgent {
    fn act(&mut self, state: &GameState, agent: usize) -> Action {
        mcts::random_legal(state, agent, &mut self.rng)
    }
    fn reset(&mut self, seed: u64) {
        self.rng = rng_from_seed(seed);
    }
    fn name(&self) -> String {
        "random".into()
    }
}

/// Plays the planner's choice at every step.
#[derive(Debug, Clone)]
pub struct MctsAgent {
    pub config: SearchConfig,
    base_seed: u64,
    calls: u64,
}

impl MctsAgent {
    pub fn new(config: SearchConfig) -> Self {
        MctsAgent { base_seed: config.seed, config, calls: 0 }
    }
}

impl AgentPolicy for MctsAgent {
    fn act(&mut self, state: &GameState, agent: usize) -> Action {
        let cfg = SearchConfig { seed: mix_seed(self.base_seed, self.calls), ..self.config };
        self.calls += 1;
        let a = mcts::search(state, agent, &cfg, &mut UniformRandom).unwrap_or(Action::Stop);
        guard(state, agent, a)
    }
    fn reset(&mut self, seed: u64) {
        self.base_seed = seed;
        self.calls = 0;
    }
    fn name(&self) -> String {
        format!("mcts:{}", self.config.rollouts_per_move)
    }
}

/// Plays a network's policy restricted to legal actions: the most probable
/// one, or a sample when `greedy` is off.
#[derive(Debug, Clone)]
pub struct NetAgent {
    pub params: NetworkParams<f32>,
    pub greedy: bool,
    rng: Rng,
}

impl NetAgent {
    pub fn new(params: NetworkParams<f32>, greedy: bool, seed: u64) -> Self {
        NetAgent { params, greedy, rng: rng_from_seed(seed) }
    }
}

impl AgentPolicy for NetAgent {
    fn act(&mut self, state: &GameState, agent: usize) -> Action {
        let Ok(legal) = state.legal_actions(agent) else { return Action::Stop };
        let Ok(out) = self.params.predict(&encode_observation(state, agent)) else { return Action::Stop };
        if self.greedy {
            let mut best = (Action::Stop, f32::NEG_INFINITY);
            for a in legal.iter() {
                if out.policy[a.code()] > best.1 {
                    best = (a, out.policy[a.code()]);
                }
            }
            best.0
        } else {
            let total: f32 = legal.iter().map(|a| out.policy[a.code()]).sum();
            let mut r = self.rng.gen::<f32>() * total;
            let mut last = Action::Stop;
            for a in legal.iter() {
                last = a;
                r -= out.policy[a.code()];
                if r < 0.0 {
                    return a;
                }
            }
            last
        }
    }
    fn reset(&mut self, seed: u64) {
        self.rng = rng_from_seed(seed);
    }
    fn name(&self) -> String {
        "net".into()
    }
}

/// Wraps any agent policy as a planner opponent model.
pub struct PolicyModel<P>(pub P);

impl<P: AgentPolicy> OpponentModel for PolicyModel<P> {
    fn sample(&mut self, state: &GameState, agent: usize, _: &mut Rng) -> Action {
        self.0.act(state, agent)
    }
}

/// Per-cell flame schedule over the next [`DANGER_HORIZON`] steps, assuming
/// nobody moves or places a bomb.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DangerMap {
    pub size: usize,
    /// Bit `t` set when the cell is burning `t` steps from now.
    pub burning: Vec<u16>,
}

impl DangerMap {
    pub const NEVER: u8 = u8::MAX;

    /// Steps until the cell first burns; 0 if it is burning now.
    pub fn time_to_flame(&self, p: Pos) -> u8 {
        let m = self.burning[p.index(self.size)];
        if m == 0 {
            DangerMap::NEVER
        } else {
            m.trailing_zeros() as u8
        }
    }

    pub fn burning_at(&self, p: Pos, t: usize) -> bool {
        t <= DANGER_HORIZON && self.burning[p.index(self.size)] & (1 << t) != 0
    }

    /// No flame on the cell at time `t` or later.
    pub fn safe_from(&self, p: Pos, t: usize) -> bool {
        t > DANGER_HORIZON || self.burning[p.index(self.size)] >> t == 0
    }

    pub fn values(&self) -> Vec<u8> {
        (0..self.size * self.size).map(|i| self.time_to_flame(Pos::from_index(i, self.size))).collect()
    }
}

/// Simulates bomb fuses, sliding bombs, chain reactions, burning wood and
/// flame decay forward from `state` with both agents standing still.
pub fn danger_map(state: &GameState) -> DangerMap {
    let n = state.size * state.size;
    let mut burning = vec![0u16; n];
    for f in &state.flames {
        burning[f.pos.index(state.size)] |= 1;
    }
    if state.bombs.is_empty() && state.flames.is_empty() {
        return DangerMap { size: state.size, burning };
    }

    let mut sim = state.clone();
    let mut flames: Vec<(Pos, u8)> = sim.flames.iter().map(|f| (f.pos, f.life)).collect();
    let blocked = |s: &GameState, p: Pos| s.terrain_at(p) != Terrain::Passage || s.has_bomb(p) || s.agents.iter().any(|a| a.alive && a.pos == p);
    let mut cells = Vec::new();
    for t in 1..=DANGER_HORIZON {
        for b in &mut sim.bombs {
            b.life = b.life.saturating_sub(1);
        }
        for k in 0..sim.bombs.len() {
            let Some(dir) = sim.bombs[k].moving else { continue };
            match sim.bombs[k].pos.offset(dir, sim.size) {
                Some(next) if !blocked(&sim, next) => sim.bombs[k].pos = next,
                _ => sim.bombs[k].moving = None,
            }
        }

        let mut exploding: Vec<bool> = sim.bombs.iter().map(|b| b.life == 0 || flames.iter().any(|(p, _)| *p == b.pos)).collect();
        let mut queue: Vec<usize> = (0..sim.bombs.len()).filter(|&k| exploding[k]).collect();
        let mut burn = vec![false; n];
        while let Some(k) = queue.pop() {
            cells.clear();
            blast_cells(&sim, sim.bombs[k].pos, sim.bombs[k].blast_radius, &mut cells);
            for c in &cells {
                burn[c.index(sim.size)] = true;
                for (j, other) in sim.bombs.iter().enumerate() {
                    if !exploding[j] && other.pos == *c {
                        exploding[j] = true;
                        queue.push(j);
                    }
                }
            }
        }
        let mut k = 0;
        sim.bombs.retain(|_| {
            k += 1;
            !exploding[k - 1]
        });
        for (idx, &b) in burn.iter().enumerate() {
            if b && sim.terrain[idx] == Terrain::Wood {
                sim.terrain[idx] = Terrain::Passage;
            }
        }

        flames.retain_mut(|(_, life)| {
            *life -= 1;
            *life > 0
        });
        for (idx, &b) in burn.iter().enumerate() {
            if !b {
                continue;
            }
            let p = Pos::from_index(idx, sim.size);
            match flames.iter_mut().find(|(q, _)| *q == p) {
                Some(f) => f.1 = FLAME_LIFE,
                None => flames.push((p, FLAME_LIFE)),
            }
        }
        for (p, _) in &flames {
            burning[p.index(sim.size)] |= 1 << t;
        }
        if sim.bombs.is_empty() && flames.is_empty() {
            break;
        }
    }
    DangerMap { size: state.size, burning }
}

/// Rule-based surrogate opponent: escape danger, bomb a nearby opponent,
/// collect power-ups, dig toward the opponent, otherwise wait.
#[derive(Debug, Clone)]
pub struct RuleBasedAgent {
    rng: Rng,
}

impl RuleBasedAgent {
    pub fn new(seed: u64) -> Self {
        RuleBasedAgent { rng: rng_from_seed(seed) }
    }
}

impl AgentPolicy for RuleBasedAgent {
    fn act(&mut self, state: &GameState, agent: usize) -> Action {
        let a = rulebased_act(state, agent, &mut self.rng);
        guard(state, agent, a)
    }
    fn reset(&mut self, seed: u64) {
        self.rng = rng_from_seed(seed);
    }
    fn name(&self) -> String {
        "rulebased".into()
    }
}

/// Cells an agent may step into, judged on the current board.
fn walkable(state: &GameState, p: Pos, me: usize) -> bool {
    state.terrain_at(p) == Terrain::Passage && !state.has_bomb(p) && !state.agents.iter().enumerate().any(|(i, a)| i != me && a.alive && a.pos == p)
}

fn shuffled_dirs(rng: &mut Rng) -> [Direction; 4] {
    let mut d = Direction::ALL;
    d.shuffle(rng);
    d
}

/// Earliest way out of danger in a time-expanded grid: each step the agent
/// moves or waits, never standing on a burning cell, until it reaches a cell
/// that stays clear for the rest of the horizon. Returns the first move.
fn escape_move(state: &GameState, me: usize, from: Pos, t0: usize, danger: &DangerMap, rng: &mut Rng) -> Option<Action> {
    let size = state.size;
    let layers = DANGER_HORIZON + 1;
    let mut first: Vec<Option<Action>> = vec![None; size * size * layers];
    let mut seen = vec![false; size * size * layers];
    let key = |p: Pos, t: usize| t * size * size + p.index(size);
    if danger.burning_at(from, t0) {
        return None;
    }
    if danger.safe_from(from, t0) {
        return Some(Action::Stop);
    }
    let mut queue = VecDeque::new();
    queue.push_back((from, t0));
    seen[key(from, t0)] = true;
    while let Some((p, t)) = queue.pop_front() {
        if t >= DANGER_HORIZON {
            continue;
        }
        let mut nexts: Vec<(Pos, Action)> = vec![(p, Action::Stop)];
        for d in shuffled_dirs(rng) {
            if let Some(q) = p.offset(d, size) {
                if walkable(state, q, me) {
                    nexts.push((q, d.action()));
                }
            }
        }
        nexts[1..].shuffle(rng);
        for (q, a) in nexts {
            let nt = t + 1;
            if danger.burning_at(q, nt) || seen[key(q, nt)] {
                continue;
            }
            seen[key(q, nt)] = true;
            let fm = if t == t0 { Some(a) } else { first[key(p, t)] };
            first[key(q, nt)] = fm;
            if danger.safe_from(q, nt) {
                return fm;
            }
            queue.push_back((q, nt));
        }
    }
    None
}

/// Whether an agent standing on `p` at time `t` can stay alive.
fn survivable(state: &GameState, me: usize, p: Pos, t: usize, danger: &DangerMap, rng: &mut Rng) -> bool {
    escape_move(state, me, p, t, danger, rng).is_some()
}

/// Shortest-path first moves from `from` under unit costs plus `wood_cost`
/// for wood cells (0 disables wood). Returns per-cell (distance, first move).
fn dijkstra(state: &GameState, me: usize, from: Pos, wood_cost: u32, rng: &mut Rng) -> Vec<Option<(u32, Direction)>> {
    let size = state.size;
    let mut best: Vec<Option<(u32, Direction)>> = vec![None; size * size];
    let mut dist = vec![u32::MAX; size * size];
    let mut heap = BinaryHeap::new();
    dist[from.index(size)] = 0;
    // The random tiebreak key makes equal-length paths compete fairly.
    heap.push(Reverse((0u32, rng.gen::<u32>(), from.index(size))));
    while let Some(Reverse((d, _, idx))) = heap.pop() {
        if d > dist[idx] {
            continue;
        }
        let p = Pos::from_index(idx, size);
        for dir in shuffled_dirs(rng) {
            let Some(q) = p.offset(dir, size) else { continue };
            let step = match state.terrain_at(q) {
                Terrain::Rigid => continue,
                Terrain::Wood if wood_cost == 0 => continue,
                Terrain::Wood => 1 + wood_cost,
                Terrain::Passage if state.has_bomb(q) => continue,
                Terrain::Passage => 1,
            };
            if state.agents.iter().enumerate().any(|(i, a)| i != me && a.alive && a.pos == q) {
                // The opponent's cell is a destination, never a waypoint.
                let nd = d + step;
                if nd < dist[q.index(size)] {
                    dist[q.index(size)] = nd;
                    best[q.index(size)] = Some((nd, if p == from { dir } else { best[idx].map(|b| b.1).unwrap_or(dir) }));
                }
                continue;
            }
            let nd = d + step;
            let qi = q.index(size);
            if nd < dist[qi] {
                dist[qi] = nd;
                let fm = if p == from { dir } else { best[idx].map(|b| b.1).unwrap_or(dir) };
                best[qi] = Some((nd, fm));
                heap.push(Reverse((nd, rng.gen::<u32>(), qi)));
            }
        }
    }
    best
}

fn with_bomb(state: &GameState, me: usize) -> GameState {
    let mut s = state.clone();
    let a = &s.agents[me];
    s.bombs.push(Bomb { id: u32::MAX, pos: a.pos, owner: me as u8, life: BOMB_LIFE, blast_radius: a.blast_radius, moving: None });
    s
}

/// Placing a bomb here still leaves a way out.
fn bomb_retreat_exists(state: &GameState, me: usize, rng: &mut Rng) -> bool {
    let agent = &state.agents[me];
    if agent.ammo == 0 || state.has_bomb(agent.pos) {
        return false;
    }
    let hyp = with_bomb(state, me);
    let danger = danger_map(&hyp);
    survivable(&hyp, me, agent.pos, 1, &danger, rng)
}

pub fn rulebased_act(state: &GameState, me: usize, rng: &mut Rng) -> Action {
    let agent = &state.agents[me];
    if !agent.alive {
        return Action::Stop;
    }
    let size = state.size;
    let pos = agent.pos;
    let danger = danger_map(state);
    let safe_step = |rng: &mut Rng, dir: Direction| -> bool {
        pos.offset(dir, size).is_some_and(|q| walkable(state, q, me) && survivable(state, me, q, 1, &danger, rng))
    };

    // 1. Threatened: run.
    if !danger.safe_from(pos, 0) {
        if let Some(a) = escape_move(state, me, pos, 0, &danger, rng) {
            return a;
        }
    }

    // 2. Opponent within reach of our blast.
    let opp = &state.agents[GameState::opponent_of(me)];
    if opp.alive && pos.manhattan(opp.pos) <= agent.blast_radius as u32 && bomb_retreat_exists(state, me, rng) {
        return Action::PlaceBomb;
    }

    // 3. Nearest reachable power-up.
    let paths = dijkstra(state, me, pos, 0, rng);
    let target = state
        .powerups
        .iter()
        .filter(|(p, _)| state.terrain_at(*p) == Terrain::Passage && *p != pos)
        .filter_map(|(p, _)| paths[p.index(size)])
        .min_by_key(|(d, _)| *d);
    if let Some((_, dir)) = target {
        if safe_step(rng, dir) {
            return dir.action();
        }
    }

    // 4. Dig toward the opponent.
    if opp.alive {
        let paths = dijkstra(state, me, pos, WOOD_PATH_COST, rng);
        if let Some((_, dir)) = paths[opp.pos.index(size)] {
            if let Some(next) = pos.offset(dir, size) {
                if state.terrain_at(next) == Terrain::Wood {
                    if bomb_retreat_exists(state, me, rng) {
                        return Action::PlaceBomb;
                    }
                } else if next != opp.pos && safe_step(rng, dir) {
                    return dir.action();
                }
            }
        }
    }

    // 5. Wait, unless waiting is fatal.
    if survivable(state, me, pos, 1, &danger, rng) {
        return Action::Stop;
    }
    for dir in shuffled_dirs(rng) {
        if safe_step(rng, dir) {
            return dir.action();
        }
    }
    Action::Stop
}

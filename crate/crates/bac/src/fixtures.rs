//! Small search positions with a single surviving first move, and the
//! exhaustive check that certifies them.
//!
//! The opponent sits in a sealed corner pocket with no ammunition, so its
//! only legal move is `stop` and the random-opponent model collapses to one
//! branch. A position qualifies when exactly one of our first moves leaves a
//! line that survives the full horizon, every other first move dies on all
//! lines, and no line kills the opponent.

use std::collections::HashMap;

use bac_core::env::{Action, AgentState, Bomb, GameState, Pos, Terrain, NUM_AGENTS};
use bac_core::{rng_from_seed, Rng};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::snapshot::{self, SnapshotError};

pub const HORIZON: u32 = 12;
const AGENT: usize = 0;

/// Flat encoding of everything that affects future play (timestep aside).
fn key(s: &GameState) -> Vec<u8> {
    let mut k = Vec::with_capacity(64);
    k.extend(s.terrain.iter().map(|t| *t as u8));
    for a in &s.agents {
        k.extend_from_slice(&[a.pos.x, a.pos.y, a.alive as u8, a.ammo, a.max_ammo, a.blast_radius, a.can_kick as u8]);
    }
    for b in &s.bombs {
        k.extend_from_slice(&[b'b', b.pos.x, b.pos.y, b.owner, b.life, b.blast_radius, b.moving.map_or(9, |d| d as u8)]);
    }
    for f in &s.flames {
        k.extend_from_slice(&[b'f', f.pos.x, f.pos.y, f.life, f.owners]);
    }
    for (p, kind) in &s.powerups {
        k.extend_from_slice(&[b'p', p.x, p.y, *kind as u8]);
    }
    k
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Reach {
    /// Some line keeps our agent alive for the remaining depth.
    can_survive: bool,
    /// Some line kills the opponent.
    opponent_can_die: bool,
}

struct Oracle {
    memo: HashMap<(Vec<u8>, u32), Reach>,
}

impl Oracle {
    fn explore(&mut self, s: &GameState, depth: u32) -> Reach {
        if !s.agents[AGENT].alive {
            return Reach { can_survive: false, opponent_can_die: !s.agents[1].alive };
        }
        if !s.agents[1].alive {
            return Reach { can_survive: true, opponent_can_die: true };
        }
        if depth == 0 {
            return Reach { can_survive: true, opponent_can_die: false };
        }
        let k = (key(s), depth);
        if let Some(r) = self.memo.get(&k) {
            return *r;
        }
        let mut acc = Reach::default();
        for a in s.legal_actions(AGENT).expect("alive").iter() {
            let r = self.after(s, a, depth);
            acc.can_survive |= r.can_survive;
            acc.opponent_can_die |= r.opponent_can_die;
        }
        self.memo.insert(k, acc);
        acc
    }

    fn after(&mut self, s: &GameState, a: Action, depth: u32) -> Reach {
        let mut joint = [Action::Stop; NUM_AGENTS];
        joint[AGENT] = a;
        let r = s.step(joint).expect("non-terminal");
        self.explore(&r.state, depth - 1)
    }
}

/// The unique surviving first move, if the position qualifies.
pub fn dominant_action(s: &GameState) -> Option<Action> {
    if s.is_terminal() || s.legal_actions(1).ok()? != bac_core::env::ActionSet::EMPTY.with(Action::Stop) {
        return None;
    }
    let mut o = Oracle { memo: HashMap::new() };
    let mut winner = None;
    for a in s.legal_actions(AGENT).ok()?.iter() {
        let r = o.after(s, a, HORIZON);
        if r.opponent_can_die {
            return None;
        }
        if r.can_survive {
            if winner.is_some() {
                return None;
            }
            winner = Some(a);
        }
    }
    winner
}

fn random_position(rng: &mut Rng) -> GameState {
    let size = 5;
    let opp = Pos::new(4, 4);
    let mut cells: Vec<Pos> = (0..size * size).map(|i| Pos::from_index(i, size)).filter(|p| p.x + p.y < 7).collect();
    cells.shuffle(rng);
    let me = cells.pop().expect("cells");
    let mut s = GameState::open(size, me, opp);
    s.set_terrain(Pos::new(3, 4), Terrain::Rigid);
    s.set_terrain(Pos::new(4, 3), Terrain::Rigid);
    for _ in 0..rng.gen_range(0..=4) {
        if let Some(p) = cells.pop() {
            s.set_terrain(p, Terrain::Rigid);
        }
    }
    for _ in 0..rng.gen_range(0..=4) {
        if let Some(p) = cells.pop() {
            s.set_terrain(p, Terrain::Wood);
        }
    }
    let n_bombs = rng.gen_range(1..=3);
    let mut bomb_cells = vec![me];
    bomb_cells.extend(cells.iter().rev().take(n_bombs - 1).copied());
    let mut owned = [0u8; NUM_AGENTS];
    for (i, p) in bomb_cells.into_iter().enumerate() {
        let owner = if i == 0 { 0 } else { rng.gen_range(0..NUM_AGENTS) } as u8;
        owned[owner as usize] += 1;
        s.bombs.push(Bomb { id: i as u32, pos: p, owner, life: rng.gen_range(2..=9), blast_radius: rng.gen_range(2..=3), moving: None });
    }
    s.next_bomb_id = s.bombs.len() as u32;
    let ammo = rng.gen_range(0..=1);
    s.agents[0] = AgentState { pos: me, alive: true, ammo, max_ammo: ammo + owned[0], blast_radius: 2, can_kick: false };
    s.agents[1] = AgentState { pos: opp, alive: true, ammo: 0, max_ammo: owned[1], blast_radius: 2, can_kick: false };
    s
}

/// Searches seeded random positions for `count` certified ones, at most
/// `per_action` sharing the same dominant action.
pub fn generate(count: usize, per_action: usize, seed: u64) -> Vec<(GameState, Action)> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    let mut used = [0usize; Action::COUNT];
    while out.len() < count {
        let s = random_position(&mut rng);
        if let Some(a) = dominant_action(&s) {
            if used[a.code()] < per_action {
                used[a.code()] += 1;
                out.push((s, a));
            }
        }
    }
    out
}

/// Fixture files hold snapshots separated by `---` lines, each preceded by
/// a `# dominant <action>` comment.
pub fn to_text(fixtures: &[(GameState, Action)]) -> String {
    let mut out = String::new();
    for (i, (s, a)) in fixtures.iter().enumerate() {
        if i > 0 {
            out.push_str("---\n");
        }
        out.push_str(&format!("# dominant {a}\n"));
        out.push_str(&snapshot::serialize(s));
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<(GameState, Action)>, SnapshotError> {
    let mut out = Vec::new();
    for (i, chunk) in text.split("\n---\n").enumerate() {
        let declared = chunk
            .lines()
            .find_map(|l| l.strip_prefix("# dominant "))
            .and_then(|t| Action::parse(t.trim()))
            .ok_or_else(|| SnapshotError::Invalid(format!("fixture {i}: missing `# dominant <action>` line")))?;
        out.push((snapshot::parse(chunk)?, declared));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapped_agent_has_one_escape() {
        // Our own bomb goes off in two steps; `down` then `right` reaches
        // the sealed cell at (1, 1) just in time.
        let mut s = GameState::open(5, Pos::new(0, 0), Pos::new(4, 4));
        for p in [(3, 4), (4, 3), (1, 0), (1, 2), (2, 1), (0, 3)] {
            s.set_terrain(Pos::new(p.0, p.1), Terrain::Rigid);
        }
        s.bombs.push(Bomb { id: 0, pos: Pos::new(0, 0), owner: 0, life: 2, blast_radius: 3, moving: None });
        s.next_bomb_id = 1;
        s.agents[0].ammo = 0;
        s.agents[1].ammo = 0;
        s.agents[1].max_ammo = 0;
        assert_eq!(dominant_action(&s), Some(Action::MoveDown));
    }

    #[test]
    fn text_round_trips() {
        let fx = generate(3, 3, 11);
        let back = parse(&to_text(&fx)).unwrap();
        assert_eq!(back, fx);
    }
}

use alloc::vec;
use alloc::vec::Vec;

use super::{Action, Bomb, Direction, EnvError, Flame, GameState, Pos, PowerUp, Terrain, BOMB_LIFE, FLAME_LIFE, NUM_AGENTS};

/// An agent death, with the owners of the flame that caused it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Death {
    pub agent: usize,
    pub pos: Pos,
    /// Bit `i` set when agent `i`'s bomb produced the flame on the death cell.
    pub killers: u8,
}

impl Death {
    /// True when the agent's own bomb contributed to the fatal flame.
    pub fn self_inflicted(&self) -> bool {
        self.killers & (1 << self.agent) != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    BombPlaced {
        id: u32,
        owner: usize,
        pos: Pos,
    },
    BombKicked {
        id: u32,
        by: usize,
        dir: Direction,
    },
    /// `chained` is set when the bomb went off before its fuse ran out.
    BombExploded {
        id: u32,
        owner: usize,
        pos: Pos,
        chained: bool,
        cells: Vec<Pos>,
    },
    WoodDestroyed {
        pos: Pos,
        revealed: Option<PowerUp>,
    },
    PowerUpBurned {
        pos: Pos,
        kind: PowerUp,
    },
    PowerUpCollected {
        agent: usize,
        pos: Pos,
        kind: PowerUp,
    },
    AgentDied(Death),
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: GameState,
    pub terminal: bool,
    /// Present only when `terminal`.
    pub rewards: Option<[i8; NUM_AGENTS]>,
    pub deaths: [Option<Death>; NUM_AGENTS],
    pub events: Vec<Event>,
}

/// Cells covered by a blast: the centre plus `radius - 1` cells per direction,
/// stopped by rigid walls and by the first wood cell (which burns).
pub(crate) fn blast_cells(state: &GameState, center: Pos, radius: u8, out: &mut Vec<Pos>) {
    out.push(center);
    for dir in Direction::ALL {
        let mut p = center;
        for _ in 1..radius {
            let Some(next) = p.offset(dir, state.size) else { break };
            match state.terrain_at(next) {
                Terrain::Rigid => break,
                Terrain::Wood => {
                    out.push(next);
                    break;
                }
                Terrain::Passage => {
                    out.push(next);
                    p = next;
                }
            }
        }
    }
}

impl GameState {
    /// Advances one timestep, returning the successor state and everything
    /// that happened on the way.
    pub fn step(&self, actions: [Action; NUM_AGENTS]) -> Result<StepResult, EnvError> {
        if self.is_terminal() {
            return Err(EnvError::TerminalState { timestep: self.timestep });
        }
        let mut state = self.clone();
        let mut events = Vec::new();
        let deaths = state.apply(actions, Some(&mut events));
        let terminal = state.is_terminal();
        let rewards = state.terminal_rewards();
        Ok(StepResult { state, terminal, rewards, deaths, events })
    }

    /// In-place step without event recording. Returns the deaths of this step.
    pub fn advance(&mut self, actions: [Action; NUM_AGENTS]) -> Result<[Option<Death>; NUM_AGENTS], EnvError> {
        if self.is_terminal() {
            return Err(EnvError::TerminalState { timestep: self.timestep });
        }
        Ok(self.apply(actions, None))
    }

    fn apply(&mut self, actions: [Action; NUM_AGENTS], mut events: Option<&mut Vec<Event>>) -> [Option<Death>; NUM_AGENTS] {
        self.phase_movement(actions, events.as_deref_mut());
        self.phase_placement(actions, events.as_deref_mut());
        self.phase_tick();
        let burn = self.phase_explosions(events.as_deref_mut());
        self.phase_flames(burn.as_deref());
        let deaths = self.phase_deaths(events.as_deref_mut());
        self.phase_pickups(events);
        self.timestep += 1;
        deaths
    }

    fn phase_movement(&mut self, actions: [Action; NUM_AGENTS], events: Option<&mut Vec<Event>>) {
        let size = self.size;
        let start = [self.agents[0].pos, self.agents[1].pos];
        let mut target = start;
        let mut kick: [Option<(usize, Direction)>; NUM_AGENTS] = [None; NUM_AGENTS];

        for (i, agent) in self.agents.iter().enumerate() {
            if !agent.alive {
                continue;
            }
            let Some(dir) = actions[i].direction() else { continue };
            let Some(t) = agent.pos.offset(dir, size) else { continue };
            if self.terrain_at(t) != Terrain::Passage {
                continue;
            }
            if let Some(bi) = self.bombs.iter().position(|b| b.pos == t) {
                let kickable = agent.can_kick && t.offset(dir, size).is_some_and(|beyond| self.free_for_bomb(beyond));
                if !kickable {
                    continue;
                }
                kick[i] = Some((bi, dir));
            }
            target[i] = t;
        }

        if self.agents.iter().all(|a| a.alive) {
            let swap = target[0] == start[1] && target[1] == start[0];
            if target[0] == target[1] || swap {
                target = start;
            }
            // Moving into a cell the other agent keeps occupying bounces back.
            loop {
                let mut changed = false;
                for i in 0..NUM_AGENTS {
                    let j = 1 - i;
                    if target[i] != start[i] && target[i] == target[j] {
                        target[i] = start[i];
                        changed = true;
                    }
                }
                if !changed {
                    break;
                }
            }
        }

        let mut events = events;
        for i in 0..NUM_AGENTS {
            if !self.agents[i].alive || target[i] == start[i] {
                continue;
            }
            self.agents[i].pos = target[i];
            if let Some((bi, dir)) = kick[i] {
                self.bombs[bi].moving = Some(dir);
                if let Some(ev) = events.as_deref_mut() {
                    ev.push(Event::BombKicked { id: self.bombs[bi].id, by: i, dir });
                }
            }
        }
    }

    fn phase_placement(&mut self, actions: [Action; NUM_AGENTS], mut events: Option<&mut Vec<Event>>) {
        for i in 0..NUM_AGENTS {
            let agent = &self.agents[i];
            if !agent.alive || actions[i] != Action::PlaceBomb || agent.ammo == 0 || self.has_bomb(agent.pos) {
                continue;
            }
            let bomb =
                Bomb { id: self.next_bomb_id, pos: agent.pos, owner: i as u8, life: BOMB_LIFE, blast_radius: agent.blast_radius, moving: None };
            self.next_bomb_id += 1;
            self.agents[i].ammo -= 1;
            if let Some(ev) = events.as_deref_mut() {
                ev.push(Event::BombPlaced { id: bomb.id, owner: i, pos: bomb.pos });
            }
            self.bombs.push(bomb);
        }
    }

    fn phase_tick(&mut self) {
        for b in &mut self.bombs {
            b.life = b.life.saturating_sub(1);
        }
        for k in 0..self.bombs.len() {
            let Some(dir) = self.bombs[k].moving else { continue };
            match self.bombs[k].pos.offset(dir, self.size) {
                Some(next) if self.free_for_bomb(next) => self.bombs[k].pos = next,
                _ => self.bombs[k].moving = None,
            }
        }
    }

    /// Detonates every bomb whose fuse ran out or that sits in a flame, plus
    /// everything reachable from those through blasts. Returns a per-cell
    /// owner mask of burning cells, or `None` if nothing exploded.
    fn phase_explosions(&mut self, mut events: Option<&mut Vec<Event>>) -> Option<Vec<u8>> {
        let n = self.bombs.len();
        let mut exploding = vec![false; n];
        let mut queue = Vec::new();
        for (k, b) in self.bombs.iter().enumerate() {
            if b.life == 0 || self.flame_at(b.pos).is_some() {
                exploding[k] = true;
                queue.push(k);
            }
        }
        if queue.is_empty() {
            return None;
        }

        let mut cells_of: Vec<Vec<Pos>> = vec![Vec::new(); n];
        while let Some(k) = queue.pop() {
            let mut cells = Vec::new();
            blast_cells(self, self.bombs[k].pos, self.bombs[k].blast_radius, &mut cells);
            for c in &cells {
                for (j, other) in self.bombs.iter().enumerate() {
                    if !exploding[j] && other.pos == *c {
                        exploding[j] = true;
                        queue.push(j);
                    }
                }
            }
            cells_of[k] = cells;
        }

        let mut burn = vec![0u8; self.size * self.size];
        for (k, b) in self.bombs.iter().enumerate() {
            if !exploding[k] {
                continue;
            }
            for c in &cells_of[k] {
                burn[c.index(self.size)] |= 1 << b.owner;
            }
            let owner = b.owner as usize;
            let agent = &mut self.agents[owner];
            agent.ammo = (agent.ammo + 1).min(agent.max_ammo);
            if let Some(ev) = events.as_deref_mut() {
                ev.push(Event::BombExploded { id: b.id, owner, pos: b.pos, chained: b.life > 0, cells: core::mem::take(&mut cells_of[k]) });
            }
        }
        let mut k = 0;
        self.bombs.retain(|_| {
            k += 1;
            !exploding[k - 1]
        });

        for idx in 0..burn.len() {
            if burn[idx] == 0 {
                continue;
            }
            let p = Pos::from_index(idx, self.size);
            match self.terrain[idx] {
                Terrain::Wood => {
                    self.terrain[idx] = Terrain::Passage;
                    if let Some(ev) = events.as_deref_mut() {
                        ev.push(Event::WoodDestroyed { pos: p, revealed: self.powerup_at(p) });
                    }
                }
                Terrain::Passage => {
                    if let Some(kind) = self.remove_powerup(p) {
                        if let Some(ev) = events.as_deref_mut() {
                            ev.push(Event::PowerUpBurned { pos: p, kind });
                        }
                    }
                }
                Terrain::Rigid => {}
            }
        }
        Some(burn)
    }

    fn phase_flames(&mut self, burn: Option<&[u8]>) {
        self.flames.retain_mut(|f| {
            f.life -= 1;
            f.life > 0
        });
        let Some(burn) = burn else { return };
        for (idx, &mask) in burn.iter().enumerate() {
            if mask == 0 {
                continue;
            }
            let p = Pos::from_index(idx, self.size);
            match self.flames.iter_mut().find(|f| f.pos == p) {
                Some(f) => {
                    f.life = FLAME_LIFE;
                    f.owners |= mask;
                }
                None => self.flames.push(Flame { pos: p, life: FLAME_LIFE, owners: mask }),
            }
        }
    }

    fn phase_deaths(&mut self, mut events: Option<&mut Vec<Event>>) -> [Option<Death>; NUM_AGENTS] {
        let mut deaths = [None; NUM_AGENTS];
        for i in 0..NUM_AGENTS {
            if !self.agents[i].alive {
                continue;
            }
            let pos = self.agents[i].pos;
            if let Some(f) = self.flame_at(pos) {
                let death = Death { agent: i, pos, killers: f.owners };
                self.agents[i].alive = false;
                deaths[i] = Some(death);
                if let Some(ev) = events.as_deref_mut() {
                    ev.push(Event::AgentDied(death));
                }
            }
        }
        deaths
    }

    fn phase_pickups(&mut self, mut events: Option<&mut Vec<Event>>) {
        for i in 0..NUM_AGENTS {
            if !self.agents[i].alive {
                continue;
            }
            let pos = self.agents[i].pos;
            if self.revealed_powerup_at(pos).is_none() {
                continue;
            }
            let Some(kind) = self.remove_powerup(pos) else { continue };
            let agent = &mut self.agents[i];
            match kind {
                PowerUp::ExtraBomb => {
                    agent.max_ammo = agent.max_ammo.saturating_add(1);
                    agent.ammo = agent.ammo.saturating_add(1);
                }
                PowerUp::BlastRadius => agent.blast_radius = agent.blast_radius.saturating_add(1),
                PowerUp::Kick => agent.can_kick = true,
            }
            if let Some(ev) = events.as_deref_mut() {
                ev.push(Event::PowerUpCollected { agent: i, pos, kind });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Action::*;

    fn open6() -> GameState {
        GameState::open(6, Pos::new(0, 0), Pos::new(5, 5))
    }

    fn bomb(id: u32, x: u8, y: u8, owner: u8, life: u8, radius: u8) -> Bomb {
        Bomb { id, pos: Pos::new(x, y), owner, life, blast_radius: radius, moving: None }
    }

    #[test]
    fn stop_stop_only_advances_time() {
        let s = open6();
        let r = s.step([Stop, Stop]).unwrap();
        assert!(!r.terminal);
        assert!(r.rewards.is_none());
        let mut expected = s.clone();
        expected.timestep += 1;
        assert_eq!(r.state, expected);
    }

    #[test]
    fn bomb_explodes_ten_steps_after_placement_and_flames_last_two() {
        let mut s = GameState::open(8, Pos::new(3, 3), Pos::new(7, 7));
        let t0 = s.timestep;
        s = s.step([PlaceBomb, Stop]).unwrap().state;
        // Walk away so the placer survives.
        for a in [MoveLeft, MoveLeft, MoveUp, MoveUp] {
            s = s.step([a, Stop]).unwrap().state;
        }
        let mut exploded_at = None;
        while exploded_at.is_none() {
            let r = s.step([Stop, Stop]).unwrap();
            if r.events.iter().any(|e| matches!(e, Event::BombExploded { .. })) {
                exploded_at = Some(r.state.timestep);
            }
            s = r.state;
        }
        assert_eq!(exploded_at, Some(t0 + 10));
        let centre = Pos::new(3, 3);
        assert_eq!(s.flame_at(centre).map(|f| f.life), Some(2));
        s = s.step([Stop, Stop]).unwrap().state;
        assert_eq!(s.timestep, t0 + 11);
        assert_eq!(s.flame_at(centre).map(|f| f.life), Some(1));
        s = s.step([Stop, Stop]).unwrap().state;
        assert_eq!(s.timestep, t0 + 12);
        assert!(s.flame_at(centre).is_none());
        assert_eq!(s.agents[0].ammo, 1);
    }

    #[test]
    fn chain_explosion_resolves_in_one_step() {
        let mut s = GameState::open(8, Pos::new(0, 7), Pos::new(7, 7));
        s.bombs.push(bomb(0, 2, 2, 0, 10, 3));
        s.bombs.push(bomb(1, 4, 2, 1, 3, 3));
        s.agents[0].ammo = 0;
        s.agents[1].ammo = 0;
        s.next_bomb_id = 2;
        s = s.step([Stop, Stop]).unwrap().state;
        s = s.step([Stop, Stop]).unwrap().state;
        let r = s.step([Stop, Stop]).unwrap();
        let exploded: Vec<_> = r
            .events
            .iter()
            .filter_map(|e| match e {
                Event::BombExploded { id, chained, .. } => Some((*id, *chained)),
                _ => None,
            })
            .collect();
        assert_eq!(exploded, vec![(0, true), (1, false)]);
        assert!(r.state.bombs.is_empty());
        assert_eq!(r.state.agents[0].ammo, 1);
        assert_eq!(r.state.agents[1].ammo, 1);
    }

    #[test]
    fn timeout_is_terminal_with_mutual_loss() {
        let mut s = open6();
        s.agents[0].ammo = 0;
        s.agents[1].ammo = 0;
        let mut last = None;
        while !s.is_terminal() {
            let r = s.step([Stop, Stop]).unwrap();
            s = r.state;
            last = Some((r.terminal, r.rewards));
        }
        assert_eq!(s.timestep, 800);
        assert_eq!(last, Some((true, Some([-1, -1]))));
        assert!(matches!(s.step([Stop, Stop]), Err(EnvError::TerminalState { timestep: 800 })));
    }

    #[test]
    fn blast_is_stopped_by_rigid_and_burns_first_wood() {
        let mut s = GameState::open(8, Pos::new(0, 7), Pos::new(7, 7));
        s.set_terrain(Pos::new(4, 3), Terrain::Rigid);
        s.set_terrain(Pos::new(3, 4), Terrain::Wood);
        s.set_terrain(Pos::new(3, 5), Terrain::Wood);
        s.insert_powerup(Pos::new(3, 4), PowerUp::Kick);
        s.bombs.push(bomb(0, 3, 3, 0, 1, 3));
        s.agents[0].ammo = 0;
        let r = s.step([Stop, Stop]).unwrap();
        let st = &r.state;
        let burning: Vec<Pos> = st.flames.iter().map(|f| f.pos).collect();
        assert!(burning.contains(&Pos::new(3, 4)));
        assert!(!burning.contains(&Pos::new(3, 5)));
        assert!(!burning.contains(&Pos::new(4, 3)));
        assert!(burning.contains(&Pos::new(1, 3)));
        assert!(!burning.contains(&Pos::new(0, 3)));
        assert_eq!(st.terrain_at(Pos::new(3, 4)), Terrain::Passage);
        assert_eq!(st.terrain_at(Pos::new(3, 5)), Terrain::Wood);
        // The revealed power-up survives the blast that uncovered it.
        assert_eq!(st.revealed_powerup_at(Pos::new(3, 4)), Some(PowerUp::Kick));
    }

    #[test]
    fn both_dead_in_same_step_lose() {
        let mut s = GameState::open(6, Pos::new(2, 2), Pos::new(3, 2));
        s.bombs.push(bomb(0, 2, 2, 0, 1, 2));
        s.agents[0].ammo = 0;
        let r = s.step([Stop, Stop]).unwrap();
        assert!(r.terminal);
        assert_eq!(r.rewards, Some([-1, -1]));
        assert!(r.deaths[0].unwrap().self_inflicted());
        assert!(!r.deaths[1].unwrap().self_inflicted());
    }

    #[test]
    fn swap_and_same_target_bounce() {
        let s = GameState::open(6, Pos::new(2, 2), Pos::new(3, 2));
        let r = s.step([MoveRight, MoveLeft]).unwrap();
        assert_eq!(r.state.agents[0].pos, Pos::new(2, 2));
        assert_eq!(r.state.agents[1].pos, Pos::new(3, 2));

        let s = GameState::open(6, Pos::new(1, 2), Pos::new(3, 2));
        let r = s.step([MoveRight, MoveLeft]).unwrap();
        assert_eq!(r.state.agents[0].pos, Pos::new(1, 2));
        assert_eq!(r.state.agents[1].pos, Pos::new(3, 2));

        // Into a stationary agent: bounce. Following a leaving agent: fine.
        let s = GameState::open(6, Pos::new(2, 2), Pos::new(3, 2));
        let r = s.step([MoveRight, Stop]).unwrap();
        assert_eq!(r.state.agents[0].pos, Pos::new(2, 2));
        let r = s.step([MoveRight, MoveRight]).unwrap();
        assert_eq!(r.state.agents[0].pos, Pos::new(3, 2));
        assert_eq!(r.state.agents[1].pos, Pos::new(4, 2));
    }

    #[test]
    fn kicked_bomb_slides_until_blocked() {
        let mut s = GameState::open(8, Pos::new(1, 1), Pos::new(7, 7));
        s.agents[0].can_kick = true;
        s.bombs.push(bomb(0, 2, 1, 1, 9, 2));
        s.set_terrain(Pos::new(5, 1), Terrain::Rigid);
        s.next_bomb_id = 1;
        let r = s.step([MoveRight, Stop]).unwrap();
        assert_eq!(r.state.agents[0].pos, Pos::new(2, 1));
        assert_eq!(r.state.bombs[0].pos, Pos::new(3, 1));
        assert!(r.events.iter().any(|e| matches!(e, Event::BombKicked { id: 0, by: 0, .. })));
        let s2 = r.state.step([Stop, Stop]).unwrap().state;
        assert_eq!(s2.bombs[0].pos, Pos::new(4, 1));
        let s3 = s2.step([Stop, Stop]).unwrap().state;
        assert_eq!(s3.bombs[0].pos, Pos::new(4, 1));
        assert_eq!(s3.bombs[0].moving, None);
    }

    #[test]
    fn pickups_apply_abilities() {
        let mut s = GameState::open(6, Pos::new(2, 2), Pos::new(5, 5));
        s.insert_powerup(Pos::new(3, 2), PowerUp::ExtraBomb);
        s.insert_powerup(Pos::new(4, 2), PowerUp::BlastRadius);
        s.insert_powerup(Pos::new(5, 2), PowerUp::Kick);
        for _ in 0..3 {
            s = s.step([MoveRight, Stop]).unwrap().state;
        }
        let a = &s.agents[0];
        assert_eq!((a.ammo, a.max_ammo, a.blast_radius, a.can_kick), (2, 2, 3, true));
        assert!(s.powerups.is_empty());
    }

    #[test]
    fn walking_into_live_flame_kills() {
        let mut s = GameState::open(6, Pos::new(2, 2), Pos::new(5, 5));
        s.flames.push(Flame { pos: Pos::new(3, 2), life: 2, owners: 0b10 });
        let r = s.step([MoveRight, Stop]).unwrap();
        assert!(r.terminal);
        assert_eq!(r.rewards, Some([-1, 1]));
        assert_eq!(r.deaths[0], Some(Death { agent: 0, pos: Pos::new(3, 2), killers: 0b10 }));
    }
}

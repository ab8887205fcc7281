use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::{AgentState, EnvError, GameState, Pos, PowerUp, Terrain, DEFAULT_MAX_STEPS, MIN_GENERATED_SIZE};

/// Random board recipe.
#[derive(Debug, Clone, PartialEq)]
pub struct BoardConfig {
    pub size: usize,
    pub rigid_prob: f64,
    pub wood_prob: f64,
    pub powerup_prob: f64,
    pub max_steps: u32,
}

impl Default for BoardConfig {
    fn default() -> Self {
        BoardConfig { size: 8, rigid_prob: 0.15, wood_prob: 0.25, powerup_prob: 0.5, max_steps: DEFAULT_MAX_STEPS }
    }
}

impl BoardConfig {
    pub fn with_size(size: usize) -> Self {
        BoardConfig { size, ..Self::default() }
    }

    /// No rigid walls and no wood: agents in random corners of an open field.
    pub fn clear(size: usize) -> Self {
        BoardConfig { size, rigid_prob: 0.0, wood_prob: 0.0, ..Self::default() }
    }

    pub fn generate(&self, seed: u64) -> Result<GameState, EnvError> {
        let size = self.size;
        if size < MIN_GENERATED_SIZE {
            return Err(EnvError::InvalidConfig("board size must be at least 6"));
        }
        if size > u8::MAX as usize {
            return Err(EnvError::InvalidConfig("board size must fit in a byte"));
        }
        if !(0.0..=1.0).contains(&self.rigid_prob)
            || !(0.0..=1.0).contains(&self.wood_prob)
            || self.rigid_prob + self.wood_prob > 1.0
            || !(0.0..=1.0).contains(&self.powerup_prob)
        {
            return Err(EnvError::InvalidConfig("terrain probabilities must lie in [0, 1] and sum to at most 1"));
        }
        if self.max_steps == 0 {
            return Err(EnvError::InvalidConfig("max_steps must be positive"));
        }

        let mut rng = crate::rng_from_seed(seed);
        let last = (size - 1) as u8;
        let corners = [Pos::new(0, 0), Pos::new(last, 0), Pos::new(0, last), Pos::new(last, last)];
        let mut cleared = vec![false; size * size];
        for c in corners {
            cleared[c.index(size)] = true;
            // L of two cells hugging the corner along both edges.
            let dx: i32 = if c.x == 0 { 1 } else { -1 };
            let dy: i32 = if c.y == 0 { 1 } else { -1 };
            cleared[Pos::new((c.x as i32 + dx) as u8, c.y).index(size)] = true;
            cleared[Pos::new(c.x, (c.y as i32 + dy) as u8).index(size)] = true;
        }

        loop {
            let terrain: Vec<Terrain> = (0..size * size)
                .map(|i| {
                    if cleared[i] {
                        return Terrain::Passage;
                    }
                    let r: f64 = rng.gen();
                    if r < self.rigid_prob {
                        Terrain::Rigid
                    } else if r < self.rigid_prob + self.wood_prob {
                        Terrain::Wood
                    } else {
                        Terrain::Passage
                    }
                })
                .collect();
            let a = rng.gen_range(0..4);
            let mut b = rng.gen_range(0..3);
            if b >= a {
                b += 1;
            }
            let (pa, pb) = (corners[a], corners[b]);
            if !path_exists(&terrain, size, pa, pb) {
                continue;
            }

            let mut powerups = Vec::new();
            for (i, t) in terrain.iter().enumerate() {
                if *t == Terrain::Wood && rng.gen_bool(self.powerup_prob) {
                    let kind = PowerUp::ALL[rng.gen_range(0..PowerUp::ALL.len())];
                    powerups.push((Pos::from_index(i, size), kind));
                }
            }
            powerups.sort_by_key(|(p, _)| *p);

            return Ok(GameState {
                size,
                terrain,
                powerups,
                bombs: Vec::new(),
                flames: Vec::new(),
                agents: [AgentState::fresh(pa), AgentState::fresh(pb)],
                timestep: 0,
                max_steps: self.max_steps,
                next_bomb_id: 0,
            });
        }
    }
}

/// Random board with the default recipe.
pub fn generate_board(seed: u64, size: usize) -> Result<GameState, EnvError> {
    BoardConfig::with_size(size).generate(seed)
}

/// Breadth-first search over non-rigid cells; wood counts as passable since
/// it can be blown up.
pub fn path_exists(terrain: &[Terrain], size: usize, from: Pos, to: Pos) -> bool {
    let mut seen = vec![false; size * size];
    let mut queue = VecDeque::new();
    seen[from.index(size)] = true;
    queue.push_back(from);
    while let Some(p) = queue.pop_front() {
        if p == to {
            return true;
        }
        for dir in super::Direction::ALL {
            if let Some(n) = p.offset(dir, size) {
                let i = n.index(size);
                if !seen[i] && terrain[i] != Terrain::Rigid {
                    seen[i] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_board() {
        assert_eq!(generate_board(7, 8).unwrap(), generate_board(7, 8).unwrap());
        assert_ne!(generate_board(7, 8).unwrap(), generate_board(8, 8).unwrap());
    }

    #[test]
    fn agents_start_in_distinct_corners() {
        let s = generate_board(7, 8).unwrap();
        let corners = [Pos::new(0, 0), Pos::new(0, 7), Pos::new(7, 0), Pos::new(7, 7)];
        assert!(corners.contains(&s.agents[0].pos));
        assert!(corners.contains(&s.agents[1].pos));
        assert_ne!(s.agents[0].pos, s.agents[1].pos);
        assert_eq!(s.timestep, 0);
    }

    #[test]
    fn small_boards_are_rejected() {
        assert!(matches!(generate_board(1, 5), Err(EnvError::InvalidConfig(_))));
        assert!(generate_board(1, 6).is_ok());
    }

    #[test]
    fn powerups_only_under_wood_at_start() {
        for seed in 0..50 {
            let s = generate_board(seed, 8).unwrap();
            for (p, _) in &s.powerups {
                assert_eq!(s.terrain_at(*p), Terrain::Wood);
            }
        }
    }

    #[test]
    fn clear_board_is_all_passage() {
        let s = BoardConfig::clear(6).generate(3).unwrap();
        assert!(s.terrain.iter().all(|t| *t == Terrain::Passage));
        assert!(s.powerups.is_empty());
    }
}

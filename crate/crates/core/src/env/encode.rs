use alloc::vec;
use alloc::vec::Vec;

use super::{GameState, PowerUp, Terrain};

pub const CHANNELS: usize = 28;

/// Normalisation cap for `max_ammo` on the ability planes.
const AMMO_CAP: f32 = 5.0;

// Channel layout (observer-relative). Changing it invalidates checkpoints.
pub const CH_RIGID: usize = 0;
pub const CH_WOOD: usize = 1;
pub const CH_PASSAGE: usize = 2;
pub const CH_POWERUP: usize = 3; // ExtraBomb, BlastRadius, Kick
pub const CH_AGENT: usize = 6; // observer, opponent, 2 reserved
pub const CH_BOMB: usize = 10;
pub const CH_BOMB_LIFE: usize = 11;
pub const CH_BOMB_RADIUS: usize = 12;
pub const CH_FLAME: usize = 13;
pub const CH_FLAME_LIFE: usize = 14;
pub const CH_TIME: usize = 15;
pub const CH_ABILITY: usize = 16; // 3 planes per slot: ammo, radius, kick

/// 28 planes of `size * size` values, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub size: usize,
    pub data: Vec<f32>,
}

impl FeatureStack {
    pub fn zeros(size: usize) -> Self {
        FeatureStack { size, data: vec![0.0; CHANNELS * size * size] }
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.size * self.size;
        &self.data[c * plane..(c + 1) * plane]
    }

    fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let plane = self.size * self.size;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    fn set(&mut self, c: usize, idx: usize, v: f32) {
        let plane = self.size * self.size;
        self.data[c * plane + idx] = v;
    }
}

fn powerup_channel(kind: PowerUp) -> usize {
    match kind {
        PowerUp::ExtraBomb => CH_POWERUP,
        PowerUp::BlastRadius => CH_POWERUP + 1,
        PowerUp::Kick => CH_POWERUP + 2,
    }
}

/// Encodes `state` as seen by `observer` (whose planes come first).
pub fn encode_observation(state: &GameState, observer: usize) -> FeatureStack {
    let size = state.size;
    let sizef = size as f32;
    let mut fs = FeatureStack::zeros(size);

    for (idx, t) in state.terrain.iter().enumerate() {
        let c = match t {
            Terrain::Rigid => CH_RIGID,
            Terrain::Wood => CH_WOOD,
            Terrain::Passage => CH_PASSAGE,
        };
        fs.set(c, idx, 1.0);
    }
    for (p, kind) in &state.powerups {
        if state.terrain_at(*p) == Terrain::Passage {
            fs.set(powerup_channel(*kind), p.index(size), 1.0);
        }
    }

    let order = [observer, 1 - observer];
    for (slot, &agent) in order.iter().enumerate() {
        let a = &state.agents[agent];
        if a.alive {
            fs.set(CH_AGENT + slot, a.pos.index(size), 1.0);
        }
        let base = CH_ABILITY + 3 * slot;
        fs.channel_mut(base).fill((a.max_ammo as f32 / AMMO_CAP).min(1.0));
        fs.channel_mut(base + 1).fill((a.blast_radius as f32 / sizef).min(1.0));
        fs.channel_mut(base + 2).fill(if a.can_kick { 1.0 } else { 0.0 });
    }

    for b in &state.bombs {
        let idx = b.pos.index(size);
        fs.set(CH_BOMB, idx, 1.0);
        fs.set(CH_BOMB_LIFE, idx, (b.life as f32 / 10.0).min(1.0));
        fs.set(CH_BOMB_RADIUS, idx, (b.blast_radius as f32 / sizef).min(1.0));
    }
    for f in &state.flames {
        let idx = f.pos.index(size);
        fs.set(CH_FLAME, idx, 1.0);
        fs.set(CH_FLAME_LIFE, idx, (f.life as f32 / 2.0).min(1.0));
    }
    let t = if state.max_steps == 0 { 0.0 } else { (state.timestep as f32 / state.max_steps as f32).min(1.0) };
    fs.channel_mut(CH_TIME).fill(t);
    fs
}

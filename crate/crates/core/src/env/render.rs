use alloc::string::String;

use super::{GameState, Pos, PowerUp};

/// One character per cell, rows separated by newlines.
///
/// Overlay priority: flame `*` > agent `0`/`1` > bomb `b` > revealed power-up
/// (`e` extra bomb, `r` radius, `k` kick) > terrain (`.` `#` `W`).
pub fn render_ascii(state: &GameState) -> String {
    let mut out = String::with_capacity((state.size + 1) * state.size);
    for y in 0..state.size {
        for x in 0..state.size {
            let p = Pos::new(x as u8, y as u8);
            let c = if state.flame_at(p).is_some() {
                '*'
            } else if let Some(i) = state.agent_at(p) {
                char::from(b'0' + i as u8)
            } else if state.has_bomb(p) {
                'b'
            } else if let Some(k) = state.revealed_powerup_at(p) {
                match k {
                    PowerUp::ExtraBomb => 'e',
                    PowerUp::BlastRadius => 'r',
                    PowerUp::Kick => 'k',
                }
            } else {
                state.terrain_at(p).symbol()
            };
            out.push(c);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Bomb, Flame, GameState, Terrain};

    #[test]
    fn overlay_priority() {
        let mut s = GameState::open(6, Pos::new(1, 0), Pos::new(5, 5));
        s.set_terrain(Pos::new(0, 0), Terrain::Rigid);
        s.bombs.push(Bomb { id: 0, pos: Pos::new(1, 0), owner: 0, life: 3, blast_radius: 2, moving: None });
        s.bombs.push(Bomb { id: 1, pos: Pos::new(2, 0), owner: 0, life: 3, blast_radius: 2, moving: None });
        s.flames.push(Flame { pos: Pos::new(5, 5), life: 1, owners: 1 });
        s.insert_powerup(Pos::new(3, 0), PowerUp::Kick);
        let text = render_ascii(&s);
        let rows: alloc::vec::Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], "#0bk..");
        assert_eq!(rows[5], ".....*");
    }
}

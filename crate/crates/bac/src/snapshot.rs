//! `PBOARD v1`: a line-per-entity text format for game states.
//!
//! ```text
//! PBOARD v1
//! size 5
//! terrain ..#..
//! ...
//! agent 0 x y ammo maxammo radius kick alive
//! bomb x y owner life radius [U|D|L|R]
//! flame x y life [owners]
//! powerup x y extrabomb|radius|kick
//! maxsteps 800
//! t 0
//! ```
//!
//! `maxsteps` is written only when it differs from the default. Bomb ids are
//! not stored; they are renumbered in file order when parsing.

use std::fmt::Write as _;
use std::path::Path;

use bac_core::env::{AgentState, Bomb, Direction, Flame, GameState, Pos, PowerUp, Terrain, DEFAULT_MAX_STEPS, NUM_AGENTS};

pub const HEADER: &str = "PBOARD v1";

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn perr(line: usize, msg: impl Into<String>) -> SnapshotError {
    SnapshotError::Parse { line, msg: msg.into() }
}

pub fn serialize(state: &GameState) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{HEADER}");
    let _ = writeln!(out, "size {}", state.size);
    for y in 0..state.size {
        let row: String = (0..state.size).map(|x| state.terrain_at(Pos::new(x as u8, y as u8)).symbol()).collect();
        let _ = writeln!(out, "terrain {row}");
    }
    for (i, a) in state.agents.iter().enumerate() {
        let _ =
            writeln!(out, "agent {i} {} {} {} {} {} {} {}", a.pos.x, a.pos.y, a.ammo, a.max_ammo, a.blast_radius, a.can_kick as u8, a.alive as u8);
    }
    for b in &state.bombs {
        let _ = write!(out, "bomb {} {} {} {} {}", b.pos.x, b.pos.y, b.owner, b.life, b.blast_radius);
        if let Some(d) = b.moving {
            let _ = write!(out, " {}", d.letter());
        }
        out.push('\n');
    }
    for f in &state.flames {
        let _ = writeln!(out, "flame {} {} {} {}", f.pos.x, f.pos.y, f.life, f.owners);
    }
    for (p, k) in &state.powerups {
        let _ = writeln!(out, "powerup {} {} {}", p.x, p.y, k.token());
    }
    if state.max_steps != DEFAULT_MAX_STEPS {
        let _ = writeln!(out, "maxsteps {}", state.max_steps);
    }
    let _ = writeln!(out, "t {}", state.timestep);
    out
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, SnapshotError> {
    let tok = tok.ok_or_else(|| perr(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| perr(line, format!("bad {what} `{tok}`")))
}

fn flag(tok: Option<&str>, line: usize, what: &str) -> Result<bool, SnapshotError> {
    match num::<u8>(tok, line, what)? {
        0 => Ok(false),
        1 => Ok(true),
        v => Err(perr(line, format!("{what} must be 0 or 1, got {v}"))),
    }
}

pub fn parse(text: &str) -> Result<GameState, SnapshotError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match lines.next() {
        Some((_, l)) if l == HEADER => {}
        Some((n, l)) => return Err(perr(n, format!("expected `{HEADER}`, found `{l}`"))),
        None => return Err(perr(1, "empty snapshot")),
    }
    let mut size: Option<usize> = None;
    let mut rows: Vec<Vec<Terrain>> = Vec::new();
    let mut agents: [Option<AgentState>; NUM_AGENTS] = [const { None }; NUM_AGENTS];
    let mut bombs = Vec::new();
    let mut flames = Vec::new();
    let mut powerups = Vec::new();
    let mut timestep = None;
    let mut max_steps = DEFAULT_MAX_STEPS;

    for (n, line) in lines {
        let mut tok = line.split_whitespace();
        let kind = tok.next().unwrap_or_default();
        let pos = |tok: &mut std::str::SplitWhitespace<'_>| -> Result<Pos, SnapshotError> {
            let x: u8 = num(tok.next(), n, "x")?;
            let y: u8 = num(tok.next(), n, "y")?;
            Ok(Pos::new(x, y))
        };
        match kind {
            "size" => size = Some(num(tok.next(), n, "size")?),
            "terrain" => {
                let row = tok.next().ok_or_else(|| perr(n, "missing terrain row"))?;
                let cells: Option<Vec<Terrain>> = row.chars().map(Terrain::from_symbol).collect();
                rows.push(cells.ok_or_else(|| perr(n, format!("bad terrain row `{row}`")))?);
            }
            "agent" => {
                let id: usize = num(tok.next(), n, "agent id")?;
                if id >= NUM_AGENTS {
                    return Err(perr(n, format!("agent id {id} out of range")));
                }
                let p = pos(&mut tok)?;
                let a = AgentState {
                    pos: p,
                    ammo: num(tok.next(), n, "ammo")?,
                    max_ammo: num(tok.next(), n, "maxammo")?,
                    blast_radius: num(tok.next(), n, "radius")?,
                    can_kick: flag(tok.next(), n, "kick")?,
                    alive: flag(tok.next(), n, "alive")?,
                };
                if agents[id].replace(a).is_some() {
                    return Err(perr(n, format!("agent {id} given twice")));
                }
            }
            "bomb" => {
                let p = pos(&mut tok)?;
                let owner: u8 = num(tok.next(), n, "owner")?;
                let life: u8 = num(tok.next(), n, "life")?;
                let radius: u8 = num(tok.next(), n, "radius")?;
                let moving = match tok.next() {
                    None => None,
                    Some(d) => {
                        let mut c = d.chars();
                        match (c.next().and_then(Direction::from_letter), c.next()) {
                            (Some(dir), None) => Some(dir),
                            _ => return Err(perr(n, format!("bad bomb direction `{d}`"))),
                        }
                    }
                };
                if owner as usize >= NUM_AGENTS || life == 0 {
                    return Err(perr(n, "bomb owner out of range or zero life"));
                }
                bombs.push(Bomb { id: bombs.len() as u32, pos: p, owner, life, blast_radius: radius, moving });
            }
            "flame" => {
                let p = pos(&mut tok)?;
                let life: u8 = num(tok.next(), n, "life")?;
                let owners: u8 = match tok.next() {
                    None => 0,
                    t => num(t, n, "owners")?,
                };
                if life == 0 {
                    return Err(perr(n, "flame with zero life"));
                }
                flames.push(Flame { pos: p, life, owners });
            }
            "powerup" => {
                let p = pos(&mut tok)?;
                let k = tok.next().ok_or_else(|| perr(n, "missing power-up kind"))?;
                powerups.push((p, PowerUp::from_token(k).ok_or_else(|| perr(n, format!("bad power-up `{k}`")))?));
            }
            "maxsteps" => max_steps = num(tok.next(), n, "maxsteps")?,
            "t" => timestep = Some(num(tok.next(), n, "timestep")?),
            other => return Err(perr(n, format!("unknown entry `{other}`"))),
        }
        if let Some(extra) = tok.next() {
            return Err(perr(n, format!("trailing token `{extra}`")));
        }
    }

    let size = size.ok_or_else(|| SnapshotError::Invalid("missing size".into()))?;
    if rows.len() != size || rows.iter().any(|r| r.len() != size) {
        return Err(SnapshotError::Invalid(format!("terrain must be {size} rows of {size} cells")));
    }
    let [Some(a0), Some(a1)] = agents else {
        return Err(SnapshotError::Invalid("both agents must be given".into()));
    };
    let mut state = GameState::open(size, a0.pos, a1.pos);
    state.terrain = rows.into_iter().flatten().collect();
    state.agents = [a0, a1];
    state.next_bomb_id = bombs.len() as u32;
    state.bombs = bombs;
    state.flames = flames;
    state.max_steps = max_steps;
    state.timestep = timestep.ok_or_else(|| SnapshotError::Invalid("missing `t` line".into()))?;
    for (p, k) in powerups {
        state.insert_powerup(p, k);
    }
    validate(&state)?;
    Ok(state)
}

fn validate(s: &GameState) -> Result<(), SnapshotError> {
    let inside = |p: Pos| (p.x as usize) < s.size && (p.y as usize) < s.size;
    let bad = |m: String| Err(SnapshotError::Invalid(m));
    for (i, a) in s.agents.iter().enumerate() {
        if !inside(a.pos) {
            return bad(format!("agent {i} outside the board"));
        }
        if a.alive && s.terrain_at(a.pos) != Terrain::Passage {
            return bad(format!("agent {i} stands on a wall"));
        }
    }
    for b in &s.bombs {
        if !inside(b.pos) || s.terrain_at(b.pos) != Terrain::Passage {
            return bad(format!("bomb at {},{} is not on a passage cell", b.pos.x, b.pos.y));
        }
    }
    if s.flames.iter().any(|f| !inside(f.pos)) || s.powerups.iter().any(|(p, _)| !inside(*p)) {
        return bad("entity outside the board".into());
    }
    Ok(())
}

pub fn load(path: &Path) -> Result<GameState, SnapshotError> {
    parse(&std::fs::read_to_string(path)?)
}

pub fn save(state: &GameState, path: &Path) -> Result<(), SnapshotError> {
    std::fs::write(path, serialize(state))?;
    Ok(())
}

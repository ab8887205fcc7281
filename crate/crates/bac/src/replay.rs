//! Steps a snapshot through a scripted action list, printing the board.
//!
//! The action file has one line per timestep with one token per agent, either
//! the action name (`up`, `down`, `left`, `right`, `stop`, `bomb`) or its code.
//! Blank lines and `#` comments are skipped.

use std::io::Write;

use bac_core::env::{render_ascii, Action, Event, GameState, NUM_AGENTS};

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("actions line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("timestep {timestep}: agent {agent} cannot play {action}")]
    IllegalAction { timestep: u32, agent: usize, action: Action },
    #[error("timestep {timestep}: the episode already ended")]
    AfterTerminal { timestep: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn parse_actions(text: &str) -> Result<Vec<[Action; NUM_AGENTS]>, ReplayError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != NUM_AGENTS {
            return Err(ReplayError::Parse { line: i + 1, reason: format!("expected {NUM_AGENTS} actions, found {}", toks.len()) });
        }
        let mut joint = [Action::Stop; NUM_AGENTS];
        for (slot, t) in joint.iter_mut().zip(&toks) {
            *slot = Action::parse(t).ok_or_else(|| ReplayError::Parse { line: i + 1, reason: format!("unknown action `{t}`") })?;
        }
        out.push(joint);
    }
    Ok(out)
}

/// One replayed timestep.
#[derive(Debug, Clone)]
pub struct ReplayStep {
    pub timestep: u32,
    pub board: String,
    pub events: Vec<Event>,
}

#[derive(Debug, Clone)]
pub struct ReplayResult {
    pub start: u32,
    pub initial: String,
    pub steps: Vec<ReplayStep>,
    pub state: GameState,
    pub rewards: Option<[i8; NUM_AGENTS]>,
}

/// Applies `actions` to `state`. Dead agents may only `stop`.
pub fn replay(mut state: GameState, actions: &[[Action; NUM_AGENTS]]) -> Result<ReplayResult, ReplayError> {
    let start = state.timestep;
    let initial = render_ascii(&state);
    let mut steps = Vec::with_capacity(actions.len());
    for joint in actions {
        let t = state.timestep;
        if state.is_terminal() {
            return Err(ReplayError::AfterTerminal { timestep: t });
        }
        for (agent, &a) in joint.iter().enumerate() {
            let legal = match state.legal_actions(agent) {
                Ok(set) => set.contains(a),
                Err(_) => a == Action::Stop,
            };
            if !legal {
                return Err(ReplayError::IllegalAction { timestep: t, agent, action: a });
            }
        }
        let r = state.step(*joint).map_err(|_| ReplayError::AfterTerminal { timestep: t })?;
        state = r.state;
        steps.push(ReplayStep { timestep: state.timestep, board: render_ascii(&state), events: r.events });
    }
    let rewards = state.terminal_rewards();
    Ok(ReplayResult { start, initial, steps, state, rewards })
}

/// Prints a replay: the initial board, then every tick, then the outcome.
pub fn print(result: &ReplayResult, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "t={}", result.start)?;
    write!(out, "{}", result.initial)?;
    for s in &result.steps {
        writeln!(out, "t={}", s.timestep)?;
        write!(out, "{}", s.board)?;
    }
    match result.rewards {
        Some(r) => writeln!(out, "terminal rewards {} {}", r[0], r[1]),
        None => writeln!(out, "not terminal after {} steps", result.steps.len()),
    }
}

//! Episode outcome tags, separating wins and losses caused by suicides.

use core::fmt;

use crate::env::{Death, GameState, NUM_AGENTS};
use crate::rl::EpisodeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutcomeTag {
    Win,
    /// +1 only because the opponent died to its own bomb.
    WinOpponentSuicide,
    /// -1 because our agent died to its own bomb.
    LossSuicide,
    LossKilled,
    Draw,
}

impl OutcomeTag {
    pub const ALL: [OutcomeTag; 5] =
        [OutcomeTag::Win, OutcomeTag::WinOpponentSuicide, OutcomeTag::LossSuicide, OutcomeTag::LossKilled, OutcomeTag::Draw];

    pub fn token(self) -> &'static str {
        match self {
            OutcomeTag::Win => "win",
            OutcomeTag::WinOpponentSuicide => "win_opponent_suicide",
            OutcomeTag::LossSuicide => "loss_suicide",
            OutcomeTag::LossKilled => "loss_killed",
            OutcomeTag::Draw => "draw",
        }
    }

    pub fn parse(s: &str) -> Option<OutcomeTag> {
        OutcomeTag::ALL.into_iter().find(|t| t.token() == s)
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for OutcomeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeOutcome {
    pub reward: i8,
    pub length: u32,
    pub tag: OutcomeTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum OutcomeError {
    #[error("episode has not reached a terminal state")]
    NotTerminal,
}

/// Tag from the final rewards and death records. A death counts as a suicide
/// whenever the victim's own bomb contributed to the fatal flame, even if the
/// other agent's blast covered the same cell. When both agents die in the same
/// step the reward is -1 and the tag describes our own death.
pub fn classify(agent: usize, rewards: [i8; NUM_AGENTS], deaths: [Option<Death>; NUM_AGENTS], length: u32) -> EpisodeOutcome {
    let reward = rewards[agent];
    let opp = GameState::opponent_of(agent);
    let tag = if reward > 0 {
        match deaths[opp] {
            Some(d) if d.self_inflicted() => OutcomeTag::WinOpponentSuicide,
            _ => OutcomeTag::Win,
        }
    } else {
        match deaths[agent] {
            Some(d) if d.self_inflicted() => OutcomeTag::LossSuicide,
            Some(_) => OutcomeTag::LossKilled,
            None => OutcomeTag::Draw,
        }
    };
    EpisodeOutcome { reward, length, tag }
}

pub fn classify_outcome(trace: &EpisodeTrace) -> Result<EpisodeOutcome, OutcomeError> {
    let end = trace.end.ok_or(OutcomeError::NotTerminal)?;
    Ok(classify(trace.agent, end.rewards, end.deaths, trace.len() as u32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Pos;

    fn death(agent: usize, killers: u8) -> Option<Death> {
        Some(Death { agent, pos: Pos::new(0, 0), killers })
    }

    #[test]
    fn own_flame_is_suicide() {
        assert_eq!(classify(0, [-1, 1], [death(0, 0b01), None], 30).tag, OutcomeTag::LossSuicide);
    }

    #[test]
    fn opponent_killed_by_our_bomb_is_win() {
        assert_eq!(classify(0, [1, -1], [None, death(1, 0b01)], 30).tag, OutcomeTag::Win);
    }

    #[test]
    fn opponent_own_bomb_is_false_positive() {
        assert_eq!(classify(0, [1, -1], [None, death(1, 0b10)], 30).tag, OutcomeTag::WinOpponentSuicide);
    }

    #[test]
    fn shared_flame_counts_as_suicide() {
        assert_eq!(classify(0, [1, -1], [None, death(1, 0b11)], 30).tag, OutcomeTag::WinOpponentSuicide);
        assert_eq!(classify(0, [-1, 1], [death(0, 0b11), None], 30).tag, OutcomeTag::LossSuicide);
    }

    #[test]
    fn timeout_is_draw() {
        let o = classify(0, [-1, -1], [None, None], 800);
        assert_eq!((o.reward, o.tag), (-1, OutcomeTag::Draw));
    }

    #[test]
    fn killed_by_opponent() {
        assert_eq!(classify(0, [-1, 1], [death(0, 0b10), None], 9).tag, OutcomeTag::LossKilled);
    }

    #[test]
    fn unfinished_trace_rejected() {
        let t = EpisodeTrace::new(0, 1);
        assert_eq!(classify_outcome(&t), Err(OutcomeError::NotTerminal));
    }

    #[test]
    fn tokens_round_trip() {
        for t in OutcomeTag::ALL {
            assert_eq!(OutcomeTag::parse(t.token()), Some(t));
        }
    }
}

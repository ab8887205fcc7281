//! Matches between two fixed policies, and greedy evaluation of checkpoints.

use std::fmt;
use std::path::Path;

use bac_core::env::{Action, BoardConfig, Death, GameState, NUM_AGENTS};
use bac_core::mcts::SearchConfig;
use bac_core::mix_seed;
use bac_core::nn::{Arch, NetworkParams};
use bac_core::opponents::{AgentPolicy, MctsAgent, NetAgent, RandomAgent, RuleBasedAgent, StaticAgent};
use bac_core::outcome::{classify, EpisodeOutcome, OutcomeTag};

use crate::checkpoint::{self, CheckpointError};
use crate::config::OpponentSpec;
use crate::error::HarnessError;

/// Loads a checkpoint and checks it fits a `board`-sized board.
pub fn load_params_for_board(path: &Path, board: Option<usize>) -> Result<NetworkParams<f32>, CheckpointError> {
    let ck = checkpoint::load(path, None)?;
    if let Some(b) = board {
        if b != ck.params.arch.board {
            let expected = Arch { board: b, ..ck.params.arch };
            return Err(checkpoint::load(path, Some(&expected)).err().unwrap_or(CheckpointError::ShapeMismatch {
                tensor: "descriptor".into(),
                expected: vec![b],
                found: vec![ck.params.arch.board],
            }));
        }
    }
    Ok(ck.params)
}

/// Builds an opponent. `net` opponents play their policy greedily over legal
/// actions.
pub fn build_opponent(spec: &OpponentSpec, board: usize, seed: u64) -> Result<Box<dyn AgentPolicy + Send>, HarnessError> {
    Ok(match spec {
        OpponentSpec::Static => Box::new(StaticAgent),
        OpponentSpec::Random => Box::new(RandomAgent::new(seed)),
        OpponentSpec::RuleBased => Box::new(RuleBasedAgent::new(seed)),
        OpponentSpec::Mcts(n) => Box::new(MctsAgent::new(SearchConfig { seed, ..SearchConfig::with_rollouts(*n) })),
        OpponentSpec::Net(path) => Box::new(NetAgent::new(load_params_for_board(path, Some(board))?, true, seed)),
    })
}

/// Outcome counts over a set of episodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchSummary {
    pub episodes: u64,
    pub wins: u64,
    pub losses: u64,
    pub draws: u64,
    pub reward_sum: i64,
    pub length_sum: u64,
    pub tags: [u64; 5],
}

impl MatchSummary {
    pub fn record(&mut self, o: &EpisodeOutcome) {
        self.episodes += 1;
        match o.tag {
            OutcomeTag::Win | OutcomeTag::WinOpponentSuicide => self.wins += 1,
            OutcomeTag::LossSuicide | OutcomeTag::LossKilled => self.losses += 1,
            OutcomeTag::Draw => self.draws += 1,
        }
        self.reward_sum += o.reward as i64;
        self.length_sum += o.length as u64;
        self.tags[o.tag.index()] += 1;
    }

    pub fn merge(&mut self, o: &MatchSummary) {
        self.episodes += o.episodes;
        self.wins += o.wins;
        self.losses += o.losses;
        self.draws += o.draws;
        self.reward_sum += o.reward_sum;
        self.length_sum += o.length_sum;
        for (a, b) in self.tags.iter_mut().zip(o.tags) {
            *a += b;
        }
    }

    fn rate(&self, k: u64) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            k as f64 / self.episodes as f64
        }
    }

    pub fn win_rate(&self) -> f64 {
        self.rate(self.wins)
    }
    pub fn loss_rate(&self) -> f64 {
        self.rate(self.losses)
    }
    pub fn draw_rate(&self) -> f64 {
        self.rate(self.draws)
    }
    pub fn mean_reward(&self) -> f64 {
        if self.episodes == 0 {
            0.0
        } else {
            self.reward_sum as f64 / self.episodes as f64
        }
    }
}

impl fmt::Display for MatchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes {}", self.episodes)?;
        writeln!(f, "win_rate {:.4}", self.win_rate())?;
        writeln!(f, "loss_rate {:.4}", self.loss_rate())?;
        writeln!(f, "draw_rate {:.4}", self.draw_rate())?;
        writeln!(f, "mean_reward {:.4}", self.mean_reward())?;
        for t in OutcomeTag::ALL {
            writeln!(f, "tag {} {}", t, self.tags[t.index()])?;
        }
        Ok(())
    }
}

/// Plays one episode from `state`; `agents[i]` controls agent `i`. Dead
/// agents send `Stop`.
pub fn play_episode(
    mut state: GameState,
    agents: [&mut dyn AgentPolicy; NUM_AGENTS],
) -> Result<(EpisodeOutcome, Vec<[Action; NUM_AGENTS]>), HarnessError> {
    let mut deaths: [Option<Death>; NUM_AGENTS] = [None; NUM_AGENTS];
    let mut actions = Vec::new();
    let [a, b] = agents;
    while !state.is_terminal() {
        let mut joint = [Action::Stop; NUM_AGENTS];
        if state.agents[0].alive {
            joint[0] = a.act(&state, 0);
        }
        if state.agents[1].alive {
            joint[1] = b.act(&state, 1);
        }
        actions.push(joint);
        for (slot, d) in deaths.iter_mut().zip(state.advance(joint)?) {
            if d.is_some() {
                *slot = d;
            }
        }
    }
    let rewards = state.terminal_rewards().expect("terminal");
    Ok((classify(0, rewards, deaths, state.timestep), actions))
}

/// `episodes` games on boards seeded from `seed`, `agent` playing as agent 0.
pub fn play_match(
    agent: &mut dyn AgentPolicy,
    opponent: &mut dyn AgentPolicy,
    board: &BoardConfig,
    episodes: u64,
    seed: u64,
) -> Result<MatchSummary, HarnessError> {
    let mut summary = MatchSummary::default();
    for i in 0..episodes {
        let state = board.generate(mix_seed(seed, i))?;
        agent.reset(mix_seed(seed ^ 0xA6E4, i));
        opponent.reset(mix_seed(seed ^ 0x0990, i));
        let (o, _) = play_episode(state, [&mut *agent, &mut *opponent])?;
        summary.record(&o);
    }
    Ok(summary)
}

/// Greedy play of a checkpoint against `opponent`. No learning happens.
pub fn evaluate(
    checkpoint: &Path,
    opponent: &OpponentSpec,
    episodes: u64,
    seed: u64,
    board_size: Option<usize>,
) -> Result<MatchSummary, HarnessError> {
    let params = load_params_for_board(checkpoint, board_size)?;
    let board = BoardConfig::with_size(params.arch.board);
    let mut agent = NetAgent::new(params, true, seed);
    let mut opp = build_opponent(opponent, board.size, seed)?;
    play_match(&mut agent, &mut opp, &board, episodes, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_sum_to_one() {
        let params = NetworkParams::<f32>::init(Arch::narrow(6, 4, 8), 3);
        let mut agent = NetAgent::new(params, true, 0);
        let s = play_match(&mut agent, &mut StaticAgent, &BoardConfig::with_size(6), 10, 5).unwrap();
        assert_eq!(s.episodes, 10);
        assert_eq!(s.wins + s.losses + s.draws, 10);
        assert!((s.win_rate() + s.loss_rate() + s.draw_rate() - 1.0).abs() < 1e-12);
        assert_eq!(s.tags.iter().sum::<u64>(), 10);
    }
}

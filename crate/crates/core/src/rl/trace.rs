use alloc::vec::Vec;

use crate::env::{Action, Death, FeatureStack, NUM_AGENTS};

/// What one agent saw and did at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub features: FeatureStack,
    pub action: Action,
    pub opponent_action: Action,
    /// Planner choice; only recorded by a demonstrator (equal to `action`).
    pub demo_action: Option<Action>,
    pub policy: [f32; Action::COUNT],
    pub value: f32,
    pub terminal_pred: f32,
    /// 0 except at the last step of a finished episode.
    pub reward: f32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeEnd {
    pub rewards: [i8; NUM_AGENTS],
    pub deaths: [Option<Death>; NUM_AGENTS],
    pub timestep: u32,
}

/// A full episode from the point of view of `agent`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub agent: usize,
    pub board_seed: u64,
    pub steps: Vec<StepRecord>,
    /// Observation of the terminal state, the last of the `N + 1` states.
    pub terminal_features: Option<FeatureStack>,
    /// Set once the episode has reached a terminal state.
    pub end: Option<EpisodeEnd>,
}

impl EpisodeTrace {
    pub fn new(agent: usize, board_seed: u64) -> Self {
        EpisodeTrace { agent, board_seed, steps: Vec::new(), terminal_features: None, end: None }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn reward(&self) -> Option<i8> {
        self.end.map(|e| e.rewards[self.agent])
    }

    /// Observations of every visited state, terminal one included.
    pub fn state_features(&self) -> impl Iterator<Item = &FeatureStack> {
        self.steps.iter().map(|s| &s.features).chain(self.terminal_features.as_ref())
    }

    pub fn actions(&self) -> Vec<[Action; NUM_AGENTS]> {
        self.steps
            .iter()
            .map(|s| {
                let mut a = [s.opponent_action; NUM_AGENTS];
                a[self.agent] = s.action;
                a
            })
            .collect()
    }
}

//! UCT search over one agent's actions with depth-limited random rollouts.
//!
//! The tree branches on the searching agent's moves only. The other agent's
//! move is drawn from an [`OpponentModel`] when a child is created, and that
//! sampled outcome is then fixed for the child.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::Rng as _;

use crate::env::{encode_observation, Action, ActionSet, EnvError, GameState, NUM_AGENTS};
use crate::nn::{NetworkOutput, NetworkParams, NnError};
use crate::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MctsError {
    #[error("search started from a terminal state")]
    TerminalRoot,
    #[error("searching agent {0} is not alive")]
    AgentDead(usize),
    #[error("UCB selection on a node with untried actions")]
    NotFullyExpanded,
    #[error("invalid search configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub rollouts_per_move: u32,
    pub rollout_depth: u32,
    pub exploration: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { rollouts_per_move: 100, rollout_depth: 24, exploration: 1.25, seed: 0 }
    }
}

impl SearchConfig {
    pub fn with_rollouts(rollouts_per_move: u32) -> Self {
        SearchConfig { rollouts_per_move, ..SearchConfig::default() }
    }

    pub fn validate(&self) -> Result<(), MctsError> {
        if self.rollouts_per_move == 0 {
            return Err(MctsError::InvalidConfig("rollouts_per_move must be at least 1"));
        }
        if self.rollout_depth == 0 {
            return Err(MctsError::InvalidConfig("rollout_depth must be at least 1"));
        }
        if !self.exploration.is_finite() || self.exploration < 0.0 {
            return Err(MctsError::InvalidConfig("exploration constant must be finite and nonnegative"));
        }
        Ok(())
    }
}

/// How the non-searching agent is assumed to move.
pub trait OpponentModel {
    fn sample(&mut self, state: &GameState, agent: usize, rng: &mut Rng) -> Action;
}

/// Uniform over the agent's legal actions.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandom;

impl OpponentModel for UniformRandom {
    fn sample(&mut self, state: &GameState, agent: usize, rng: &mut Rng) -> Action {
        random_legal(state, agent, rng)
    }
}

/// Assumes the opponent never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaysPut;

impl OpponentModel for StaysPut {
    fn sample(&mut self, _: &GameState, _: usize, _: &mut Rng) -> Action {
        Action::Stop
    }
}

/// Uniform legal action; `Stop` for dead agents.
pub fn random_legal(state: &GameState, agent: usize, rng: &mut Rng) -> Action {
    match state.legal_actions(agent) {
        Ok(set) if !set.is_empty() => set.nth(rng.gen_range(0..set.len())).unwrap_or(Action::Stop),
        _ => Action::Stop,
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
pub struct SearchNode {
    pub state: GameState,
    pub n: u32,
    pub w: f64,
    pub children: [Option<NodeId>; Action::COUNT],
    pub untried: ActionSet,
    pub depth: u32,
    pub parent: Option<NodeId>,
    /// Action that led here from the parent.
    pub action: Option<Action>,
    /// Value for the searching agent when `state` is terminal.
    pub terminal_value: Option<f64>,
}

impl SearchNode {
    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.w / self.n as f64
        }
    }

    pub fn child_ids(&self) -> impl Iterator<Item = (Action, NodeId)> + '_ {
        Action::ALL.into_iter().zip(self.children).filter_map(|(a, c)| c.map(|c| (a, c)))
    }
}

#[derive(Debug, Clone)]
pub struct SearchTree {
    pub agent: usize,
    pub config: SearchConfig,
    pub nodes: Vec<SearchNode>,
}

pub const ROOT: NodeId = 0;

/// Value of a terminal state for `agent`; a timeout counts as a loss for both.
fn terminal_value(state: &GameState, agent: usize) -> Option<f64> {
    state.terminal_rewards().map(|r| r[agent] as f64)
}

impl SearchTree {
    pub fn new(root: GameState, agent: usize, config: SearchConfig) -> Result<Self, MctsError> {
        config.validate()?;
        if agent >= NUM_AGENTS {
            return Err(MctsError::Env(EnvError::BadAgent(agent)));
        }
        if root.is_terminal() {
            return Err(MctsError::TerminalRoot);
        }
        if !root.agents[agent].alive {
            return Err(MctsError::AgentDead(agent));
        }
        let untried = root.legal_actions(agent)?;
        let node = SearchNode {
            state: root,
            n: 0,
            w: 0.0,
            children: [None; Action::COUNT],
            untried,
            depth: 0,
            parent: None,
            action: None,
            terminal_value: None,
        };
        Ok(SearchTree { agent, config, nodes: alloc::vec![node] })
    }

    pub fn root(&self) -> &SearchNode {
        &self.nodes[ROOT]
    }

    /// UCB score of a child seen from a parent with `parent_n` visits.
    pub fn ucb(&self, child: NodeId, parent_n: u32) -> f64 {
        let c = &self.nodes[child];
        let n = c.n.max(1) as f64;
        c.w / n + self.config.exploration * libm::sqrt(libm::log(parent_n.max(1) as f64) / n)
    }

    /// Child maximizing `w/n + C sqrt(ln N / n)`; ties go to the lowest code.
    pub fn ucb_select(&self, node: NodeId) -> Result<Action, MctsError> {
        let nd = &self.nodes[node];
        if !nd.untried.is_empty() {
            return Err(MctsError::NotFullyExpanded);
        }
        let mut best: Option<(Action, f64)> = None;
        for (a, c) in nd.child_ids() {
            let score = self.ucb(c, nd.n);
            if best.map_or(true, |(_, s)| score > s) {
                best = Some((a, score));
            }
        }
        best.map(|(a, _)| a).ok_or(MctsError::NotFullyExpanded)
    }

    /// Adds `value` to every node on `path` and counts one visit each.
    pub fn backpropagate(&mut self, path: &[NodeId], value: f64) {
        debug_assert!((-1.0..=1.0).contains(&value));
        for &id in path {
            let nd = &mut self.nodes[id];
            nd.n += 1;
            nd.w += value;
        }
    }

    fn expand(&mut self, parent: NodeId, model: &mut dyn OpponentModel, rng: &mut Rng) -> Result<NodeId, MctsError> {
        let Some(action) = self.nodes[parent].untried.first() else {
            return Err(MctsError::NotFullyExpanded);
        };
        let pn = &self.nodes[parent];
        let opp = GameState::opponent_of(self.agent);
        let opp_action = if pn.state.agents[opp].alive { model.sample(&pn.state, opp, rng) } else { Action::Stop };
        let mut actions = [Action::Stop; NUM_AGENTS];
        actions[self.agent] = action;
        actions[opp] = opp_action;
        let mut state = pn.state.clone();
        state.advance(actions)?;
        let depth = pn.depth + 1;
        let tv = terminal_value(&state, self.agent);
        let untried = if tv.is_some() { ActionSet::EMPTY } else { state.legal_actions(self.agent)? };
        let id = self.nodes.len();
        self.nodes.push(SearchNode {
            state,
            n: 0,
            w: 0.0,
            children: [None; Action::COUNT],
            untried,
            depth,
            parent: Some(parent),
            action: Some(action),
            terminal_value: tv,
        });
        let pn = &mut self.nodes[parent];
        pn.untried = pn.untried.without(action);
        pn.children[action.code()] = Some(id);
        Ok(id)
    }

    /// Random play for at most `rollout_depth` steps; 0 if still running.
    fn rollout(&self, from: NodeId, model: &mut dyn OpponentModel, rng: &mut Rng) -> Result<f64, MctsError> {
        let mut state = self.nodes[from].state.clone();
        let opp = GameState::opponent_of(self.agent);
        for _ in 0..self.config.rollout_depth {
            if let Some(v) = terminal_value(&state, self.agent) {
                return Ok(v);
            }
            let mut actions = [Action::Stop; NUM_AGENTS];
            actions[self.agent] = random_legal(&state, self.agent, rng);
            actions[opp] = if state.agents[opp].alive { model.sample(&state, opp, rng) } else { Action::Stop };
            state.advance(actions)?;
        }
        Ok(terminal_value(&state, self.agent).unwrap_or(0.0))
    }

    /// One select / expand / rollout / backpropagate pass.
    pub fn iterate(&mut self, model: &mut dyn OpponentModel, rng: &mut Rng) -> Result<(), MctsError> {
        let mut path = Vec::with_capacity(16);
        let mut node = ROOT;
        path.push(node);
        while self.nodes[node].terminal_value.is_none() && self.nodes[node].untried.is_empty() {
            let a = self.ucb_select(node)?;
            node = self.nodes[node].children[a.code()].ok_or(MctsError::NotFullyExpanded)?;
            path.push(node);
        }
        if self.nodes[node].terminal_value.is_none() {
            node = self.expand(node, model, rng)?;
            path.push(node);
        }
        let value = match self.nodes[node].terminal_value {
            Some(v) => v,
            None => self.rollout(node, model, rng)?,
        };
        self.backpropagate(&path, value);
        Ok(())
    }

    /// Most visited root action; ties go to the lowest code.
    pub fn best_action(&self) -> Option<Action> {
        let mut best: Option<(Action, u32)> = None;
        for (a, c) in self.root().child_ids() {
            let n = self.nodes[c].n;
            if best.map_or(true, |(_, bn)| n > bn) {
                best = Some((a, n));
            }
        }
        best.map(|(a, _)| a)
    }

    /// Top plies as indented text: action, visits, mean and UCB per child.
    pub fn dump(&self, max_depth: u32) -> String {
        let mut out = String::new();
        let r = self.root();
        let _ = writeln!(out, "root n={} mean={:.4}", r.n, r.mean());
        self.dump_children(ROOT, 1, max_depth, &mut out);
        out
    }

    fn dump_children(&self, node: NodeId, depth: u32, max_depth: u32, out: &mut String) {
        if depth > max_depth {
            return;
        }
        let parent_n = self.nodes[node].n;
        for (a, c) in self.nodes[node].child_ids() {
            let cn = &self.nodes[c];
            for _ in 0..depth {
                out.push_str("  ");
            }
            let _ = writeln!(out, "{:<5} n={} mean={:.4} ucb={:.4}", a.name(), cn.n, cn.mean(), self.ucb(c, parent_n));
            self.dump_children(c, depth + 1, max_depth, out);
        }
    }
}

/// Builds a tree from `root` with `config.rollouts_per_move` iterations. The
/// root ends with exactly that many visits.
pub fn search_tree(root: &GameState, agent: usize, config: &SearchConfig, model: &mut dyn OpponentModel) -> Result<SearchTree, MctsError> {
    let mut tree = SearchTree::new(root.clone(), agent, *config)?;
    let mut rng = crate::rng_from_seed(config.seed);
    for _ in 0..config.rollouts_per_move {
        tree.iterate(model, &mut rng)?;
    }
    debug_assert_eq!(tree.root().n, config.rollouts_per_move);
    Ok(tree)
}

pub fn search(root: &GameState, agent: usize, config: &SearchConfig, model: &mut dyn OpponentModel) -> Result<Action, MctsError> {
    let tree = search_tree(root, agent, config, model)?;
    tree.best_action().ok_or(MctsError::NotFullyExpanded)
}

/// Planner action plus what the network would have output for the same
/// observation. The search never looks at the network.
pub fn demonstrator_act(
    state: &GameState,
    agent: usize,
    config: &SearchConfig,
    model: &mut dyn OpponentModel,
    params: &NetworkParams<f32>,
) -> Result<(Action, NetworkOutput<f32>), MctsError> {
    let action = search(state, agent, config, model)?;
    let out = params.predict(&encode_observation(state, agent))?;
    Ok((action, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Pos, Terrain};
    use crate::nn::Arch;

    fn open6() -> GameState {
        GameState::open(6, Pos::new(0, 0), Pos::new(5, 5))
    }

    fn leaf(tree: &mut SearchTree, parent: NodeId, a: Action, n: u32, w: f64) {
        let mut st = tree.nodes[parent].state.clone();
        st.timestep += 1;
        let id = tree.nodes.len();
        tree.nodes.push(SearchNode {
            state: st,
            n,
            w,
            children: [None; 6],
            untried: ActionSet::EMPTY,
            depth: 1,
            parent: Some(parent),
            action: Some(a),
            terminal_value: None,
        });
        tree.nodes[parent].children[a.code()] = Some(id);
        tree.nodes[parent].untried = tree.nodes[parent].untried.without(a);
    }

    fn two_child_root(v: [(u32, f64); 2]) -> SearchTree {
        let mut t = SearchTree::new(open6(), 0, SearchConfig::default()).unwrap();
        t.nodes[ROOT].untried = ActionSet::EMPTY.with(Action::MoveDown).with(Action::MoveRight);
        leaf(&mut t, ROOT, Action::MoveDown, v[0].0, v[0].1);
        leaf(&mut t, ROOT, Action::MoveRight, v[1].0, v[1].1);
        t.nodes[ROOT].n = v[0].0 + v[1].0;
        t
    }

    #[test]
    fn ucb_prefers_higher_mean_when_exploration_equal() {
        let t = two_child_root([(1, 0.0), (1, 1.0)]);
        assert_eq!(t.ucb_select(ROOT).unwrap(), Action::MoveRight);
    }

    #[test]
    fn ucb_prefers_less_visited_when_means_equal() {
        let t = two_child_root([(100, 50.0), (1, 0.5)]);
        assert_eq!(t.ucb_select(ROOT).unwrap(), Action::MoveRight);
    }

    #[test]
    fn ucb_tie_goes_to_lowest_code() {
        let t = two_child_root([(3, 1.0), (3, 1.0)]);
        assert_eq!(t.ucb_select(ROOT).unwrap(), Action::MoveDown);
    }

    #[test]
    fn ucb_on_unexpanded_node_is_an_error() {
        let t = SearchTree::new(open6(), 0, SearchConfig::default()).unwrap();
        assert_eq!(t.ucb_select(ROOT), Err(MctsError::NotFullyExpanded));
    }

    #[test]
    fn backpropagate_examples() {
        let mut t = two_child_root([(0, 0.0), (0, 0.0)]);
        t.backpropagate(&[1], 1.0);
        assert_eq!((t.nodes[1].n, t.nodes[1].w), (1, 1.0));
        t.backpropagate(&[2, 1, ROOT], -1.0);
        assert_eq!((t.nodes[1].n, t.nodes[1].w), (2, 0.0));
        assert_eq!(t.nodes[2].w, -1.0);
        assert_eq!(t.nodes[ROOT].w, -1.0);
    }

    #[test]
    fn single_legal_action_is_returned() {
        let mut s = GameState::open(5, Pos::new(0, 0), Pos::new(4, 4));
        s.set_terrain(Pos::new(1, 0), Terrain::Rigid);
        s.set_terrain(Pos::new(0, 1), Terrain::Rigid);
        s.agents[0].ammo = 0;
        for n in [1, 7, 50] {
            let cfg = SearchConfig { rollouts_per_move: n, ..SearchConfig::default() };
            assert_eq!(search(&s, 0, &cfg, &mut UniformRandom).unwrap(), Action::Stop);
        }
    }

    #[test]
    fn root_visits_equal_iterations() {
        let cfg = SearchConfig { rollouts_per_move: 64, seed: 3, ..SearchConfig::default() };
        let t = search_tree(&open6(), 0, &cfg, &mut UniformRandom).unwrap();
        assert_eq!(t.root().n, 64);
        let child_sum: u32 = t.root().child_ids().map(|(_, c)| t.nodes[c].n).sum();
        assert_eq!(child_sum, 64);
        for nd in &t.nodes[1..] {
            let below: u32 = nd.child_ids().map(|(_, c)| t.nodes[c].n).sum();
            if nd.terminal_value.is_none() {
                assert_eq!(nd.n, below + 1);
            }
            assert!((-1.0..=1.0).contains(&nd.mean()));
        }
    }

    #[test]
    fn search_is_deterministic() {
        let cfg = SearchConfig { rollouts_per_move: 80, seed: 11, ..SearchConfig::default() };
        let a = search(&open6(), 0, &cfg, &mut UniformRandom).unwrap();
        for _ in 0..3 {
            assert_eq!(search(&open6(), 0, &cfg, &mut UniformRandom).unwrap(), a);
        }
    }

    #[test]
    fn terminal_root_rejected() {
        let mut s = open6();
        s.agents[1].alive = false;
        assert_eq!(search(&s, 0, &SearchConfig::default(), &mut UniformRandom), Err(MctsError::TerminalRoot));
    }

    #[test]
    fn demonstrator_policy_is_independent_of_search() {
        let params = NetworkParams::<f32>::zeros(Arch::narrow(6, 2, 4));
        let cfg = SearchConfig { rollouts_per_move: 30, seed: 5, ..SearchConfig::default() };
        let (a, out) = demonstrator_act(&open6(), 0, &cfg, &mut UniformRandom, &params).unwrap();
        assert_eq!(a, search(&open6(), 0, &cfg, &mut UniformRandom).unwrap());
        for p in out.policy {
            assert!((p - 1.0 / 6.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dump_lists_root_children() {
        let cfg = SearchConfig { rollouts_per_move: 20, ..SearchConfig::default() };
        let t = search_tree(&open6(), 0, &cfg, &mut UniformRandom).unwrap();
        let text = t.dump(1);
        assert!(text.starts_with("root n=20"));
        assert_eq!(text.lines().count(), 1 + t.root().child_ids().count());
    }
}

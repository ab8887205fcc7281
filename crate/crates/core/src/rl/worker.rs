use alloc::vec::Vec;
use core::cell::RefCell;
use core::sync::atomic::{AtomicBool, AtomicU64, Ordering};

use rand::Rng as _;

use super::loss::{combined_loss, n_step_advantages, tp_grad, tp_targets, A3cStep, LossBatch};
use super::trace::{EpisodeEnd, EpisodeTrace, StepRecord};
use super::{LossWeights, RlError, Variant, WorkerKind};
use crate::env::{encode_observation, Action, BoardConfig, Death, NUM_AGENTS};
use crate::mcts::{self, SearchConfig, UniformRandom};
use crate::nn::{ActivationCache, AdamConfig, AdamState, Gradients, HeadGrads, NetworkParams, NnError};
use crate::opponents::AgentPolicy;
use crate::outcome::{classify, EpisodeOutcome};
use crate::{mix_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SubmitError {
    #[error("update budget exhausted")]
    BudgetExhausted,
    #[error("update rejected: {0}")]
    Rejected(NnError),
}

/// Global parameters shared by workers. `submit` applies one optimizer step
/// and returns the new version.
pub trait ParameterStore {
    fn snapshot(&self) -> NetworkParams<f32>;
    fn submit(&self, grads: &Gradients<f32>) -> Result<u64, SubmitError>;
}

/// Single-threaded store for deterministic runs and tests.
#[derive(Debug)]
pub struct LocalStore {
    inner: RefCell<(NetworkParams<f32>, AdamState<f32>)>,
    max_updates: Option<u64>,
}

impl LocalStore {
    pub fn new(params: NetworkParams<f32>, adam: AdamConfig, max_updates: Option<u64>) -> Self {
        let state = AdamState::new(&params, adam);
        LocalStore { inner: RefCell::new((params, state)), max_updates }
    }

    pub fn version(&self) -> u64 {
        self.inner.borrow().0.version
    }

    pub fn into_parts(self) -> (NetworkParams<f32>, AdamState<f32>) {
        self.inner.into_inner()
    }
}

impl ParameterStore for LocalStore {
    fn snapshot(&self) -> NetworkParams<f32> {
        self.inner.borrow().0.clone()
    }

    fn submit(&self, grads: &Gradients<f32>) -> Result<u64, SubmitError> {
        let mut inner = self.inner.borrow_mut();
        let (params, adam) = &mut *inner;
        if self.max_updates.is_some_and(|m| params.version >= m) {
            return Err(SubmitError::BudgetExhausted);
        }
        adam.apply(params, grads).map_err(SubmitError::Rejected)?;
        Ok(params.version)
    }
}

/// Stop flag and shared episode budget, observed between segments.
#[derive(Debug, Default)]
pub struct RunControl {
    stop: AtomicBool,
    episodes_claimed: AtomicU64,
    episode_budget: Option<u64>,
}

impl RunControl {
    pub fn new(episode_budget: Option<u64>) -> Self {
        RunControl { stop: AtomicBool::new(false), episodes_claimed: AtomicU64::new(0), episode_budget }
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn is_stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    /// Reserves one episode of the budget.
    pub fn claim_episode(&self) -> bool {
        if self.is_stopped() {
            return false;
        }
        match self.episode_budget {
            None => true,
            Some(b) => self.episodes_claimed.fetch_add(1, Ordering::SeqCst) < b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerConfig {
    pub worker_id: usize,
    pub variant: Variant,
    pub kind: WorkerKind,
    pub weights: LossWeights,
    pub board: BoardConfig,
    pub seed: u64,
    pub search: SearchConfig,
    /// Global-norm clip applied before submission.
    pub clip_norm: Option<f64>,
    /// Per-worker episode cap, on top of the shared budget.
    pub max_episodes: Option<u64>,
}

impl WorkerConfig {
    pub fn new(worker_id: usize, variant: Variant, kind: WorkerKind, board: BoardConfig, seed: u64) -> Self {
        WorkerConfig {
            worker_id,
            variant,
            kind,
            weights: LossWeights::default(),
            board,
            seed,
            search: SearchConfig::default(),
            clip_norm: Some(40.0),
            max_episodes: None,
        }
    }
}

/// One finished episode, with enough detail to replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub worker_id: usize,
    pub kind: WorkerKind,
    pub episode_index: u64,
    pub variant: Variant,
    pub outcome: EpisodeOutcome,
    pub tp_loss: Option<f64>,
    pub pi_loss_mean: Option<f64>,
    pub board_seed: u64,
    pub actions: Vec<[Action; NUM_AGENTS]>,
    pub deaths: [Option<Death>; NUM_AGENTS],
    pub updates: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WorkerStats {
    pub episodes: u64,
    pub updates: u64,
    pub rejected_updates: u64,
    pub env_faults: u64,
    pub prob_clamps: u64,
    pub short_episodes: u64,
}

/// Draws an action index from a probability vector.
pub fn sample_action(policy: &[f32; Action::COUNT], rng: &mut Rng) -> Action {
    let total: f32 = policy.iter().sum();
    let mut r = rng.gen::<f32>() * total;
    let mut last = Action::Stop;
    for (a, &p) in Action::ALL.iter().zip(policy) {
        if p <= 0.0 {
            continue;
        }
        last = *a;
        r -= p;
        if r < 0.0 {
            return *a;
        }
    }
    last
}

enum Flow {
    Continue,
    Stop,
}

struct Worker<'a, S: ParameterStore> {
    cfg: &'a WorkerConfig,
    store: &'a S,
    control: &'a RunControl,
    stats: WorkerStats,
}

const AGENT: usize = 0;

impl<S: ParameterStore> Worker<'_, S> {
    fn submit(&mut self, mut grads: Gradients<f32>) -> Flow {
        if let Some(c) = self.cfg.clip_norm {
            grads.clip_global_norm(c);
        }
        match self.store.submit(&grads) {
            Ok(_) => {
                self.stats.updates += 1;
                Flow::Continue
            }
            Err(SubmitError::BudgetExhausted) => {
                self.control.stop();
                Flow::Stop
            }
            Err(SubmitError::Rejected(_)) => {
                self.stats.rejected_updates += 1;
                Flow::Continue
            }
        }
    }

    /// Actor-critic (and imitation) gradients for the last `caches.len()`
    /// steps of `trace`.
    fn segment_grads(
        &mut self,
        params: &NetworkParams<f32>,
        trace: &EpisodeTrace,
        caches: &[ActivationCache<f32>],
        bootstrap: f64,
    ) -> Result<(Gradients<f32>, Option<f64>), RlError> {
        let seg = &trace.steps[trace.steps.len() - caches.len()..];
        let rewards: Vec<f64> = seg.iter().map(|s| s.reward as f64).collect();
        let values: Vec<f64> = seg.iter().map(|s| s.value as f64).collect();
        let ret = n_step_advantages(&rewards, &values, bootstrap, self.cfg.weights.gamma);
        let steps: Vec<A3cStep> = seg
            .iter()
            .enumerate()
            .map(|(i, s)| A3cStep {
                action: s.action,
                policy: s.policy.map(|p| p as f64),
                value: s.value as f64,
                ret: ret.returns[i],
                advantage: ret.advantages[i],
            })
            .collect();
        let demo: Option<Vec<Action>> = match self.cfg.kind {
            WorkerKind::Demonstrator => Some(seg.iter().map(|s| s.demo_action.unwrap_or(s.action)).collect()),
            WorkerKind::Plain => None,
        };
        let batch = LossBatch { steps: &steps, demo_actions: demo.as_deref(), tp: None };
        let loss = combined_loss(&batch, &self.cfg.weights, self.cfg.variant, self.cfg.kind)?;
        self.stats.prob_clamps += loss.clamped as u64;
        let mut grads = Gradients::zeros_like(params);
        for (cache, head) in caches.iter().zip(&loss.head_grads) {
            params.backward_into(cache, &head.cast(), &mut grads)?;
        }
        Ok((grads, loss.pi))
    }

    /// Terminal-prediction gradient over every state of the episode, with
    /// the forward pass re-run on `params`.
    fn tp_grads(&mut self, params: &NetworkParams<f32>, trace: &EpisodeTrace) -> Result<(Gradients<f32>, f64), RlError> {
        let states = trace.state_features().count();
        let targets = tp_targets(states);
        if targets.degenerate {
            self.stats.short_episodes += 1;
        }
        let lambda = self.cfg.weights.lambda_tp;
        let mut grads = Gradients::zeros_like(params);
        let mut loss = 0.0;
        for (fs, y) in trace.state_features().zip(&targets.values) {
            let (out, cache) = params.forward_features(fs)?;
            let p = out.terminal_pred as f64;
            loss += (p - y) * (p - y);
            if lambda != 0.0 {
                let head = HeadGrads { tp: (lambda * tp_grad(p, *y, states)) as f32, ..HeadGrads::zero() };
                params.backward_into(&cache, &head, &mut grads)?;
            }
        }
        Ok((grads, loss / states.max(1) as f64))
    }
}

/// Plays episodes as agent 0 until the stop flag, the shared episode budget
/// or `max_episodes` ends the run, pushing gradients every `t_max` steps and
/// at each terminal state. `on_episode` sees each finished episode.
pub fn run_worker<S: ParameterStore>(
    cfg: &WorkerConfig,
    store: &S,
    opponent: &mut dyn AgentPolicy,
    control: &RunControl,
    on_episode: &mut dyn FnMut(EpisodeSummary),
) -> Result<WorkerStats, RlError> {
    cfg.weights.validate()?;
    if cfg.kind == WorkerKind::Demonstrator && !cfg.variant.has_pi() {
        return Err(RlError::Config("demonstrator worker in a variant without planner imitation"));
    }
    if cfg.kind == WorkerKind::Demonstrator {
        cfg.search.validate().map_err(|_| RlError::Config("invalid search configuration"))?;
    }
    let mut w = Worker { cfg, store, control, stats: WorkerStats::default() };
    let mut rng = rng_from_seed(mix_seed(cfg.seed, cfg.worker_id as u64));
    let opp = 1 - AGENT;
    let t_max = cfg.weights.t_max;

    let mut episode_index = 0u64;
    'episodes: loop {
        if control.is_stopped() || cfg.max_episodes.is_some_and(|m| episode_index >= m) || !control.claim_episode() {
            break;
        }
        let board_seed: u64 = rng.gen();
        opponent.reset(rng.gen());
        let mut state = match cfg.board.generate(board_seed) {
            Ok(s) => s,
            Err(_) => return Err(RlError::Config("board configuration cannot be generated")),
        };
        let mut params = store.snapshot();
        let mut trace = EpisodeTrace::new(AGENT, board_seed);
        let mut caches: Vec<ActivationCache<f32>> = Vec::with_capacity(t_max);
        let mut updates = 0u32;
        let mut pi_sum = 0.0;
        let mut pi_count = 0u32;

        loop {
            let features = encode_observation(&state, AGENT);
            let (out, cache) = params.forward_features(&features)?;
            let (action, demo_action) = match cfg.kind {
                WorkerKind::Plain => (sample_action(&out.policy, &mut rng), None),
                WorkerKind::Demonstrator => {
                    let search = SearchConfig { seed: rng.gen(), ..cfg.search };
                    match mcts::search(&state, AGENT, &search, &mut UniformRandom) {
                        Ok(a) => (a, Some(a)),
                        Err(_) => {
                            w.stats.env_faults += 1;
                            continue 'episodes;
                        }
                    }
                }
            };
            let opp_action = if state.agents[opp].alive { opponent.act(&state, opp) } else { Action::Stop };
            let mut actions = [Action::Stop; NUM_AGENTS];
            actions[AGENT] = action;
            actions[opp] = opp_action;
            let deaths = match state.advance(actions) {
                Ok(d) => d,
                Err(_) => {
                    w.stats.env_faults += 1;
                    continue 'episodes;
                }
            };
            let rewards = state.terminal_rewards();
            trace.steps.push(StepRecord {
                features,
                action,
                opponent_action: opp_action,
                demo_action,
                policy: out.policy,
                value: out.value,
                terminal_pred: out.terminal_pred,
                reward: rewards.map_or(0.0, |r| r[AGENT] as f32),
            });
            caches.push(cache);

            if let Some(rewards) = rewards {
                trace.terminal_features = Some(encode_observation(&state, AGENT));
                trace.end = Some(EpisodeEnd { rewards, deaths, timestep: state.timestep });
            }
            let terminal = rewards.is_some();
            if terminal || caches.len() >= t_max {
                let bootstrap = if terminal { 0.0 } else { params.predict(&encode_observation(&state, AGENT))?.value as f64 };
                let (grads, pi) = w.segment_grads(&params, &trace, &caches, bootstrap)?;
                caches.clear();
                if let Some(pi) = pi {
                    pi_sum += pi;
                    pi_count += 1;
                }
                if let Flow::Stop = w.submit(grads) {
                    break 'episodes;
                }
                updates += 1;
                params = store.snapshot();
            }
            if terminal {
                break;
            }
            if control.is_stopped() && caches.is_empty() {
                break 'episodes;
            }
        }

        let mut tp_loss = None;
        if cfg.variant.has_tp() {
            let (grads, loss) = w.tp_grads(&params, &trace)?;
            tp_loss = Some(loss);
            if let Flow::Stop = w.submit(grads) {
                break 'episodes;
            }
            updates += 1;
        }

        let Some(end) = trace.end else { continue };
        let summary = EpisodeSummary {
            worker_id: cfg.worker_id,
            kind: cfg.kind,
            episode_index,
            variant: cfg.variant,
            outcome: classify(AGENT, end.rewards, end.deaths, trace.len() as u32),
            tp_loss,
            pi_loss_mean: (pi_count > 0).then(|| pi_sum / pi_count as f64),
            board_seed,
            actions: trace.actions(),
            deaths: end.deaths,
            updates,
        };
        episode_index += 1;
        w.stats.episodes += 1;
        on_episode(summary);
    }
    Ok(w.stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Arch;
    use crate::opponents::StaticAgent;
    use std::vec::Vec;

    fn store(max: Option<u64>) -> LocalStore {
        LocalStore::new(NetworkParams::init(Arch::narrow(6, 4, 16), 1), AdamConfig::default(), max)
    }

    fn cfg(variant: Variant) -> WorkerConfig {
        let mut c = WorkerConfig::new(0, variant, WorkerKind::Plain, BoardConfig::with_size(6), 42);
        c.board.max_steps = 60;
        c
    }

    #[test]
    fn stop_before_start_does_nothing() {
        let s = store(None);
        let control = RunControl::new(None);
        control.stop();
        let stats = run_worker(&cfg(Variant::A3c), &s, &mut StaticAgent, &control, &mut |_| panic!("no episodes")).unwrap();
        assert_eq!(stats.updates, 0);
        assert_eq!(s.version(), 0);
    }

    #[test]
    fn fixed_seeds_repeat_exactly() {
        let run = || {
            let s = store(None);
            let mut c = cfg(Variant::A3cTp);
            c.max_episodes = Some(4);
            let mut rewards = Vec::new();
            run_worker(&c, &s, &mut StaticAgent, &RunControl::new(None), &mut |e| rewards.push((e.outcome, e.actions))).unwrap();
            (rewards, s.into_parts().0)
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a.len(), 4);
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }

    #[test]
    fn update_budget_caps_version() {
        let s = store(Some(7));
        let c = cfg(Variant::A3c);
        let stats = run_worker(&c, &s, &mut StaticAgent, &RunControl::new(None), &mut |_| {}).unwrap();
        assert_eq!(s.version(), 7);
        assert_eq!(stats.updates, 7);
    }

    #[test]
    fn plain_worker_reports_no_imitation_loss() {
        let s = store(None);
        let mut c = cfg(Variant::PiA3cTp);
        c.max_episodes = Some(2);
        run_worker(&c, &s, &mut StaticAgent, &RunControl::new(None), &mut |e| {
            assert!(e.pi_loss_mean.is_none());
            assert!(e.tp_loss.is_some());
        })
        .unwrap();
    }

    #[test]
    fn demonstrator_reports_imitation_loss() {
        let s = store(None);
        let mut c = cfg(Variant::PiA3c);
        c.kind = WorkerKind::Demonstrator;
        c.search = SearchConfig { rollouts_per_move: 8, rollout_depth: 6, ..SearchConfig::default() };
        c.max_episodes = Some(1);
        let mut seen = 0;
        run_worker(&c, &s, &mut StaticAgent, &RunControl::new(None), &mut |e| {
            let pi = e.pi_loss_mean.unwrap();
            assert!(pi.is_finite() && pi >= 0.0);
            seen += 1;
        })
        .unwrap();
        assert_eq!(seen, 1);
    }

    #[test]
    fn demonstrator_in_plain_variant_is_rejected() {
        let mut c = cfg(Variant::A3cTp);
        c.kind = WorkerKind::Demonstrator;
        let r = run_worker(&c, &store(None), &mut StaticAgent, &RunControl::new(None), &mut |_| {});
        assert!(matches!(r, Err(RlError::Config(_))));
    }

    #[test]
    fn sampling_follows_probabilities() {
        let mut rng = rng_from_seed(4);
        let mut p = [0.0f32; 6];
        p[3] = 1.0;
        for _ in 0..100 {
            assert_eq!(sample_action(&p, &mut rng), Action::MoveRight);
        }
        let p = [0.5, 0.0, 0.0, 0.0, 0.0, 0.5];
        let bombs = (0..2000).filter(|_| sample_action(&p, &mut rng) == Action::PlaceBomb).count();
        assert!((900..1100).contains(&bombs));
    }
}

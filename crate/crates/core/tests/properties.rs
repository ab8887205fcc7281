#![allow(clippy::needless_range_loop)]

use bac_core::env::{Action, BoardConfig, Bomb, Direction, Event, Flame, GameState, Pos, Terrain};
use bac_core::mcts::{search_tree, SearchConfig, SearchNode, SearchTree, UniformRandom, ROOT};
use bac_core::nn::{Arch, NetworkParams};
use bac_core::opponents::{danger_map, AgentPolicy, RandomAgent, RuleBasedAgent};
use bac_core::rl::{a3c_loss, combined_loss, n_step_advantages, tp_targets, A3cStep, LossBatch, LossWeights, Variant, WorkerKind};
use bac_core::{mcts, rng_from_seed};
use proptest::prelude::*;
use rand::Rng;

fn policy() -> impl Strategy<Value = [f64; 6]> {
    prop::array::uniform6(0.001f64..1.0).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        raw.map(|v| v / s)
    })
}

fn step() -> impl Strategy<Value = A3cStep> {
    (0usize..6, policy(), -1.0f64..1.0, -1.0f64..1.0, -2.0f64..2.0).prop_map(|(a, policy, value, ret, advantage)| A3cStep {
        action: Action::ALL[a],
        policy,
        value,
        ret,
        advantage,
    })
}

proptest! {
    #[test]
    fn advantages_match_literal_sums(
        seg in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..=20),
        boot in -1.0f64..1.0,
        gamma in 0.5f64..1.0,
    ) {
        let rewards: Vec<f64> = seg.iter().map(|s| s.0).collect();
        let values: Vec<f64> = seg.iter().map(|s| s.1).collect();
        let r = n_step_advantages(&rewards, &values, boot, gamma);
        let n = rewards.len();
        for t in 0..n {
            let mut sum = 0.0;
            for k in 0..n - t {
                sum += gamma.powi(k as i32) * rewards[t + k];
            }
            sum += gamma.powi((n - t) as i32) * boot;
            prop_assert!((r.returns[t] - sum).abs() < 1e-6);
            prop_assert!((r.advantages[t] - (sum - values[t])).abs() < 1e-6);
        }
    }

    #[test]
    fn tp_targets_are_affine(s in 2usize..=801) {
        let y = tp_targets(s).values;
        prop_assert_eq!(y.len(), s);
        prop_assert_eq!(y[0], 0.0);
        prop_assert_eq!(y[s - 1], 1.0);
        for i in 0..s {
            prop_assert_eq!(y[i], i as f64 / (s - 1) as f64);
        }
        prop_assert!(y.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn zero_lambdas_degenerate_to_a3c(
        steps in prop::collection::vec(step(), 1..=20),
        demo in prop::collection::vec(0usize..6, 20),
        preds in prop::collection::vec(0.0f64..1.0, 21),
    ) {
        let w0 = LossWeights { lambda_tp: 0.0, lambda_pi: 0.0, ..LossWeights::default() };
        let demo: Vec<Action> = demo[..steps.len()].iter().map(|&a| Action::ALL[a]).collect();
        let preds = &preds[..steps.len() + 1];
        let targets = tp_targets(preds.len()).values;
        let full = LossBatch {
            steps: &steps,
            demo_actions: Some(&demo),
            tp: Some(bac_core::rl::TpBatch { predictions: preds, targets: &targets }),
        };
        let c = combined_loss(&full, &w0, Variant::PiA3cTp, WorkerKind::Demonstrator).unwrap();
        let plain = a3c_loss(&steps, &w0);
        prop_assert_eq!(&c.head_grads[..steps.len()], &plain.head_grads[..]);
        prop_assert!(c.head_grads[steps.len()].is_zero());
        prop_assert_eq!(c.total.to_bits(), plain.total.to_bits());
    }

    #[test]
    fn softmax_head_is_a_distribution(seed in any::<u64>(), board_seed in any::<u64>()) {
        let p = NetworkParams::<f32>::init(Arch::narrow(6, 4, 8), seed);
        let s = BoardConfig::with_size(6).generate(board_seed).unwrap();
        let out = p.predict(&bac_core::env::encode_observation(&s, 0)).unwrap();
        let sum: f32 = out.policy.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-5);
        prop_assert!(out.policy.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(out.terminal_pred > 0.0 && out.terminal_pred < 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn env_conservation_laws(board_seed in any::<u64>(), play_seed in any::<u64>(), size in 6usize..=9) {
        let mut s = BoardConfig::with_size(size).generate(board_seed).unwrap();
        let rigid: Vec<bool> = s.terrain.iter().map(|t| *t == Terrain::Rigid).collect();
        let mut rng = rng_from_seed(play_seed);
        while !s.is_terminal() {
            let a = [mcts::random_legal(&s, 0, &mut rng), mcts::random_legal(&s, 1, &mut rng)];
            s.advance(a).unwrap();
            let now: Vec<bool> = s.terrain.iter().map(|t| *t == Terrain::Rigid).collect();
            prop_assert_eq!(&now, &rigid);
            for i in 0..2 {
                let ag = &s.agents[i];
                prop_assert_eq!(ag.ammo as usize + s.bombs_owned(i), ag.max_ammo as usize);
                if ag.alive {
                    prop_assert_eq!(s.terrain_at(ag.pos), Terrain::Passage);
                }
            }
            for (k, b) in s.bombs.iter().enumerate() {
                prop_assert!(s.bombs[k + 1..].iter().all(|o| o.pos != b.pos));
                prop_assert!(b.life >= 1);
            }
            prop_assert!(s.flames.iter().all(|f| f.life >= 1 && f.life <= 2));
        }
        prop_assert!(s.timestep <= s.max_steps);
    }

    #[test]
    fn bomb_and_flame_timing(board_seed in any::<u64>(), play_seed in any::<u64>()) {
        let mut s = BoardConfig::with_size(7).generate(board_seed).unwrap();
        let mut rng = rng_from_seed(play_seed);
        let mut placed = std::collections::HashMap::new();
        let mut burned: Vec<Vec<Pos>> = Vec::new();
        while !s.is_terminal() {
            let t = s.timestep;
            let a = [mcts::random_legal(&s, 0, &mut rng), mcts::random_legal(&s, 1, &mut rng)];
            let r = s.step(a).unwrap();
            let mut cells = Vec::new();
            for e in &r.events {
                match e {
                    Event::BombPlaced { id, .. } => {
                        placed.insert(*id, t);
                    }
                    Event::BombExploded { id, chained, cells: c, .. } => {
                        if !chained {
                            prop_assert_eq!(r.state.timestep - placed[id], 10);
                        }
                        cells.extend_from_slice(c);
                    }
                    _ => {}
                }
            }
            burned.push(cells);
            let k = burned.len() - 1;
            for f in &r.state.flames {
                let fresh = burned[k].contains(&f.pos);
                let older = k >= 1 && burned[k - 1].contains(&f.pos);
                prop_assert!(fresh || older, "flame at {:?} without a recent blast", f.pos);
                prop_assert_eq!(f.life, if fresh { 2 } else { 1 });
            }
            for p in &burned[k] {
                prop_assert!(r.state.flame_at(*p).is_some());
            }
            s = r.state;
        }
    }

    #[test]
    fn danger_map_matches_stepping(seed in any::<u64>()) {
        let mut rng = rng_from_seed(seed);
        let size = 7;
        let mut s = GameState::open(size, Pos::new(0, 6), Pos::new(6, 6));
        s.max_steps = 10_000;
        for x in 0..size as u8 {
            s.set_terrain(Pos::new(x, 5), Terrain::Rigid);
        }
        for y in 0..5u8 {
            for x in 0..size as u8 {
                let p = Pos::new(x, y);
                match rng.gen_range(0..10) {
                    0 => s.set_terrain(p, Terrain::Rigid),
                    1 | 2 => s.set_terrain(p, Terrain::Wood),
                    3 => s.bombs.push(Bomb {
                        id: s.bombs.len() as u32,
                        pos: p,
                        owner: rng.gen_range(0..2),
                        life: rng.gen_range(1..=10),
                        blast_radius: rng.gen_range(2..=4),
                        moving: if rng.gen_bool(0.2) { Some(Direction::ALL[rng.gen_range(0..4)]) } else { None },
                    }),
                    4 => s.flames.push(Flame { pos: p, life: rng.gen_range(1..=2), owners: 1 }),
                    _ => {}
                }
            }
        }
        let d = danger_map(&s);
        for t in 0..=12usize {
            for idx in 0..size * size {
                let p = Pos::from_index(idx, size);
                prop_assert_eq!(d.burning_at(p, t), s.flame_at(p).is_some(), "cell {:?} t {}", p, t);
            }
            s.advance([Action::Stop, Action::Stop]).unwrap();
        }
    }

    #[test]
    fn scripted_agents_stay_legal(board_seed in any::<u64>(), seed in any::<u64>()) {
        let mut s = BoardConfig::with_size(6).generate(board_seed).unwrap();
        let mut a = RuleBasedAgent::new(seed);
        let mut b = RandomAgent::new(seed ^ 1);
        while !s.is_terminal() {
            let x = a.act(&s, 0);
            let y = b.act(&s, 1);
            prop_assert!(s.legal_actions(0).unwrap().contains(x));
            prop_assert!(s.legal_actions(1).unwrap().contains(y));
            s.advance([x, y]).unwrap();
        }
    }

    #[test]
    fn search_tree_visit_accounting(board_seed in any::<u64>(), seed in any::<u64>(), rollouts in 1u32..150) {
        let s = BoardConfig::with_size(6).generate(board_seed).unwrap();
        let cfg = SearchConfig { rollouts_per_move: rollouts, seed, rollout_depth: 10, ..SearchConfig::default() };
        let t = search_tree(&s, 0, &cfg, &mut UniformRandom).unwrap();
        prop_assert_eq!(t.root().n, rollouts);
        let legal = s.legal_actions(0).unwrap();
        for (a, _) in t.root().child_ids() {
            prop_assert!(legal.contains(a));
        }
        for (id, nd) in t.nodes.iter().enumerate() {
            let below: u32 = nd.child_ids().map(|(_, c)| t.nodes[c].n).sum();
            let own = u32::from(id != ROOT && nd.terminal_value.is_none());
            if nd.terminal_value.is_none() {
                prop_assert_eq!(nd.n, below + own);
            }
            prop_assert!(nd.mean().abs() <= 1.0);
        }
    }

    #[test]
    fn ucb_matches_formula(stats in prop::collection::vec((1u32..200, -1.0f64..1.0), 2..=6), c in 0.1f64..3.0) {
        let s = GameState::open(6, Pos::new(2, 2), Pos::new(5, 5));
        let mut t = SearchTree::new(s.clone(), 0, SearchConfig { exploration: c, ..SearchConfig::default() }).unwrap();
        let mut total = 0;
        for (i, (n, mean)) in stats.iter().enumerate() {
            let a = Action::ALL[i];
            let id = t.nodes.len();
            t.nodes.push(SearchNode {
                state: s.clone(),
                n: *n,
                w: mean * *n as f64,
                children: [None; 6],
                untried: Default::default(),
                depth: 1,
                parent: Some(ROOT),
                action: Some(a),
                terminal_value: None,
            });
            t.nodes[ROOT].children[i] = Some(id);
            t.nodes[ROOT].untried = t.nodes[ROOT].untried.without(a);
            total += n;
        }
        for a in Action::ALL.into_iter().skip(stats.len()) {
            t.nodes[ROOT].untried = t.nodes[ROOT].untried.without(a);
        }
        t.nodes[ROOT].n = total;
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (n, mean)) in stats.iter().enumerate() {
            let u = (mean * *n as f64) / *n as f64 + c * ((total as f64).ln() / *n as f64).sqrt();
            if u > best.1 {
                best = (i, u);
            }
        }
        prop_assert_eq!(t.ucb_select(ROOT).unwrap(), Action::ALL[best.0]);
    }

    #[test]
    fn root_mean_is_running_mean(values in prop::collection::vec(-1.0f64..=1.0, 1..50)) {
        let s = GameState::open(6, Pos::new(2, 2), Pos::new(5, 5));
        let mut t = SearchTree::new(s, 0, SearchConfig::default()).unwrap();
        for v in &values {
            t.backpropagate(&[ROOT], *v);
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!((t.root().mean() - mean).abs() < 1e-12);
    }
}

#[test]
fn static_vs_static_is_a_timeout_draw() {
    let mut s = BoardConfig::with_size(8).generate(3).unwrap();
    while !s.is_terminal() {
        s.advance([Action::Stop, Action::Stop]).unwrap();
    }
    assert_eq!(s.timestep, 800);
    assert_eq!(s.terminal_rewards(), Some([-1, -1]));
}

/// Cells reachable within `steps` moves that the blast cross of `bomb` misses.
fn has_safe_cell(s: &GameState, from: Pos, bomb: Pos, radius: u8, steps: u32) -> bool {
    let size = s.size;
    let in_cross = |p: Pos| {
        if p == bomb {
            return true;
        }
        for d in Direction::ALL {
            let mut q = bomb;
            for _ in 1..radius {
                match q.offset(d, size) {
                    Some(n) if s.terrain_at(n) == Terrain::Passage => q = n,
                    _ => break,
                }
                if q == p {
                    return true;
                }
            }
        }
        false
    };
    let mut seen = vec![false; size * size];
    let mut frontier = vec![from];
    seen[from.index(size)] = true;
    for _ in 0..=steps {
        if frontier.iter().any(|p| !in_cross(*p)) {
            return true;
        }
        let mut next = Vec::new();
        for p in frontier {
            for d in Direction::ALL {
                if let Some(q) = p.offset(d, size) {
                    if s.terrain_at(q) == Terrain::Passage && !s.has_bomb(q) && s.agent_at(q).is_none() && !seen[q.index(size)] {
                        seen[q.index(size)] = true;
                        next.push(q);
                    }
                }
            }
        }
        frontier = next;
    }
    false
}

#[test]
fn rule_based_escapes_enemy_bombs() {
    let mut scenarios = 0;
    let mut survived = 0;
    let mut k = 0u64;
    while scenarios < 100 {
        k += 1;
        let mut rng = rng_from_seed(k);
        let size = 7;
        let mut s = BoardConfig { rigid_prob: 0.1, wood_prob: 0.2, ..BoardConfig::with_size(size) }.generate(k).unwrap();
        // Drop a fresh enemy bomb on or next to the rule-based agent.
        let me = s.agents[1].pos;
        let spots: Vec<Pos> = std::iter::once(me)
            .chain(Direction::ALL.iter().filter_map(|d| me.offset(*d, size)))
            .filter(|p| s.terrain_at(*p) == Terrain::Passage && s.agent_at(*p) != Some(0))
            .collect();
        let pos = spots[rng.gen_range(0..spots.len())];
        if !has_safe_cell(&s, me, pos, 3, 9) {
            continue;
        }
        scenarios += 1;
        s.bombs.push(Bomb { id: 99, pos, owner: 0, life: 10, blast_radius: 3, moving: None });
        for a in &mut s.agents {
            a.ammo = 0;
            a.max_ammo = 0;
        }
        let mut agent = RuleBasedAgent::new(k);
        while !s.is_terminal() && s.timestep < 14 {
            let a = agent.act(&s, 1);
            s.advance([Action::Stop, a]).unwrap();
        }
        if s.agents[1].alive {
            survived += 1;
        } else {
            eprintln!("scenario {k}, bomb at {pos:?}\n{}", bac_core::env::render_ascii(&s));
        }
    }
    assert_eq!(survived, 100);
}

//! Oracle and invariant suites, shared by `selftest` and the acceptance run.
//! Each returns a [`SuiteResult`] instead of panicking so a runner can report
//! every suite.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::time::Instant;

use bac_core::check::{episode_loss, finite_difference_check, gradient_suite, GradCheckConfig, GradCheckReport, GradEpisode};
use bac_core::env::{Action, BoardConfig, Event, GameState, Pos, Terrain, BOMB_LIFE, FLAME_LIFE};
use bac_core::mcts::{self, SearchConfig, UniformRandom};
use bac_core::nn::{AdamConfig, AdamState, Arch, Gradients, NetworkParams};
use bac_core::opponents::{MctsAgent, StaticAgent};
use bac_core::outcome::OutcomeTag;
use bac_core::rl::{tp_targets, LossWeights, Variant, WorkerKind};
use bac_core::{mix_seed, rng_from_seed};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::checkpoint::{self, CheckpointError};
use crate::config::{OpponentSpec, RunConfig};
use crate::csvlog;
use crate::evaluate::play_match;
use crate::train::{self, ReplayRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {} ({:.1}s): {}", self.name, self.seconds, self.detail)
    }
}

fn timed(name: &str, body: impl FnOnce() -> Result<(bool, String), String>) -> SuiteResult {
    let t = Instant::now();
    let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    SuiteResult { name: name.into(), passed, detail, seconds: t.elapsed().as_secs_f64() }
}

/// Every coordinate of a narrow network on `instances` random episodes, plus
/// `sampled` random coordinates of the full-size network per instance.
pub fn gradients(board: usize, instances: usize, standard_instances: usize, sampled: usize, seed: u64) -> SuiteResult {
    timed("gradient check", || {
        let mut r = gradient_suite(Arch::narrow(board, 2, 4), instances, 8, seed).map_err(|e| e.to_string())?;
        let full = r.checked;
        let mut rng = rng_from_seed(mix_seed(seed, 1));
        let arch = Arch::standard(board);
        let mut std_report = GradCheckReport::default();
        for _ in 0..standard_instances {
            let p = NetworkParams::<f64>::init(arch, rng.gen());
            let ep = GradEpisode::random(board, 4, &mut rng);
            let coords: Vec<usize> = (0..sampled).map(|_| rng.gen_range(0..arch.param_count())).collect();
            let rep = finite_difference_check(&p, &ep, Variant::PiA3cTp, WorkerKind::Demonstrator, &GradCheckConfig::default(), Some(&coords))
                .map_err(|e| e.to_string())?;
            std_report.merge(&rep);
        }
        r.merge(&std_report);
        Ok((
            r.passed(),
            format!(
                "{instances} full instances ({full} coords) + {} sampled coords, {} failures, {} kink re-measurements, max rel err {:.2e}, max abs err {:.2e}",
                std_report.checked, r.failures, r.kinks, r.max_rel_err, r.max_abs_err
            ),
        ))
    })
}

/// Largest deviation of the targets from `i / (S - 1)` over every `S`.
pub fn tp_target_law(max_states: usize) -> SuiteResult {
    timed("terminal prediction targets", || {
        let mut worst = 0.0f64;
        let mut ends_ok = true;
        for s in 2..=max_states {
            let t = tp_targets(s);
            ends_ok &= !t.degenerate && t.values.len() == s && t.values[0] == 0.0 && t.values[s - 1] == 1.0;
            for (i, v) in t.values.iter().enumerate() {
                worst = worst.max((v - i as f64 / (s - 1) as f64).abs());
            }
        }
        Ok((ends_ok && worst == 0.0, format!("S in 2..={max_states}, endpoints ok: {ends_ok}, max deviation {worst:e}")))
    })
}

/// With both auxiliary weights at zero the full loss must give the plain
/// actor-critic loss and gradients bit for bit.
pub fn loss_degeneracy(segments: usize, seed: u64) -> SuiteResult {
    timed("zero-weight degeneracy", || {
        let mut rng = rng_from_seed(seed);
        let arch = Arch::narrow(6, 2, 3);
        let plain = LossWeights::default();
        let zeroed = LossWeights { lambda_tp: 0.0, lambda_pi: 0.0, ..plain };
        let mut mismatches = 0;
        for _ in 0..segments {
            let p = NetworkParams::<f64>::init(arch, rng.gen());
            let ep = GradEpisode::random(6, plain.t_max, &mut rng);
            let (la, ga) = episode_loss(&p, &ep, &plain, Variant::A3c, WorkerKind::Plain, true).map_err(|e| e.to_string())?;
            let (lb, gb) = episode_loss(&p, &ep, &zeroed, Variant::PiA3cTp, WorkerKind::Demonstrator, true).map_err(|e| e.to_string())?;
            let bits = |g: &Option<Gradients<f64>>| g.as_ref().map(|g| g.flat().map(|v| v.to_bits()).collect::<Vec<_>>());
            if la.to_bits() != lb.to_bits() || bits(&ga) != bits(&gb) {
                mismatches += 1;
            }
        }
        Ok((mismatches == 0, format!("{segments} segments, {mismatches} differ")))
    })
}

/// Timing and conservation laws over random-play episodes.
pub fn env_laws(episodes: usize, seed: u64) -> SuiteResult {
    timed("environment timing laws", || {
        let mut rng = rng_from_seed(seed);
        let (mut bombs, mut flames, mut steps) = (0u64, 0u64, 0u64);
        let mut violations: Vec<String> = Vec::new();
        let mut fail = |m: String| {
            if violations.len() < 5 {
                violations.push(m);
            }
        };
        for ep in 0..episodes {
            let size = rng.gen_range(6..=8);
            let mut s = BoardConfig::with_size(size).generate(rng.gen()).map_err(|e| e.to_string())?;
            let rigid: Vec<bool> = s.terrain.iter().map(|t| *t == Terrain::Rigid).collect();
            let mut placed: HashMap<u32, u32> = HashMap::new();
            let mut prev_blast: Vec<Pos> = Vec::new();
            while !s.is_terminal() {
                let t = s.timestep;
                let a = [mcts::random_legal(&s, 0, &mut rng), mcts::random_legal(&s, 1, &mut rng)];
                let r = s.step(a).map_err(|e| e.to_string())?;
                steps += 1;
                let mut blast = Vec::new();
                for e in &r.events {
                    match e {
                        Event::BombPlaced { id, .. } => {
                            placed.insert(*id, t);
                        }
                        Event::BombExploded { id, chained, cells, .. } => {
                            if !chained {
                                bombs += 1;
                                match placed.get(id) {
                                    Some(&p) if r.state.timestep - p == BOMB_LIFE as u32 => {}
                                    other => fail(format!("episode {ep}: bomb {id} placed {other:?} exploded at {}", r.state.timestep)),
                                }
                            }
                            blast.extend_from_slice(cells);
                        }
                        _ => {}
                    }
                }
                for f in &r.state.flames {
                    let fresh = blast.contains(&f.pos);
                    let older = prev_blast.contains(&f.pos);
                    if !(fresh || older) || f.life != if fresh { FLAME_LIFE } else { FLAME_LIFE - 1 } {
                        fail(format!("episode {ep}: flame at {:?} life {} at t={}", f.pos, f.life, r.state.timestep));
                    }
                }
                flames += blast.len() as u64;
                for p in &blast {
                    if r.state.flame_at(*p).is_none() {
                        fail(format!("episode {ep}: blast cell {p:?} has no flame"));
                    }
                }
                if r.state.terrain.iter().map(|t| *t == Terrain::Rigid).ne(rigid.iter().copied()) {
                    fail(format!("episode {ep}: rigid walls changed at t={}", r.state.timestep));
                }
                for (i, ag) in r.state.agents.iter().enumerate() {
                    if ag.ammo as usize + r.state.bombs_owned(i) != ag.max_ammo as usize {
                        fail(format!("episode {ep}: agent {i} ammo {} + bombs {} != {}", ag.ammo, r.state.bombs_owned(i), ag.max_ammo));
                    }
                }
                prev_blast = blast;
                s = r.state;
            }
        }
        let ok = violations.is_empty();
        let mut detail = format!("{episodes} episodes, {steps} steps, {bombs} fused explosions, {flames} flame cells");
        if !ok {
            detail.push_str(&format!("; violations: {}", violations.join("; ")));
        }
        Ok((ok, detail))
    })
}

/// Certified positions: the search must pick the dominant move in at least
/// `min_rate` of `trials` seeded searches per position.
pub fn mcts_oracle(positions: &[(GameState, Action)], trials: u64, rollouts: u32, min_rate: f64) -> SuiteResult {
    timed("search picks certified moves", || {
        let mut worst = (1.0f64, 0usize);
        let mut total = 0u64;
        for (k, (s, expected)) in positions.iter().enumerate() {
            let certified = crate::fixtures::dominant_action(s);
            if certified != Some(*expected) {
                return Ok((false, format!("position {k}: oracle gives {certified:?}, fixture declares {expected}")));
            }
            let mut hits = 0;
            for trial in 0..trials {
                let cfg = SearchConfig { rollouts_per_move: rollouts, seed: mix_seed(k as u64, trial), ..SearchConfig::default() };
                if mcts::search(s, 0, &cfg, &mut UniformRandom).map_err(|e| e.to_string())? == *expected {
                    hits += 1;
                }
            }
            total += hits;
            let rate = hits as f64 / trials as f64;
            if rate < worst.0 {
                worst = (rate, k);
            }
        }
        Ok((
            worst.0 >= min_rate,
            format!(
                "{} positions x {trials} trials at {rollouts} rollouts, overall {:.3}, worst position {} at {:.2}",
                positions.len(),
                total as f64 / (positions.len() as u64 * trials) as f64,
                worst.1,
                worst.0
            ),
        ))
    })
}

pub fn mcts_vs_static(games: u64, rollouts: u32, board: usize, min_win_rate: f64, seed: u64) -> SuiteResult {
    timed("search agent beats static", || {
        let mut agent = MctsAgent::new(SearchConfig::with_rollouts(rollouts));
        let s = play_match(&mut agent, &mut StaticAgent, &BoardConfig::with_size(board), games, seed).map_err(|e| e.to_string())?;
        Ok((s.win_rate() >= min_win_rate, format!("{} wins, {} losses, {} draws over {games} games on {board}x{board}", s.wins, s.losses, s.draws)))
    })
}

/// Two identical single-worker runs must write byte-identical logs.
pub fn determinism(dir: &Path, base: &RunConfig) -> SuiteResult {
    timed("deterministic replay of a run", || {
        let mut bodies = Vec::new();
        for k in 0..2 {
            let cfg = RunConfig { out_dir: dir.join(format!("run{k}")), workers: 1, deterministic: true, ..base.clone() };
            let out = train::train(&cfg, None).map_err(|e| e.to_string())?;
            let csv = std::fs::read(train::csv_path(&out.dir)).map_err(|e| e.to_string())?;
            let log = std::fs::read(train::replay_log_path(&out.dir)).map_err(|e| e.to_string())?;
            bodies.push((csv, log, out.params));
        }
        let rows = csvlog::read_rows(&bodies[0].0[..]).map_err(|e| e.to_string())?.len();
        let same = bodies[0] == bodies[1];
        Ok((
            same && rows as u64 == base.episodes.unwrap_or(0),
            format!("{rows} episodes of {}, identical csv, replay log and weights: {same}", base.variant),
        ))
    })
}

/// Round trip with real optimizer moments, then corrupted files: each must
/// give the declared error and leave the target state untouched.
pub fn checkpoint_integrity(dir: &Path) -> SuiteResult {
    timed("checkpoint integrity", || {
        let arch = Arch::narrow(6, 4, 8);
        let mut params = NetworkParams::<f32>::init(arch, 5);
        let mut adam = AdamState::new(&params, AdamConfig::default());
        let mut rng = rng_from_seed(77);
        for _ in 0..5 {
            let mut g = Gradients::zeros_like(&params);
            for t in g.tensors.iter_mut() {
                for v in t.data.iter_mut() {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
            adam.apply(&mut params, &g).map_err(|e| e.to_string())?;
        }
        let path = dir.join("ck.bin");
        checkpoint::save(&path, &params, &adam).map_err(|e| e.to_string())?;
        let back = checkpoint::load(&path, Some(&arch)).map_err(|e| e.to_string())?;
        let bits = |p: &NetworkParams<f32>, a: &AdamState<f32>| -> Vec<u32> {
            p.flat().chain(a.m.iter().chain(&a.v).flat_map(|t| t.data.iter())).map(|v| v.to_bits()).collect()
        };
        let mut problems = Vec::new();
        if bits(&back.params, &back.adam) != bits(&params, &adam)
            || back.params.version != params.version
            || back.adam.step != adam.step
            || back.adam.config != adam.config
        {
            problems.push("round trip differs".to_string());
        }
        let good = std::fs::read(&path).map_err(|e| e.to_string())?;

        let mut cases: Vec<(String, Vec<u8>)> = Vec::new();
        for cut in [0, 3, 7, 15, good.len() / 3, good.len() / 2, good.len() - 5, good.len() - 1] {
            cases.push((format!("truncated to {cut} bytes"), good[..cut].to_vec()));
        }
        let mut b = good.clone();
        b[0] = b'X';
        cases.push(("bad magic".into(), b));
        let mut b = good.clone();
        let k = good.len() * 2 / 3;
        b[k] ^= 0x01;
        cases.push((format!("bit flip at {k}"), b));
        let mut b = good.clone();
        b.extend_from_slice(b"junk");
        cases.push(("trailing bytes".into(), b));

        let target = NetworkParams::<f32>::init(arch, 99);
        let target_adam = AdamState::new(&target, AdamConfig::default());
        let bad_path = dir.join("bad.bin");
        for (name, bytes) in &cases {
            std::fs::write(&bad_path, bytes).map_err(|e| e.to_string())?;
            let (mut p, mut a) = (target.clone(), target_adam.clone());
            match checkpoint::load_into(&bad_path, &mut p, &mut a) {
                Err(CheckpointError::Format { .. }) => {}
                other => problems.push(format!("{name}: got {other:?}")),
            }
            if p != target || a != target_adam {
                problems.push(format!("{name}: state mutated"));
            }
        }

        let other = NetworkParams::<f32>::init(Arch::narrow(7, 4, 8), 5);
        let other_path = dir.join("board7.bin");
        checkpoint::save(&other_path, &other, &AdamState::new(&other, AdamConfig::default())).map_err(|e| e.to_string())?;
        let (mut p, mut a) = (target.clone(), target_adam.clone());
        match checkpoint::load_into(&other_path, &mut p, &mut a) {
            Err(CheckpointError::ShapeMismatch { tensor, .. }) if tensor == "dense.weight" => {}
            other => problems.push(format!("board mismatch: got {other:?}")),
        }
        if p != target || a != target_adam {
            problems.push("board mismatch: state mutated".into());
        }

        let n = cases.len() + 2;
        Ok((
            problems.is_empty(),
            if problems.is_empty() { format!("round trip bit-exact, {n} corruption cases rejected cleanly") } else { problems.join("; ") },
        ))
    })
}

/// Re-derives an episode's outcome by stepping the logged actions and
/// attributing each death from the explosion events alone.
pub fn rederive_outcome(board: &BoardConfig, rec: &ReplayRecord) -> Result<(i8, OutcomeTag, u32), String> {
    let mut s = board.generate(rec.board_seed).map_err(|e| e.to_string())?;
    // Owner bits of the blasts that hit each cell in the current and previous state.
    let mut now: HashMap<Pos, u8> = HashMap::new();
    let mut before: HashMap<Pos, u8>;
    let mut killed_by: [Option<u8>; 2] = [None; 2];
    for (t, joint) in rec.actions.iter().enumerate() {
        if s.is_terminal() {
            return Err(format!("actions continue past the end at step {t}"));
        }
        let alive = [s.agents[0].alive, s.agents[1].alive];
        let r = s.step(*joint).map_err(|e| e.to_string())?;
        before = std::mem::take(&mut now);
        for e in &r.events {
            if let Event::BombExploded { owner, cells, .. } = e {
                for p in cells {
                    *now.entry(*p).or_default() |= 1 << owner;
                }
            }
        }
        for i in 0..2 {
            if alive[i] && !r.state.agents[i].alive {
                let p = r.state.agents[i].pos;
                killed_by[i] = Some(now.get(&p).copied().unwrap_or(0) | before.get(&p).copied().unwrap_or(0));
            }
        }
        s = r.state;
    }
    let rewards = s.terminal_rewards().ok_or("episode log ends before the terminal state")?;
    let own = |i: usize| killed_by[i].is_some_and(|k| k & (1 << i) != 0);
    let tag = match (rewards[0], killed_by[0]) {
        (1, _) if own(1) => OutcomeTag::WinOpponentSuicide,
        (1, _) => OutcomeTag::Win,
        (_, Some(_)) if own(0) => OutcomeTag::LossSuicide,
        (_, Some(_)) => OutcomeTag::LossKilled,
        (_, None) => OutcomeTag::Draw,
    };
    Ok((rewards[0], tag, s.timestep))
}

/// Runs training, then checks that tags partition the episodes and that
/// `sample` logged episodes re-derive to the logged reward, length and tag.
pub fn outcome_accounting(dir: &Path, base: &RunConfig, sample: usize, seed: u64) -> SuiteResult {
    timed("outcome accounting", || {
        let cfg = RunConfig { out_dir: dir.to_path_buf(), ..base.clone() };
        let out = train::train(&cfg, None).map_err(|e| e.to_string())?;
        let rows = csvlog::read_file(&train::csv_path(&out.dir)).map_err(|e| e.to_string())?;
        let log = train::read_replay_log(&train::replay_log_path(&out.dir)).map_err(|e| e.to_string())?;
        let mut problems = Vec::new();
        let tag_total: u64 = out.summary.tags.iter().sum();
        if tag_total != rows.len() as u64 || out.summary.episodes != rows.len() as u64 {
            problems.push(format!("tag counts sum to {tag_total} over {} rows", rows.len()));
        }
        if log.len() != rows.len() {
            problems.push(format!("{} replay records for {} rows", log.len(), rows.len()));
        }
        let by_key: HashMap<(usize, u64), &csvlog::EpisodeRow> = rows.iter().map(|r| ((r.worker_id, r.episode_index), r)).collect();
        let mut picked: Vec<&ReplayRecord> = log.iter().collect();
        picked.shuffle(&mut rng_from_seed(seed));
        picked.truncate(sample);
        let board = cfg.board();
        let mut counts = [0u64; 5];
        for rec in &picked {
            let Some(row) = by_key.get(&(rec.worker_id, rec.episode_index)) else {
                problems.push(format!("no csv row for worker {} episode {}", rec.worker_id, rec.episode_index));
                continue;
            };
            match rederive_outcome(&board, rec) {
                Ok((reward, tag, len)) => {
                    counts[tag.index()] += 1;
                    if reward != row.reward || tag != row.outcome_tag || len != row.episode_length {
                        problems.push(format!(
                            "worker {} episode {}: logged ({}, {}, {}) replayed ({reward}, {tag}, {len})",
                            rec.worker_id, rec.episode_index, row.reward, row.outcome_tag, row.episode_length
                        ));
                    }
                }
                Err(e) => problems.push(format!("worker {} episode {}: {e}", rec.worker_id, rec.episode_index)),
            }
        }
        let hist: Vec<String> = OutcomeTag::ALL.iter().map(|t| format!("{t}={}", counts[t.index()])).collect();
        let ok = problems.is_empty() && picked.len() == sample;
        problems.truncate(5);
        Ok((
            ok,
            format!(
                "{} episodes, {} replayed [{}]{}",
                rows.len(),
                picked.len(),
                hist.join(" "),
                if ok { String::new() } else { format!("; {}", problems.join("; ")) }
            ),
        ))
    })
}

/// Small configuration used by the determinism and accounting checks.
pub fn quick_run_config(variant: Variant, episodes: u64, seed: u64) -> RunConfig {
    RunConfig {
        variant,
        workers: 1,
        demonstrators: usize::from(variant.has_pi()),
        episodes: Some(episodes),
        seed,
        conv_filters: 8,
        hidden: 32,
        checkpoint_every: 0,
        search: SearchConfig::with_rollouts(10),
        opponent: OpponentSpec::Static,
        max_steps: 200,
        ..RunConfig::default()
    }
}

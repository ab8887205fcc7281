//! Multi-worker training runs.
//!
//! Workers run on scoped threads against one [`SharedStore`]. Episode
//! summaries flow over a channel to the calling thread, which owns every
//! output file:
//!
//! - `config.txt`: the resolved configuration
//! - `episodes.csv`: one row per episode
//! - `episodes.log`: board seed and joint actions per episode, for replay
//! - `checkpoint-init.bin`, `checkpoint-<version>.bin`, `checkpoint-final.bin`
//! - `summary.txt` and `curve.svg`

use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use bac_core::env::{Action, NUM_AGENTS};
use bac_core::mix_seed;
use bac_core::nn::NetworkParams;
use bac_core::opponents::AgentPolicy;
use bac_core::outcome::OutcomeTag;
use bac_core::rl::{run_worker, EpisodeSummary, RunControl, WorkerConfig, WorkerKind, WorkerStats};

use crate::checkpoint;
use crate::config::{ConfigError, OpponentSpec, RunConfig};
use crate::csvlog::{EpisodeRow, EpisodeWriter};
use crate::error::HarnessError;
use crate::evaluate::{build_opponent, load_params_for_board};
use crate::plot;
use crate::store::SharedStore;

/// Replay information for one logged episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayRecord {
    pub worker_id: usize,
    pub episode_index: u64,
    pub board_seed: u64,
    pub actions: Vec<[Action; NUM_AGENTS]>,
}

impl ReplayRecord {
    pub fn from_summary(s: &EpisodeSummary) -> Self {
        ReplayRecord { worker_id: s.worker_id, episode_index: s.episode_index, board_seed: s.board_seed, actions: s.actions.clone() }
    }

    /// `worker episode board_seed` then one two-digit token per timestep.
    pub fn to_line(&self) -> String {
        let mut s = format!("{} {} {}", self.worker_id, self.episode_index, self.board_seed);
        for [a, b] in &self.actions {
            let _ = write!(s, " {}{}", a.code(), b.code());
        }
        s
    }

    pub fn parse_line(line: &str) -> Option<Self> {
        let mut it = line.split_whitespace();
        let worker_id = it.next()?.parse().ok()?;
        let episode_index = it.next()?.parse().ok()?;
        let board_seed = it.next()?.parse().ok()?;
        let actions = it
            .map(|t| {
                let b = t.as_bytes();
                if b.len() != 2 {
                    return None;
                }
                let code = |c: u8| Action::from_code(c.checked_sub(b'0')? as usize);
                Some([code(b[0])?, code(b[1])?])
            })
            .collect::<Option<Vec<_>>>()?;
        Some(ReplayRecord { worker_id, episode_index, board_seed, actions })
    }
}

pub fn read_replay_log(path: &Path) -> Result<Vec<ReplayRecord>, HarnessError> {
    let f = File::open(path).map_err(HarnessError::io(path.display().to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(HarnessError::io(path.display().to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            ReplayRecord::parse_line(&line).ok_or_else(|| HarnessError::Runtime(format!("{}:{}: malformed replay record", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

/// End-of-run statistics.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub episodes: u64,
    pub updates: u64,
    pub demonstrator_ids: Vec<usize>,
    /// Episodes that feed the learning curve (demonstrators excluded).
    pub curve_episodes: u64,
    pub window: usize,
    /// Mean reward of the last `window` curve episodes.
    pub mean_reward_last: Option<f64>,
    pub tags: [u64; 5],
    pub curve_tags: [u64; 5],
    pub worker_stats: Vec<WorkerStats>,
    pub elapsed_ms: u64,
}

impl RunSummary {
    fn from_rows(rows: &[EpisodeRow], demonstrators: &[usize], window: usize) -> Self {
        let curve = plot::curve_rows(rows, demonstrators);
        let mut s = RunSummary {
            episodes: rows.len() as u64,
            demonstrator_ids: demonstrators.to_vec(),
            curve_episodes: curve.len() as u64,
            window,
            ..RunSummary::default()
        };
        for r in rows {
            s.tags[r.outcome_tag.index()] += 1;
        }
        for r in &curve {
            s.curve_tags[r.outcome_tag.index()] += 1;
        }
        if !curve.is_empty() {
            let tail = &curve[curve.len().saturating_sub(window)..];
            s.mean_reward_last = Some(tail.iter().map(|r| r.reward as f64).sum::<f64>() / tail.len() as f64);
        }
        s
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes {}", self.episodes)?;
        writeln!(f, "updates {}", self.updates)?;
        let ids: Vec<String> = self.demonstrator_ids.iter().map(|i| i.to_string()).collect();
        writeln!(f, "demonstrators {}", if ids.is_empty() { "none".into() } else { ids.join(",") })?;
        writeln!(f, "curve_episodes {}", self.curve_episodes)?;
        match self.mean_reward_last {
            Some(m) => writeln!(f, "mean_reward_last_{} {m:.4}", self.window)?,
            None => writeln!(f, "mean_reward_last_{} none", self.window)?,
        }
        for t in OutcomeTag::ALL {
            writeln!(f, "tag {} {} curve {}", t, self.tags[t.index()], self.curve_tags[t.index()])?;
        }
        for (i, w) in self.worker_stats.iter().enumerate() {
            writeln!(
                f,
                "worker {i} episodes {} updates {} rejected {} env_faults {} prob_clamps {}",
                w.episodes, w.updates, w.rejected_updates, w.env_faults, w.prob_clamps
            )?;
        }
        writeln!(f, "elapsed_ms {}", self.elapsed_ms)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub params: NetworkParams<f32>,
}

pub fn csv_path(dir: &Path) -> PathBuf {
    dir.join("episodes.csv")
}

pub fn replay_log_path(dir: &Path) -> PathBuf {
    dir.join("episodes.log")
}

/// `BAC_THREADS`, when set to a number.
pub fn threads_cap_from_env() -> Result<Option<usize>, ConfigError> {
    match std::env::var("BAC_THREADS") {
        Ok(v) => {
            v.trim().parse().map(Some).map_err(|_| ConfigError::Value { key: "BAC_THREADS".into(), value: v, reason: "expected an integer".into() })
        }
        Err(_) => Ok(None),
    }
}

/// Runs a full training job. Configuration problems are reported before any
/// file is written.
pub fn train(cfg: &RunConfig, threads_cap: Option<usize>) -> Result<TrainOutput, HarnessError> {
    cfg.validate()?;
    let workers = cfg.effective_workers(threads_cap);
    if cfg.deterministic && workers != 1 {
        return Err(ConfigError::Invalid("deterministic mode needs exactly one worker".into()).into());
    }
    let arch = cfg.arch();
    // Load a network opponent once, before anything is written.
    let net_opponent = match &cfg.opponent {
        OpponentSpec::Net(p) => Some(load_params_for_board(p, Some(cfg.board_size))?),
        _ => None,
    };

    let dir = cfg.out_dir.clone();
    std::fs::create_dir_all(&dir).map_err(HarnessError::io(dir.display().to_string()))?;
    let io = |p: &Path| HarnessError::io(p.display().to_string());
    let cfg_path = dir.join("config.txt");
    std::fs::write(&cfg_path, cfg.to_text()).map_err(io(&cfg_path))?;

    let params = NetworkParams::<f32>::init(arch, cfg.init_seed);
    let store = SharedStore::new(params, cfg.adam, cfg.max_updates);
    {
        let (p, a) = store.full_snapshot();
        checkpoint::save(&dir.join("checkpoint-init.bin"), &p, &a)?;
    }

    let csv_file = File::create(csv_path(&dir)).map_err(io(&csv_path(&dir)))?;
    let mut csv = EpisodeWriter::new(BufWriter::new(csv_file))?;
    let log_file = File::create(replay_log_path(&dir)).map_err(io(&replay_log_path(&dir)))?;
    let mut log = BufWriter::new(log_file);

    let control = RunControl::new(cfg.episodes);
    let start = Instant::now();
    let demonstrators: Vec<usize> = (0..cfg.demonstrators).collect();
    let mut rows: Vec<EpisodeRow> = Vec::new();
    let mut next_checkpoint = cfg.checkpoint_every;
    let (tx, rx) = mpsc::channel::<(Box<EpisodeSummary>, u64)>();

    let results: Vec<Result<WorkerStats, HarnessError>> = std::thread::scope(|s| {
        let mut handles = Vec::with_capacity(workers);
        for id in 0..workers {
            let tx = tx.clone();
            let store = &store;
            let control = &control;
            let net = net_opponent.clone();
            let kind = if id < cfg.demonstrators { WorkerKind::Demonstrator } else { WorkerKind::Plain };
            let mut wc = WorkerConfig::new(id, cfg.variant, kind, cfg.board(), cfg.seed);
            wc.weights = cfg.weights;
            wc.search = cfg.search;
            wc.clip_norm = cfg.clip_norm;
            let deterministic = cfg.deterministic;
            let opp_spec = cfg.opponent.clone();
            handles.push(s.spawn(move || -> Result<WorkerStats, HarnessError> {
                let opp_seed = mix_seed(cfg.seed ^ 0x0990, id as u64);
                let mut opponent: Box<dyn AgentPolicy + Send> = match net {
                    Some(p) => Box::new(bac_core::opponents::NetAgent::new(p, true, opp_seed)),
                    None => build_opponent(&opp_spec, cfg.board_size, opp_seed)?,
                };
                let mut send = |e: EpisodeSummary| {
                    let ms = if deterministic { 0 } else { start.elapsed().as_millis() as u64 };
                    let _ = tx.send((Box::new(e), ms));
                };
                let r = run_worker(&wc, store, &mut opponent, control, &mut send);
                if r.is_err() {
                    control.stop();
                }
                Ok(r?)
            }));
        }
        drop(tx);

        let deadline = cfg.wall_clock_secs.map(|s| start + Duration::from_secs_f64(s));
        let mut fault: Option<HarnessError> = None;
        loop {
            let msg = match rx.recv_timeout(Duration::from_millis(50)) {
                Ok(m) => Some(m),
                Err(mpsc::RecvTimeoutError::Timeout) => None,
                Err(mpsc::RecvTimeoutError::Disconnected) => break,
            };
            if let Some((e, ms)) = msg {
                let row = EpisodeRow::from_summary(&e, ms);
                let written = csv
                    .write(&row)
                    .and_then(|_| csv.flush())
                    .map_err(HarnessError::from)
                    .and_then(|_| writeln!(log, "{}", ReplayRecord::from_summary(&e).to_line()).map_err(HarnessError::io("episodes.log")));
                if let Err(err) = written {
                    fault.get_or_insert(err);
                    control.stop();
                }
                rows.push(row);
            }
            if deadline.is_some_and(|d| Instant::now() >= d) {
                control.stop();
            }
            if cfg.checkpoint_every > 0 && store.version() >= next_checkpoint {
                let (p, a) = store.full_snapshot();
                if let Err(err) = checkpoint::save(&dir.join(format!("checkpoint-{}.bin", p.version)), &p, &a) {
                    fault.get_or_insert(err.into());
                    control.stop();
                }
                next_checkpoint = (p.version / cfg.checkpoint_every + 1) * cfg.checkpoint_every;
            }
        }
        let mut out: Vec<Result<WorkerStats, HarnessError>> =
            handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err(HarnessError::Runtime("worker panicked".into())))).collect();
        if let Some(f) = fault {
            out.push(Err(f));
        }
        out
    });

    let mut stats = Vec::with_capacity(workers);
    for r in results {
        stats.push(r?);
    }
    csv.flush()?;
    log.flush().map_err(io(&replay_log_path(&dir)))?;

    let (params, adam) = store.into_parts();
    if params.version > 0 {
        checkpoint::save(&dir.join("checkpoint-final.bin"), &params, &adam)?;
    }
    let window = cfg.summary_window;
    let mut summary = RunSummary::from_rows(&rows, &demonstrators, window);
    summary.updates = params.version;
    summary.worker_stats = stats;
    summary.elapsed_ms = if cfg.deterministic { 0 } else { start.elapsed().as_millis() as u64 };
    let sum_path = dir.join("summary.txt");
    std::fs::write(&sum_path, summary.to_string()).map_err(io(&sum_path))?;

    let curve = plot::curve_rows(&rows, &demonstrators);
    if !curve.is_empty() {
        let w = plot::default_window(curve.len());
        let svg = plot::render_svg(&[plot::Series::new(cfg.variant.to_string(), &curve, w)], w);
        let p = dir.join("curve.svg");
        std::fs::write(&p, svg).map_err(io(&p))?;
    }
    Ok(TrainOutput { dir, summary, params })
}

//! Run configuration: flat `key = value` files with `#` comments. Every key
//! has a default, so an empty file is a valid run.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bac_core::env::{BoardConfig, DEFAULT_MAX_STEPS, MIN_GENERATED_SIZE};
use bac_core::mcts::SearchConfig;
use bac_core::nn::{AdamConfig, Arch};
use bac_core::rl::{LossWeights, Variant};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("cannot read {path}: {reason}")]
    Read { path: String, reason: String },
}

/// Opponent selected by token: `static`, `random`, `rulebased`,
/// `mcts:<rollouts>` or `net:<checkpoint>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OpponentSpec {
    Static,
    Random,
    RuleBased,
    Mcts(u32),
    Net(PathBuf),
}

impl FromStr for OpponentSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(n) = s.strip_prefix("mcts:") {
            return match n.parse::<u32>() {
                Ok(n) if n > 0 => Ok(OpponentSpec::Mcts(n)),
                _ => Err(format!("rollout count `{n}` must be a positive integer")),
            };
        }
        if let Some(p) = s.strip_prefix("net:") {
            if p.is_empty() {
                return Err("net: needs a checkpoint path".into());
            }
            return Ok(OpponentSpec::Net(PathBuf::from(p)));
        }
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(OpponentSpec::Static),
            "random" => Ok(OpponentSpec::Random),
            "rulebased" | "rule-based" | "rule_based" => Ok(OpponentSpec::RuleBased),
            _ => Err("expected static, random, rulebased, mcts:<rollouts> or net:<path>".into()),
        }
    }
}

impl fmt::Display for OpponentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpponentSpec::Static => f.write_str("static"),
            OpponentSpec::Random => f.write_str("random"),
            OpponentSpec::RuleBased => f.write_str("rulebased"),
            OpponentSpec::Mcts(n) => write!(f, "mcts:{n}"),
            OpponentSpec::Net(p) => write!(f, "net:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub workers: usize,
    pub demonstrators: usize,
    pub board_size: usize,
    pub max_steps: u32,
    pub opponent: OpponentSpec,
    pub seed: u64,
    /// Episode budget shared by all workers. `None` runs until another budget
    /// ends the run.
    pub episodes: Option<u64>,
    pub max_updates: Option<u64>,
    pub wall_clock_secs: Option<f64>,
    pub weights: LossWeights,
    pub search: SearchConfig,
    pub adam: AdamConfig,
    pub clip_norm: Option<f64>,
    pub conv_filters: usize,
    pub hidden: usize,
    pub init_seed: u64,
    pub out_dir: PathBuf,
    /// Updates between periodic checkpoints; 0 disables them.
    pub checkpoint_every: u64,
    /// Writes 0 for the wall-clock column so runs diff cleanly.
    pub deterministic: bool,
    /// Episodes averaged for the final summary.
    pub summary_window: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let std = Arch::standard(6);
        RunConfig {
            variant: Variant::A3c,
            workers: 8,
            demonstrators: 0,
            board_size: 6,
            max_steps: DEFAULT_MAX_STEPS,
            opponent: OpponentSpec::Static,
            seed: 0,
            episodes: Some(1000),
            max_updates: None,
            wall_clock_secs: None,
            weights: LossWeights::default(),
            search: SearchConfig::default(),
            adam: AdamConfig::default(),
            clip_norm: Some(40.0),
            conv_filters: std.conv[0],
            hidden: std.hidden,
            init_seed: 1,
            out_dir: PathBuf::from("runs/latest"),
            checkpoint_every: 1000,
            deterministic: false,
            summary_window: 100,
        }
    }
}

pub const KEYS: &[&str] = &[
    "variant",
    "workers",
    "demonstrators",
    "board_size",
    "max_steps",
    "opponent",
    "seed",
    "episodes",
    "max_updates",
    "wall_clock_secs",
    "policy_weight",
    "value_weight",
    "entropy_weight",
    "lambda_tp",
    "lambda_pi",
    "gamma",
    "t_max",
    "rollouts",
    "rollout_depth",
    "exploration",
    "lr",
    "beta1",
    "beta2",
    "adam_eps",
    "weight_decay",
    "clip_norm",
    "conv_filters",
    "hidden",
    "init_seed",
    "out_dir",
    "checkpoint_every",
    "deterministic",
    "summary_window",
];

fn value<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| ConfigError::Value { key: key.into(), value: v.into(), reason: e.to_string() })
}

/// `none`, `off` or `0` disable an optional limit.
fn optional<T: FromStr + PartialEq + Default>(key: &str, v: &str) -> Result<Option<T>, ConfigError>
where
    T::Err: fmt::Display,
{
    if matches!(v, "none" | "off" | "") {
        return Ok(None);
    }
    let x: T = value(key, v)?;
    Ok((x != T::default()).then_some(x))
}

fn boolean(key: &str, v: &str) -> Result<bool, ConfigError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::Value { key: key.into(), value: v.into(), reason: "expected true or false".into() }),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let v = v.trim();
        match key {
            "variant" => {
                self.variant = Variant::parse(v).ok_or_else(|| ConfigError::Value {
                    key: key.into(),
                    value: v.into(),
                    reason: "expected A3C, A3C-TP, PI-A3C or PI-A3C-TP".into(),
                })?
            }
            "workers" => self.workers = value(key, v)?,
            "demonstrators" => self.demonstrators = value(key, v)?,
            "board_size" => self.board_size = value(key, v)?,
            "max_steps" => self.max_steps = value(key, v)?,
            "opponent" => self.opponent = value(key, v)?,
            "seed" => self.seed = value(key, v)?,
            "episodes" => self.episodes = if v == "none" { None } else { Some(value(key, v)?) },
            "max_updates" => self.max_updates = optional(key, v)?,
            "wall_clock_secs" => self.wall_clock_secs = optional(key, v)?,
            "policy_weight" => self.weights.policy = value(key, v)?,
            "value_weight" => self.weights.value = value(key, v)?,
            "entropy_weight" => self.weights.entropy = value(key, v)?,
            "lambda_tp" => self.weights.lambda_tp = value(key, v)?,
            "lambda_pi" => self.weights.lambda_pi = value(key, v)?,
            "gamma" => self.weights.gamma = value(key, v)?,
            "t_max" => self.weights.t_max = value(key, v)?,
            "rollouts" => self.search.rollouts_per_move = value(key, v)?,
            "rollout_depth" => self.search.rollout_depth = value(key, v)?,
            "exploration" => self.search.exploration = value(key, v)?,
            "lr" => self.adam.lr = value(key, v)?,
            "beta1" => self.adam.beta1 = value(key, v)?,
            "beta2" => self.adam.beta2 = value(key, v)?,
            "adam_eps" => self.adam.eps = value(key, v)?,
            "weight_decay" => self.adam.weight_decay = value(key, v)?,
            "clip_norm" => self.clip_norm = optional(key, v)?,
            "conv_filters" => self.conv_filters = value(key, v)?,
            "hidden" => self.hidden = value(key, v)?,
            "init_seed" => self.init_seed = value(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "checkpoint_every" => self.checkpoint_every = value(key, v)?,
            "deterministic" => self.deterministic = boolean(key, v)?,
            "summary_window" => self.summary_window = value(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: raw.trim().into() })?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: path.display().to_string(), reason: e.to_string() })?;
        Self::parse(&text)
    }

    /// Applies `key=value` overrides on top of the file.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Syntax { line: 0, text: o.into() })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn arch(&self) -> Arch {
        Arch::narrow(self.board_size, self.conv_filters, self.hidden)
    }

    pub fn board(&self) -> BoardConfig {
        BoardConfig { max_steps: self.max_steps, ..BoardConfig::with_size(self.board_size) }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.variant.has_pi() && self.demonstrators == 0 {
            return bad(format!("{} needs at least one demonstrator", self.variant));
        }
        if !self.variant.has_pi() && self.demonstrators != 0 {
            return bad(format!("{} takes no demonstrators, got {}", self.variant, self.demonstrators));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.demonstrators > self.workers {
            return bad(format!("{} demonstrators exceed {} workers", self.demonstrators, self.workers));
        }
        if self.board_size < MIN_GENERATED_SIZE {
            return bad(format!("board_size must be at least {MIN_GENERATED_SIZE}"));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1".into());
        }
        if self.conv_filters == 0 || self.hidden == 0 {
            return bad("conv_filters and hidden must be positive".into());
        }
        if self.summary_window == 0 {
            return bad("summary_window must be positive".into());
        }
        self.weights.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.search.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let a = &self.adam;
        if !(a.lr > 0.0 && a.lr.is_finite())
            || !(0.0..1.0).contains(&a.beta1)
            || !(0.0..1.0).contains(&a.beta2)
            || a.eps <= 0.0
            || a.weight_decay < 0.0
        {
            return bad("adam settings out of range".into());
        }
        if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return bad("clip_norm must be positive".into());
        }
        if self.wall_clock_secs.is_some_and(|s| s.is_nan() || s <= 0.0) {
            return bad("wall_clock_secs must be positive".into());
        }
        Ok(())
    }

    /// Worker count after the `BAC_THREADS` cap. Demonstrators are kept.
    pub fn effective_workers(&self, threads_cap: Option<usize>) -> usize {
        match threads_cap {
            Some(c) => self.workers.min(c.max(self.demonstrators).max(1)),
            None => self.workers,
        }
    }

    /// Canonical `key = value` listing, written into each run directory.
    pub fn to_text(&self) -> String {
        let w = &self.weights;
        let s = &self.search;
        let a = &self.adam;
        let opt = |o: Option<String>| o.unwrap_or_else(|| "none".into());
        let pairs: Vec<(&str, String)> = vec![
            ("variant", self.variant.to_string()),
            ("workers", self.workers.to_string()),
            ("demonstrators", self.demonstrators.to_string()),
            ("board_size", self.board_size.to_string()),
            ("max_steps", self.max_steps.to_string()),
            ("opponent", self.opponent.to_string()),
            ("seed", self.seed.to_string()),
            ("episodes", opt(self.episodes.map(|e| e.to_string()))),
            ("max_updates", opt(self.max_updates.map(|e| e.to_string()))),
            ("wall_clock_secs", opt(self.wall_clock_secs.map(|e| e.to_string()))),
            ("policy_weight", w.policy.to_string()),
            ("value_weight", w.value.to_string()),
            ("entropy_weight", w.entropy.to_string()),
            ("lambda_tp", w.lambda_tp.to_string()),
            ("lambda_pi", w.lambda_pi.to_string()),
            ("gamma", w.gamma.to_string()),
            ("t_max", w.t_max.to_string()),
            ("rollouts", s.rollouts_per_move.to_string()),
            ("rollout_depth", s.rollout_depth.to_string()),
            ("exploration", s.exploration.to_string()),
            ("lr", a.lr.to_string()),
            ("beta1", a.beta1.to_string()),
            ("beta2", a.beta2.to_string()),
            ("adam_eps", a.eps.to_string()),
            ("weight_decay", a.weight_decay.to_string()),
            ("clip_norm", opt(self.clip_norm.map(|e| e.to_string()))),
            ("conv_filters", self.conv_filters.to_string()),
            ("hidden", self.hidden.to_string()),
            ("init_seed", self.init_seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("deterministic", self.deterministic.to_string()),
            ("summary_window", self.summary_window.to_string()),
        ];
        debug_assert_eq!(pairs.len(), KEYS.len());
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

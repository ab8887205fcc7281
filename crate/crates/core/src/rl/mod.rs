//! Actor-critic losses and the worker loop.

mod loss;
mod trace;
mod worker;

use core::fmt;

pub use loss::{
    a3c_loss, combined_loss, n_step_advantages, pi_loss, tp_grad, tp_loss, tp_targets, A3cLoss, A3cStep, CombinedLoss, LossBatch, PiLoss, Returns,
    TpBatch, TpTargets, PROB_FLOOR,
};
pub use trace::{EpisodeEnd, EpisodeTrace, StepRecord};
pub use worker::{run_worker, sample_action, EpisodeSummary, LocalStore, ParameterStore, RunControl, SubmitError, WorkerConfig, WorkerStats};

use crate::nn::NnError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RlError {
    #[error("configuration error: {0}")]
    Config(&'static str),
    #[error("{what}: lengths differ ({left} vs {right})")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Which auxiliary losses a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    A3c,
    A3cTp,
    PiA3c,
    PiA3cTp,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::A3c, Variant::A3cTp, Variant::PiA3c, Variant::PiA3cTp];

    pub fn has_tp(self) -> bool {
        matches!(self, Variant::A3cTp | Variant::PiA3cTp)
    }

    pub fn has_pi(self) -> bool {
        matches!(self, Variant::PiA3c | Variant::PiA3cTp)
    }

    pub fn token(self) -> &'static str {
        match self {
            Variant::A3c => "A3C",
            Variant::A3cTp => "A3C-TP",
            Variant::PiA3c => "PI-A3C",
            Variant::PiA3cTp => "PI-A3C-TP",
        }
    }

    /// Case-insensitive; `_` is accepted in place of `-`.
    pub fn parse(s: &str) -> Option<Variant> {
        Variant::ALL.into_iter().find(|v| {
            let t = v.token();
            t.len() == s.len() && t.bytes().zip(s.bytes()).all(|(a, b)| a == b.to_ascii_uppercase() || (a == b'-' && b == b'_'))
        })
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WorkerKind {
    /// Acts with its own policy head.
    Plain,
    /// Acts with the planner and adds the imitation loss.
    Demonstrator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub lambda_tp: f64,
    /// Used on demonstrator workers only; plain workers always use 0.
    pub lambda_pi: f64,
    pub gamma: f64,
    pub t_max: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { policy: 1.0, value: 0.5, entropy: 0.01, lambda_tp: 1.0, lambda_pi: 1.0, gamma: 0.999, t_max: 20 }
    }
}

impl LossWeights {
    pub fn lambda_pi_for(&self, kind: WorkerKind) -> f64 {
        match kind {
            WorkerKind::Demonstrator => self.lambda_pi,
            WorkerKind::Plain => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), RlError> {
        let all = [self.policy, self.value, self.entropy, self.lambda_tp, self.lambda_pi, self.gamma];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RlError::Config("loss weights must be finite and nonnegative"));
        }
        if self.gamma > 1.0 {
            return Err(RlError::Config("gamma must be at most 1"));
        }
        if self.t_max == 0 {
            return Err(RlError::Config("t_max must be at least 1"));
        }
        Ok(())
    }
}

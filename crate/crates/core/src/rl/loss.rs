use alloc::vec;
use alloc::vec::Vec;

use super::{LossWeights, RlError, Variant, WorkerKind};
use crate::env::Action;
use crate::nn::HeadGrads;

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct Returns {
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// n-step discounted returns `R_t = sum_k gamma^k r_{t+k} + gamma^{n_t} V_boot`
/// and advantages `A_t = R_t - V(s_t)`, where `n_t` counts the steps from `t`
/// to the end of the segment.
pub fn n_step_advantages(rewards: &[f64], values: &[f64], bootstrap: f64, gamma: f64) -> Returns {
    debug_assert_eq!(rewards.len(), values.len());
    let n = rewards.len();
    let mut returns = vec![0.0; n];
    let mut acc = bootstrap;
    for t in (0..n).rev() {
        acc = rewards[t] + gamma * acc;
        returns[t] = acc;
    }
    let advantages = returns.iter().zip(values).map(|(r, v)| r - v).collect();
    Returns { returns, advantages }
}

/// One on-policy step as seen by the actor-critic loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct A3cStep {
    pub action: Action,
    pub policy: [f64; Action::COUNT],
    pub value: f64,
    /// Target for the value head; a constant in the loss.
    pub ret: f64,
    /// Coefficient of the policy-gradient term; a constant in the loss.
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct A3cLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    /// Sum of per-step policy entropies.
    pub entropy: f64,
    pub head_grads: Vec<HeadGrads<f64>>,
    /// Taken actions whose probability was floored.
    pub clamped: u32,
}

/// `w_pi * L_pi + w_v * L_v - w_H * sum_t H_t` with
/// `L_pi = -sum_t log pi(a_t|s_t) A_t` and `L_v = sum_t (R_t - V(s_t))^2`.
pub fn a3c_loss(steps: &[A3cStep], w: &LossWeights) -> A3cLoss {
    let mut out = A3cLoss { total: 0.0, policy: 0.0, value: 0.0, entropy: 0.0, head_grads: Vec::with_capacity(steps.len()), clamped: 0 };
    for s in steps {
        let mut g = HeadGrads::zero();
        let a = s.action.code();
        let pa = s.policy[a];
        if pa < PROB_FLOOR {
            out.clamped += 1;
            out.policy -= libm::log(PROB_FLOOR) * s.advantage;
        } else {
            out.policy -= libm::log(pa) * s.advantage;
            g.policy[a] -= w.policy * s.advantage / pa;
        }

        let diff = s.ret - s.value;
        out.value += diff * diff;
        g.value = -2.0 * w.value * diff;

        for (i, &p) in s.policy.iter().enumerate() {
            let lp = libm::log(p.max(PROB_FLOOR));
            if p > 0.0 {
                out.entropy -= p * libm::log(p);
            }
            g.policy[i] += w.entropy * (lp + 1.0);
        }
        out.head_grads.push(g);
    }
    out.total = w.policy * out.policy + w.value * out.value - w.entropy * out.entropy;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TpTargets {
    pub values: Vec<f64>,
    /// Set when fewer than two states were recorded.
    pub degenerate: bool,
}

/// Linear targets `y_i = i / (S - 1)` over `S` recorded states: 0 for the
/// first state, 1 for the terminal one.
pub fn tp_targets(states: usize) -> TpTargets {
    if states < 2 {
        return TpTargets { values: vec![1.0; states.min(1)], degenerate: true };
    }
    let denom = (states - 1) as f64;
    TpTargets { values: (0..states).map(|i| i as f64 / denom).collect(), degenerate: false }
}

/// Derivative of the `n`-state mean squared error w.r.t. one prediction.
pub fn tp_grad(prediction: f64, target: f64, n: usize) -> f64 {
    2.0 * (prediction - target) / n as f64
}

/// Mean squared error and its gradient `2 (p - y) / N` w.r.t. each prediction.
pub fn tp_loss(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>), RlError> {
    if predictions.len() != targets.len() {
        return Err(RlError::LengthMismatch { what: "terminal predictions", left: predictions.len(), right: targets.len() });
    }
    let n = predictions.len();
    if n == 0 {
        return Ok((0.0, Vec::new()));
    }
    let mut loss = 0.0;
    let grads = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| {
            loss += (p - y) * (p - y);
            tp_grad(*p, *y, n)
        })
        .collect();
    Ok((loss / n as f64, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiLoss {
    pub loss: f64,
    pub grads: Vec<[f64; Action::COUNT]>,
    pub clamped: u32,
}

/// Mean cross-entropy between the planner's one-hot actions and the policy.
pub fn pi_loss(demo_actions: &[Action], policies: &[[f64; Action::COUNT]]) -> Result<PiLoss, RlError> {
    if demo_actions.len() != policies.len() {
        return Err(RlError::LengthMismatch { what: "demonstrator actions", left: demo_actions.len(), right: policies.len() });
    }
    let n = demo_actions.len();
    let mut out = PiLoss { loss: 0.0, grads: Vec::with_capacity(n), clamped: 0 };
    if n == 0 {
        return Ok(out);
    }
    let nf = n as f64;
    for (a, pol) in demo_actions.iter().zip(policies) {
        let p = pol[a.code()];
        let mut g = [0.0; Action::COUNT];
        if p < PROB_FLOOR {
            out.clamped += 1;
            out.loss -= libm::log(PROB_FLOOR);
        } else {
            out.loss -= libm::log(p);
            g[a.code()] = -1.0 / (nf * p);
        }
        out.grads.push(g);
    }
    out.loss /= nf;
    Ok(out)
}

/// Terminal-prediction inputs for a whole episode.
#[derive(Debug, Clone, Copy)]
pub struct TpBatch<'a> {
    pub predictions: &'a [f64],
    pub targets: &'a [f64],
}

/// Inputs of one gradient submission. Row `i` of the result pairs with
/// `steps[i]` and/or `tp.predictions[i]`; `demo_actions` aligns with `steps`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossBatch<'a> {
    pub steps: &'a [A3cStep],
    pub demo_actions: Option<&'a [Action]>,
    pub tp: Option<TpBatch<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub total: f64,
    pub a3c: f64,
    pub tp: Option<f64>,
    pub pi: Option<f64>,
    pub head_grads: Vec<HeadGrads<f64>>,
    pub clamped: u32,
}

/// `L_A3C + lambda_TP L_TP + lambda_PI L_PI`, with the planner term only on a
/// demonstrator and each auxiliary term only when the variant enables it.
/// Terms whose weight is zero contribute no gradient at all.
pub fn combined_loss(batch: &LossBatch<'_>, w: &LossWeights, variant: Variant, kind: WorkerKind) -> Result<CombinedLoss, RlError> {
    if batch.demo_actions.is_some() && kind != WorkerKind::Demonstrator {
        return Err(RlError::Config("planner-imitation data on a non-demonstrator worker"));
    }
    if batch.demo_actions.is_some() && !variant.has_pi() {
        return Err(RlError::Config("planner-imitation data for a variant without planner imitation"));
    }
    if kind == WorkerKind::Demonstrator && !variant.has_pi() {
        return Err(RlError::Config("demonstrator worker in a variant without planner imitation"));
    }
    if batch.tp.is_some() && !variant.has_tp() {
        return Err(RlError::Config("terminal-prediction data for a variant without terminal prediction"));
    }

    let a3c = a3c_loss(batch.steps, w);
    let rows = batch.steps.len().max(batch.tp.map_or(0, |t| t.predictions.len()));
    let mut head_grads = a3c.head_grads;
    head_grads.resize(rows, HeadGrads::zero());
    let mut total = a3c.total;
    let mut clamped = a3c.clamped;

    let mut tp_value = None;
    if let Some(tp) = batch.tp {
        let (loss, grads) = tp_loss(tp.predictions, tp.targets)?;
        tp_value = Some(loss);
        if w.lambda_tp != 0.0 {
            total += w.lambda_tp * loss;
            for (h, g) in head_grads.iter_mut().zip(grads) {
                h.tp += w.lambda_tp * g;
            }
        }
    }

    let mut pi_value = None;
    if let Some(demo) = batch.demo_actions {
        let policies: Vec<_> = batch.steps.iter().map(|s| s.policy).collect();
        let pi = pi_loss(demo, &policies)?;
        pi_value = Some(pi.loss);
        clamped += pi.clamped;
        let lambda = w.lambda_pi_for(kind);
        if lambda != 0.0 {
            total += lambda * pi.loss;
            for (h, g) in head_grads.iter_mut().zip(pi.grads) {
                for (hp, gp) in h.policy.iter_mut().zip(g) {
                    *hp += lambda * gp;
                }
            }
        }
    }

    Ok(CombinedLoss { total, a3c: a3c.total, tp: tp_value, pi: pi_value, head_grads, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec::Vec;

    fn uniform() -> [f64; 6] {
        [1.0 / 6.0; 6]
    }

    #[test]
    fn zero_rewards_zero_advantages() {
        let r = n_step_advantages(&[0.0; 5], &[0.0; 5], 0.0, 0.999);
        assert!(r.advantages.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn two_step_hand_example() {
        let r = n_step_advantages(&[0.0, 1.0], &[0.2, 0.0], 0.5, 0.9);
        // 0 + 0.9 * 1 + 0.81 * 0.5 - 0.2
        assert!((r.advantages[0] - 1.105).abs() < 1e-12);
        assert!((r.returns[1] - (1.0 + 0.9 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn uniform_policy_only_entropy_survives() {
        let steps: Vec<_> = (0..7).map(|i| A3cStep { action: Action::ALL[i % 6], policy: uniform(), value: 0.3, ret: 0.3, advantage: 0.0 }).collect();
        let w = LossWeights::default();
        let l = a3c_loss(&steps, &w);
        let expected = -w.entropy * 7.0 * libm::log(6.0);
        assert!((l.total - expected).abs() < 1e-12);
    }

    #[test]
    fn deterministic_policy_has_no_entropy() {
        let mut p = [0.0; 6];
        p[2] = 1.0;
        let l = a3c_loss(&[A3cStep { action: Action::MoveLeft, policy: p, value: 0.0, ret: 0.0, advantage: 1.0 }], &LossWeights::default());
        assert_eq!(l.entropy, 0.0);
        assert_eq!(l.clamped, 0);
    }

    #[test]
    fn zero_probability_action_is_clamped() {
        let mut p = [0.2; 6];
        p[0] = 0.0;
        let l = a3c_loss(&[A3cStep { action: Action::MoveUp, policy: p, value: 0.0, ret: 0.0, advantage: 1.0 }], &LossWeights::default());
        assert_eq!(l.clamped, 1);
        assert!(l.total.is_finite());
        assert!(l.head_grads[0].policy.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn tp_targets_examples() {
        assert_eq!(tp_targets(5).values, [0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(tp_targets(2).values, [0.0, 1.0]);
        assert_eq!(tp_targets(801).values[400], 0.5);
        let one = tp_targets(1);
        assert!(one.degenerate);
        assert_eq!(one.values, [1.0]);
    }

    #[test]
    fn tp_loss_examples() {
        assert_eq!(tp_loss(&[0.0, 0.5, 1.0], &[0.0, 0.5, 1.0]).unwrap().0, 0.0);
        let (l, g) = tp_loss(&[0.5, 0.5], &[0.0, 1.0]).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
        assert_eq!(g, [0.5, -0.5]);
        assert!(tp_loss(&[0.5], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn pi_loss_examples() {
        let mut sure = [0.0; 6];
        sure[5] = 1.0;
        assert_eq!(pi_loss(&[Action::PlaceBomb; 3], &[sure; 3]).unwrap().loss, 0.0);
        let mut half = [0.1; 6];
        half[1] = 0.5;
        let l = pi_loss(&[Action::MoveDown], &[half]).unwrap().loss;
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
        let l = pi_loss(&[Action::MoveUp, Action::Stop, Action::PlaceBomb, Action::MoveLeft], &[uniform(); 4]).unwrap().loss;
        assert!((l - libm::log(6.0)).abs() < 1e-12);
    }

    #[test]
    fn combined_rejects_pi_on_plain_worker() {
        let steps = [A3cStep { action: Action::Stop, policy: uniform(), value: 0.0, ret: 0.0, advantage: 0.0 }];
        let batch = LossBatch { steps: &steps, demo_actions: Some(&[Action::Stop]), tp: None };
        let err = combined_loss(&batch, &LossWeights::default(), Variant::PiA3cTp, WorkerKind::Plain);
        assert!(matches!(err, Err(RlError::Config(_))));
    }

    #[test]
    fn combined_a3c_equals_a3c_loss() {
        let steps = [
            A3cStep { action: Action::Stop, policy: [0.1, 0.2, 0.3, 0.1, 0.2, 0.1], value: 0.4, ret: -0.2, advantage: -0.6 },
            A3cStep { action: Action::MoveUp, policy: [0.5, 0.1, 0.1, 0.1, 0.1, 0.1], value: -0.1, ret: 0.7, advantage: 0.8 },
        ];
        let w = LossWeights::default();
        let plain = a3c_loss(&steps, &w);
        let c = combined_loss(&LossBatch { steps: &steps, ..Default::default() }, &w, Variant::A3c, WorkerKind::Plain).unwrap();
        assert_eq!(c.total, plain.total);
        assert_eq!(c.head_grads, plain.head_grads);

        let preds = [0.0, 1.0];
        let tp = TpBatch { predictions: &preds, targets: &preds };
        let c = combined_loss(&LossBatch { steps: &steps, tp: Some(tp), ..Default::default() }, &w, Variant::A3cTp, WorkerKind::Plain).unwrap();
        assert_eq!(c.total, plain.total);
        assert_eq!(c.tp, Some(0.0));
    }

    #[test]
    fn combined_sums_all_terms_with_unit_lambdas() {
        let steps = [
            A3cStep { action: Action::Stop, policy: [0.1, 0.2, 0.3, 0.1, 0.2, 0.1], value: 0.4, ret: -0.2, advantage: -0.6 },
            A3cStep { action: Action::MoveUp, policy: [0.5, 0.1, 0.1, 0.1, 0.1, 0.1], value: -0.1, ret: 0.7, advantage: 0.8 },
        ];
        let demo = [Action::MoveRight, Action::MoveUp];
        let preds = [0.3, 0.6, 0.2];
        let targets = tp_targets(3).values;
        let w = LossWeights::default();
        let c = combined_loss(
            &LossBatch { steps: &steps, demo_actions: Some(&demo), tp: Some(TpBatch { predictions: &preds, targets: &targets }) },
            &w,
            Variant::PiA3cTp,
            WorkerKind::Demonstrator,
        )
        .unwrap();
        let a3c = a3c_loss(&steps, &w).total;
        let tp = tp_loss(&preds, &targets).unwrap().0;
        let pi = pi_loss(&demo, &[steps[0].policy, steps[1].policy]).unwrap().loss;
        assert!(tp > 0.0 && pi > 0.0 && a3c != 0.0);
        assert!((c.total - (a3c + tp + pi)).abs() < 1e-12);
        assert_eq!(c.head_grads.len(), 3);
    }
}

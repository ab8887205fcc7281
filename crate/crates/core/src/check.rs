//! Finite-difference checks of the full training loss, shared by the test
//! suites and the `selftest` command.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::env::{encode_observation, Action, BoardConfig, NUM_AGENTS};
use crate::mcts::random_legal;
use crate::nn::{input_from_features, Arch, Gradients, NetworkOutput, NetworkParams, NnError};
use crate::rl::{combined_loss, tp_targets, A3cStep, LossBatch, LossWeights, RlError, TpBatch, Variant, WorkerKind};
use crate::{rng_from_seed, Rng};

/// A short recorded episode with fixed returns and advantages, evaluated
/// with every loss term switched on.
#[derive(Debug, Clone)]
pub struct GradEpisode {
    /// `N + 1` network inputs; the last one is the terminal observation.
    pub inputs: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub demo_actions: Vec<Action>,
    pub returns: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl GradEpisode {
    /// Random play on a generated board, at most `max_steps` steps.
    pub fn random(board: usize, max_steps: usize, rng: &mut Rng) -> Self {
        let mut state = BoardConfig::with_size(board).generate(rng.gen()).expect("valid board");
        let n = rng.gen_range(1..=max_steps);
        let mut inputs = Vec::new();
        let mut actions = Vec::new();
        for _ in 0..n {
            if state.is_terminal() {
                break;
            }
            inputs.push(input_from_features(&encode_observation(&state, 0)));
            let mut a = [Action::Stop; NUM_AGENTS];
            for (i, slot) in a.iter_mut().enumerate() {
                *slot = random_legal(&state, i, rng);
            }
            actions.push(a[0]);
            state.advance(a).expect("non-terminal");
        }
        inputs.push(input_from_features(&encode_observation(&state, 0)));
        let steps = actions.len();
        GradEpisode {
            inputs,
            demo_actions: (0..steps).map(|_| Action::ALL[rng.gen_range(0..Action::COUNT)]).collect(),
            actions,
            returns: (0..steps).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            advantages: (0..steps).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }
}

/// Full loss and its analytic gradient on `ep`.
pub fn episode_loss(
    params: &NetworkParams<f64>,
    ep: &GradEpisode,
    weights: &LossWeights,
    variant: Variant,
    kind: WorkerKind,
    with_grad: bool,
) -> Result<(f64, Option<Gradients<f64>>), RlError> {
    let mut outs: Vec<NetworkOutput<f64>> = Vec::with_capacity(ep.inputs.len());
    let mut caches = Vec::with_capacity(ep.inputs.len());
    for x in &ep.inputs {
        let (o, c) = params.forward(x)?;
        outs.push(o);
        if with_grad {
            caches.push(c);
        }
    }
    let n = ep.actions.len();
    let steps: Vec<A3cStep> = (0..n)
        .map(|i| A3cStep { action: ep.actions[i], policy: outs[i].policy, value: outs[i].value, ret: ep.returns[i], advantage: ep.advantages[i] })
        .collect();
    let preds: Vec<f64> = outs.iter().map(|o| o.terminal_pred).collect();
    let targets = tp_targets(preds.len()).values;
    let batch = LossBatch {
        steps: &steps,
        demo_actions: variant.has_pi().then_some(&ep.demo_actions[..]),
        tp: variant.has_tp().then_some(TpBatch { predictions: &preds, targets: &targets }),
    };
    let loss = combined_loss(&batch, weights, variant, kind)?;
    if !with_grad {
        return Ok((loss.total, None));
    }
    let mut grads = Gradients::zeros_like(params);
    for (c, h) in caches.iter().zip(&loss.head_grads) {
        params.backward_into(c, h, &mut grads)?;
    }
    Ok((loss.total, Some(grads)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub failures: usize,
    /// Coordinates whose `±h` interval straddled an ELU kink and were
    /// re-measured with a smaller step.
    pub kinks: usize,
    pub max_abs_err: f64,
    /// Largest `|a - n| / max(|a|, |n|)` among coordinates over the absolute floor.
    pub max_rel_err: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn merge(&mut self, o: &GradCheckReport) {
        self.checked += o.checked;
        self.failures += o.failures;
        self.kinks += o.kinks;
        self.max_abs_err = self.max_abs_err.max(o.max_abs_err);
        self.max_rel_err = self.max_rel_err.max(o.max_rel_err);
    }
}

/// Tolerances and step of a central-difference check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub h: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { h: 1e-5, rel_tol: 1e-6, abs_tol: 1e-8 }
    }
}

/// Compares the analytic gradient with central differences on the given
/// flat coordinates (all of them when `coords` is `None`). A coordinate
/// passes when the absolute error is within `abs_tol` or the relative error
/// within `rel_tol`.
///
/// ELU has a jump in its second derivative at zero, so a difference whose
/// interval contains a sign change of some ELU input carries an `O(h)`
/// error. A coordinate that fails with such a crossing is measured again
/// with the step divided by ten until no ELU input changes sign, and judged
/// at that step. Failures without a crossing count as failures.
pub fn finite_difference_check(
    params: &NetworkParams<f64>,
    ep: &GradEpisode,
    variant: Variant,
    kind: WorkerKind,
    cfg: &GradCheckConfig,
    coords: Option<&[usize]>,
) -> Result<GradCheckReport, RlError> {
    let w = LossWeights::default();
    let (_, g) = episode_loss(params, ep, &w, variant, kind, true)?;
    let analytic: Vec<f64> = g.ok_or(RlError::Nn(NnError::Shape("missing gradient".into())))?.flat().copied().collect();
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..analytic.len()).collect();
            &all
        }
    };
    let mut probe = params.clone();
    let mut report = GradCheckReport::default();
    for &k in coords {
        let orig = *probe.flat().nth(k).expect("coordinate in range");
        let mut h = cfg.h;
        let (mut abs, mut rel) = compare(analytic[k], central(&mut probe, k, orig, h, ep, &w, variant, kind)?);
        if abs > cfg.abs_tol && rel > cfg.rel_tol && crosses_kink(&mut probe, k, orig, h, ep)? {
            report.kinks += 1;
            while h > cfg.h * 1e-4 && crosses_kink(&mut probe, k, orig, h, ep)? {
                h /= 10.0;
            }
            (abs, rel) = compare(analytic[k], central(&mut probe, k, orig, h, ep, &w, variant, kind)?);
        }
        report.checked += 1;
        report.max_abs_err = report.max_abs_err.max(abs);
        if abs > cfg.abs_tol {
            report.max_rel_err = report.max_rel_err.max(rel);
            if rel > cfg.rel_tol {
                report.failures += 1;
            }
        }
    }
    Ok(report)
}

fn compare(a: f64, numeric: f64) -> (f64, f64) {
    let abs = (a - numeric).abs();
    let scale = a.abs().max(numeric.abs());
    (abs, if scale > 0.0 { abs / scale } else { 0.0 })
}

#[allow(clippy::too_many_arguments)]
fn central(
    probe: &mut NetworkParams<f64>,
    k: usize,
    orig: f64,
    h: f64,
    ep: &GradEpisode,
    w: &LossWeights,
    variant: Variant,
    kind: WorkerKind,
) -> Result<f64, RlError> {
    set_flat(probe, k, orig + h);
    let (lp, _) = episode_loss(probe, ep, w, variant, kind, false)?;
    set_flat(probe, k, orig - h);
    let (lm, _) = episode_loss(probe, ep, w, variant, kind, false)?;
    set_flat(probe, k, orig);
    Ok((lp - lm) / (2.0 * h))
}

/// Whether some ELU input changes sign between `orig - h` and `orig + h`.
fn crosses_kink(probe: &mut NetworkParams<f64>, k: usize, orig: f64, h: f64, ep: &GradEpisode) -> Result<bool, RlError> {
    let mut signs = |v: f64| -> Result<Vec<bool>, RlError> {
        set_flat(probe, k, v);
        let mut out = Vec::new();
        for x in &ep.inputs {
            let (_, c) = probe.forward(x)?;
            out.extend(c.pre_activations().map(|p| *p > 0.0));
        }
        Ok(out)
    };
    let crossed = signs(orig + h)? != signs(orig - h)?;
    set_flat(probe, k, orig);
    Ok(crossed)
}

fn set_flat(p: &mut NetworkParams<f64>, k: usize, v: f64) {
    if let Some(x) = p.flat_mut().nth(k) {
        *x = v;
    }
}

/// Runs `instances` random (parameters, episode) checks of every coordinate
/// of a small network on a `board`-sized board.
pub fn gradient_suite(arch: Arch, instances: usize, max_steps: usize, seed: u64) -> Result<GradCheckReport, RlError> {
    let mut rng = rng_from_seed(seed);
    let mut total = GradCheckReport::default();
    for _ in 0..instances {
        let mut params = NetworkParams::<f64>::init(arch, rng.gen());
        // Nonzero biases so every bias gradient is exercised off the origin.
        for t in params.tensors.iter_mut() {
            if t.shape().len() == 1 {
                for v in t.data.iter_mut() {
                    *v = rng.gen_range(-0.1..0.1);
                }
            }
        }
        let ep = GradEpisode::random(arch.board, max_steps, &mut rng);
        let r = finite_difference_check(&params, &ep, Variant::PiA3cTp, WorkerKind::Demonstrator, &GradCheckConfig::default(), None)?;
        total.merge(&r);
    }
    Ok(total)
}

//! Gradient-sign attacks on the cross-entropy loss.

use zcp_core::{Classifier, Tensor};

use crate::batch::{check_ball, AdvBatch};
use crate::config::AttackConfig;
use crate::error::Result;
use crate::eval::{loss_and_grad, project, sign, validate};

/// One step `clip₀₁(x + ε·sign ∇ₓJ)`.
pub fn fgsm<C: Classifier + ?Sized>(
    model: &C,
    x: &Tensor,
    labels: &[usize],
    epsilon: f64,
) -> Result<AdvBatch> {
    let n = validate(model, x, labels, epsilon)?;
    let (_, g) = loss_and_grad(model, x, labels)?;
    let adv: Vec<f64> = x
        .data()
        .iter()
        .zip(&g)
        .map(|(&v, &d)| (v + epsilon * sign(d)).clamp(0.0, 1.0))
        .collect();
    let adv = Tensor::from_vec(x.shape(), adv)?;
    AdvBatch::finish(model, x.clone(), adv, labels.to_vec(), epsilon, vec![1; n], 1)
}

pub fn pgd<C: Classifier + ?Sized>(
    model: &C,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
) -> Result<AdvBatch> {
    pgd_observed(model, x, labels, cfg, |_, _| Ok(()))
}

/// PGD from `x̃₀ = x`; `observe(step, x̃)` runs after every projected step.
pub fn pgd_observed<C: Classifier + ?Sized>(
    model: &C,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
    mut observe: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<AdvBatch> {
    let n = validate(model, x, labels, cfg.epsilon)?;
    let x0 = x.data();
    let mut cur = x0.to_vec();
    for step in 0..cfg.iters {
        let t = Tensor::from_vec(x.shape(), cur.clone())?;
        let (_, g) = loss_and_grad(model, &t, labels)?;
        for ((c, &g), &o) in cur.iter_mut().zip(&g).zip(x0) {
            *c = project(*c + cfg.alpha * sign(g), o, cfg.epsilon);
        }
        check_ball(x0, &cur, cfg.epsilon)?;
        observe(step, &cur)?;
    }
    let adv = Tensor::from_vec(x.shape(), cur)?;
    AdvBatch::finish(
        model,
        x.clone(),
        adv,
        labels.to_vec(),
        cfg.epsilon,
        vec![cfg.iters; n],
        cfg.iters,
    )
}

/// Momentum weight of the APGD update.
const APGD_MOMENTUM: f64 = 0.75;
/// Fraction of improving steps below which the step size is halved.
const APGD_RHO: f64 = 0.75;

/// Iteration indices at which APGD checks progress.
///
/// Fractions `p₀ = 0`, `p₁ = 0.22`, `p_{j+1} = p_j + max(p_j − p_{j−1} − 0.03, 0.06)`
/// of the budget, realised as shrinking integer windows.
pub fn apgd_checkpoints(iters: usize) -> Vec<usize> {
    let first = ((0.22 * iters as f64).ceil() as usize).max(1);
    let decr = ((0.03 * iters as f64).ceil() as usize).max(1);
    let min = ((0.06 * iters as f64).ceil() as usize).max(1);
    let mut out = Vec::new();
    let mut window = first;
    let mut at = window;
    while at < iters {
        out.push(at);
        window = window.saturating_sub(decr).max(min);
        at += window;
    }
    out
}

pub fn apgd<C: Classifier + ?Sized>(
    model: &C,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
) -> Result<AdvBatch> {
    apgd_observed(model, x, labels, cfg, |_, _| Ok(()))
}

struct ApgdState {
    step: f64,
    best_loss: f64,
    best_at_check: f64,
    reduced_at_check: bool,
    /// Loss after each iterate, starting with the clean input.
    history: Vec<f64>,
}

/// Auto-PGD with cross-entropy, starting at `x`.
///
/// Each sample keeps its own step size, initialised to `2ε`. At every
/// checkpoint a sample halves its step and restarts from its best point if
/// fewer than 75% of the steps in the window raised its loss, or if its step
/// was not reduced at the previous checkpoint and its best loss has not
/// improved since. The returned input is the highest-loss iterate.
pub fn apgd_observed<C: Classifier + ?Sized>(
    model: &C,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
    mut observe: impl FnMut(usize, &[f64]) -> Result<()>,
) -> Result<AdvBatch> {
    let n = validate(model, x, labels, cfg.epsilon)?;
    let eps = cfg.epsilon;
    let x0 = x.data();
    let d = x0.len() / n;
    let shape = x.shape().to_vec();

    let mut cur = x0.to_vec();
    let mut prev = cur.clone();
    let (loss, mut grad) = loss_and_grad(model, x, labels)?;
    let mut best = cur.clone();
    let mut best_grad = grad.clone();
    let mut state: Vec<ApgdState> = loss
        .iter()
        .map(|&l| ApgdState {
            step: 2.0 * eps,
            best_loss: l,
            best_at_check: l,
            reduced_at_check: false,
            history: vec![l],
        })
        .collect();
    let checkpoints = apgd_checkpoints(cfg.iters);
    let mut last_check = 0;
    let mut backward = 1;

    for it in 0..cfg.iters {
        let a = if it == 0 { 1.0 } else { APGD_MOMENTUM };
        for s in 0..n {
            let eta = state[s].step;
            for j in s * d..(s + 1) * d {
                let z = project(cur[j] + eta * sign(grad[j]), x0[j], eps);
                let moved = cur[j] + a * (z - cur[j]) + (1.0 - a) * (cur[j] - prev[j]);
                prev[j] = cur[j];
                cur[j] = project(moved, x0[j], eps);
            }
        }
        check_ball(x0, &cur, eps)?;
        observe(it, &cur)?;
        let (loss, g) = loss_and_grad(model, &Tensor::from_vec(&shape, cur.clone())?, labels)?;
        backward += 1;
        grad = g;
        for s in 0..n {
            let st = &mut state[s];
            st.history.push(loss[s]);
            if loss[s] > st.best_loss {
                st.best_loss = loss[s];
                best[s * d..(s + 1) * d].copy_from_slice(&cur[s * d..(s + 1) * d]);
                best_grad[s * d..(s + 1) * d].copy_from_slice(&grad[s * d..(s + 1) * d]);
            }
        }
        let done = it + 1;
        if checkpoints.contains(&done) {
            let window = done - last_check;
            for s in 0..n {
                let st = &mut state[s];
                let h = &st.history;
                let rises = (last_check..done).filter(|&i| h[i + 1] > h[i]).count();
                let oscillating = (rises as f64) <= APGD_RHO * window as f64;
                let stalled = !st.reduced_at_check && st.best_at_check >= st.best_loss;
                let reduce = oscillating || stalled;
                st.reduced_at_check = reduce;
                st.best_at_check = st.best_loss;
                if reduce {
                    st.step /= 2.0;
                    let r = s * d..(s + 1) * d;
                    cur[r.clone()].copy_from_slice(&best[r.clone()]);
                    grad[r.clone()].copy_from_slice(&best_grad[r]);
                }
            }
            last_check = done;
        }
    }
    let adv = Tensor::from_vec(&shape, best)?;
    AdvBatch::finish(
        model,
        x.clone(),
        adv,
        labels.to_vec(),
        eps,
        vec![cfg.iters + 1; n],
        backward,
    )
}

//! Score-based random search in the L∞ ball.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use zcp_core::params::mix64;
use zcp_core::{Classifier, Tensor};

use crate::batch::AdvBatch;
use crate::config::AttackConfig;
use crate::error::Result;
use crate::eval::{logits_counted, margins, project, validate};

/// Initial square side as a fraction of the image side.
pub const P_INIT: f64 = 0.8;

/// Fraction `p` after `it` of `budget` iterations: halved at the query
/// milestones 10, 50, 200, 500, 1000, 2000, 4000, 6000, 8000 of a notional
/// 10 000-query run, rescaled to `budget`.
pub fn p_schedule(it: usize, budget: usize) -> f64 {
    let t = (it as f64 / budget.max(1) as f64 * 10_000.0) as usize;
    let halvings = [10, 50, 200, 500, 1000, 2000, 4000, 6000, 8000]
        .iter()
        .filter(|&&m| t > m)
        .count();
    P_INIT / f64::powi(2.0, halvings as i32)
}

/// Side of the square patch: `⌈p·√(HW)⌉`, kept within `[1, min(H, W)]`.
pub fn square_side(p: f64, h: usize, w: usize) -> usize {
    let s = (p * ((h * w) as f64).sqrt()).ceil() as usize;
    s.clamp(1, h.min(w))
}

/// Untargeted Square attack on the margin `z_y − max_{k≠y} z_k`.
///
/// Starts from ±ε vertical stripes, then proposes squares whose pixels are
/// set to ±ε per channel around the clean input, keeping a proposal only when
/// it strictly lowers the margin. Samples stop once misclassified. Only
/// forward passes are used.
pub fn square<C: Classifier + ?Sized>(
    model: &C,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
) -> Result<AdvBatch> {
    let n = validate(model, x, labels, cfg.epsilon)?;
    let eps = cfg.epsilon;
    let (_, c, h, w) = x.dims4()?;
    let d = c * h * w;
    let x0 = x.data();
    let sample_shape = [1, c, h, w];
    let mut rngs: Vec<ChaCha8Rng> = (0..n)
        .map(|i| ChaCha8Rng::seed_from_u64(mix64(cfg.seed ^ mix64(i as u64))))
        .collect();

    let (z, k, mut backward) = logits_counted(model, x)?;
    let clean_margin = margins(&z, k, labels);
    let mut queries = vec![1usize; n];
    let mut best = x0.to_vec();
    let mut best_margin = clean_margin.clone();
    let mut trace: Vec<Vec<f64>> = clean_margin.iter().map(|&m| vec![m]).collect();

    let mut active: Vec<usize> = (0..n).filter(|&i| clean_margin[i] > 0.0).collect();
    if !active.is_empty() && cfg.iters > 0 {
        // Stripes: one sign per (channel, column), shared down the column.
        for &i in &active {
            let rng = &mut rngs[i];
            for ci in 0..c {
                for col in 0..w {
                    let s = if rng.random_bool(0.5) { eps } else { -eps };
                    for row in 0..h {
                        let j = i * d + (ci * h + row) * w + col;
                        best[j] = project(x0[j] + s, x0[j], eps);
                    }
                }
            }
        }
        let stripes = gather(&best, &active, d, &sample_shape)?;
        let (z, _, b) = logits_counted(model, &stripes)?;
        backward += b;
        let m = margins(&z, k, &pick(labels, &active));
        for (slot, &i) in active.iter().enumerate() {
            queries[i] += 1;
            if m[slot] < best_margin[i] {
                best_margin[i] = m[slot];
                trace[i].push(m[slot]);
            } else {
                best[i * d..(i + 1) * d].copy_from_slice(&x0[i * d..(i + 1) * d]);
            }
        }
        active.retain(|&i| best_margin[i] > 0.0);
    }

    for it in 1..cfg.iters {
        if active.is_empty() {
            break;
        }
        let side = square_side(p_schedule(it, cfg.iters), h, w);
        let mut proposals = Vec::with_capacity(active.len() * d);
        for &i in &active {
            let rng = &mut rngs[i];
            let cur = &best[i * d..(i + 1) * d];
            let orig = &x0[i * d..(i + 1) * d];
            let mut prop = cur.to_vec();
            // Redraw until the proposal changes something, as a patch whose
            // signs already match the current point is a wasted query.
            for _ in 0..10 {
                let r0 = rng.random_range(0..=h - side);
                let c0 = rng.random_range(0..=w - side);
                prop.copy_from_slice(cur);
                let mut changed = false;
                for ci in 0..c {
                    let s = if rng.random_bool(0.5) { eps } else { -eps };
                    for row in r0..r0 + side {
                        for col in c0..c0 + side {
                            let j = (ci * h + row) * w + col;
                            let v = project(orig[j] + s, orig[j], eps);
                            changed |= v != prop[j];
                            prop[j] = v;
                        }
                    }
                }
                if changed {
                    break;
                }
            }
            proposals.extend_from_slice(&prop);
        }
        let batch = Tensor::from_vec(&[active.len(), c, h, w], proposals)?;
        let (z, _, b) = logits_counted(model, &batch)?;
        backward += b;
        let m = margins(&z, k, &pick(labels, &active));
        let pd = batch.data();
        for (slot, &i) in active.iter().enumerate() {
            queries[i] += 1;
            if m[slot] < best_margin[i] {
                best_margin[i] = m[slot];
                best[i * d..(i + 1) * d].copy_from_slice(&pd[slot * d..(slot + 1) * d]);
                trace[i].push(m[slot]);
            }
        }
        active.retain(|&i| best_margin[i] > 0.0);
    }

    let adv = Tensor::from_vec(x.shape(), best)?;
    let mut out = AdvBatch::finish(model, x.clone(), adv, labels.to_vec(), eps, queries, backward)?;
    out.margin_trace = trace;
    Ok(out)
}

fn gather(all: &[f64], rows: &[usize], d: usize, sample_shape: &[usize; 4]) -> Result<Tensor> {
    let mut v = Vec::with_capacity(rows.len() * d);
    for &i in rows {
        v.extend_from_slice(&all[i * d..(i + 1) * d]);
    }
    let [_, c, h, w] = *sample_shape;
    Ok(Tensor::from_vec(&[rows.len(), c, h, w], v)?)
}

fn pick(labels: &[usize], rows: &[usize]) -> Vec<usize> {
    rows.iter().map(|&i| labels[i]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_halves_at_milestones() {
        assert_eq!(p_schedule(0, 10_000), 0.8);
        assert_eq!(p_schedule(11, 10_000), 0.4);
        assert_eq!(p_schedule(51, 10_000), 0.2);
        assert_eq!(p_schedule(9000, 10_000), 0.8 / 512.0);
        // Rescaled: 5000 queries reach the first milestone at iteration 6.
        assert_eq!(p_schedule(5, 5000), 0.8);
        assert_eq!(p_schedule(6, 5000), 0.4);
    }

    #[test]
    fn side_bounds() {
        assert_eq!(square_side(0.8, 16, 16), 13);
        assert_eq!(square_side(0.8 / 512.0, 16, 16), 1);
        assert_eq!(square_side(0.8, 2, 2), 2);
    }
}

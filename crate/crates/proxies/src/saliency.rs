//! Gradient-times-weight scores.

use zcp_core::{
    hvp, BnMode, CrossEntropyObjective, ForwardOpts, Model, Objective, ParamSet, Tape, Tensor,
};

use crate::batch::ScoreBatch;
use crate::error::{finite, Result};

/// Scores derived from one loss gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientScores {
    pub grad_norm: f64,
    pub snip: f64,
    pub plain: f64,
}

/// Per-tensor gradients of an objective, aligned with `params`.
pub fn param_grads<O: Objective>(obj: &O, params: &ParamSet) -> Result<Vec<Vec<f64>>> {
    let mut tape = Tape::<f64>::new();
    let vars = params.load(&mut tape);
    let root = obj.eval(&mut tape, &vars)?;
    tape.backward(root)?;
    Ok(grads_of(&tape, &vars))
}

fn grads_of(tape: &Tape<f64>, vars: &[zcp_core::Var]) -> Vec<Vec<f64>> {
    vars.iter()
        .map(|&v| match tape.grad(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; tape.value(v).numel()],
        })
        .collect()
}

/// grad_norm, snip and plain from precomputed gradients.
///
/// Only conv and linear weight tensors contribute.
pub fn gradient_scores(params: &ParamSet, grads: &[Vec<f64>]) -> Result<GradientScores> {
    let mut s = GradientScores {
        grad_norm: 0.0,
        snip: 0.0,
        plain: 0.0,
    };
    for (p, g) in params.iter().zip(grads) {
        if !p.kind.is_weight() {
            continue;
        }
        s.grad_norm += g.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (w, g) in p.tensor.data().iter().zip(g) {
            s.snip += (w * g).abs();
            s.plain += w * g;
        }
    }
    finite("grad_norm", s.grad_norm)?;
    finite("snip", s.snip)?;
    finite("plain", s.plain)?;
    Ok(s)
}

pub fn gradient_scores_of<O: Objective>(obj: &O, params: &ParamSet) -> Result<GradientScores> {
    gradient_scores(params, &param_grads(obj, params)?)
}

/// `-Σ (H g) ⊙ w` over weight entries, `g` the weight gradient.
pub fn grasp_of<O: Objective>(obj: &O, params: &ParamSet, grads: &[Vec<f64>]) -> Result<f64> {
    let mask = params.weight_mask();
    let v: Vec<f64> = grads
        .iter()
        .flatten()
        .zip(&mask)
        .map(|(&g, &m)| if m { g } else { 0.0 })
        .collect();
    let hg = hvp(obj, params, &v)?;
    let score: f64 = params
        .flat()
        .iter()
        .zip(&hg)
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|((w, h), _)| -h * w)
        .sum();
    finite("grasp", score)
}

/// Loss gradients and the fisher score from one forward/backward pass of the
/// cross-entropy on `batch`.
pub struct LossPass {
    pub grads: Vec<Vec<f64>>,
    pub fisher: f64,
}

pub fn loss_pass<M: Model>(model: &M, batch: &ScoreBatch) -> Result<LossPass> {
    let mut tape = Tape::<f64>::new();
    let vars = model.params().load(&mut tape);
    let x = tape.constant(batch.inputs.clone());
    let trace = model.forward(&mut tape, &vars, x, &ForwardOpts::TRAIN)?;
    let loss = tape.softmax_cross_entropy(trace.logits, &batch.labels)?;
    tape.backward(loss)?;
    let mut fisher = 0.0;
    for &a in &trace.activations {
        let Some(g) = tape.grad(a) else { continue };
        let value = tape.value(a);
        let (n, c) = (value.shape()[0], value.shape()[1]);
        let hw = value.numel() / (n * c);
        let d = value.data();
        for ci in 0..c {
            let mut acc = 0.0;
            for ni in 0..n {
                let b = (ni * c + ci) * hw;
                let s: f64 = (b..b + hw).map(|i| d[i] * g[i]).sum();
                acc += s * s;
            }
            fisher += acc / n as f64;
        }
    }
    Ok(LossPass {
        grads: grads_of(&tape, &vars),
        fisher: finite("fisher", fisher)?,
    })
}

pub fn fisher<M: Model>(model: &M, batch: &ScoreBatch) -> Result<f64> {
    Ok(loss_pass(model, batch)?.fisher)
}

pub fn grasp<M: Model>(model: &M, batch: &ScoreBatch) -> Result<f64> {
    let obj = cross_entropy(model, batch);
    let grads = param_grads(&obj, model.params())?;
    grasp_of(&obj, model.params(), &grads)
}

pub(crate) fn cross_entropy<'a, M: Model>(
    model: &'a M,
    batch: &'a ScoreBatch,
) -> CrossEntropyObjective<'a, M> {
    CrossEntropyObjective {
        model,
        inputs: &batch.inputs,
        labels: &batch.labels,
        opts: ForwardOpts::TRAIN,
    }
}

/// `Σ |w| ⊙ |∂R/∂w|` over weights, where `R` sums the logits of an all-ones
/// input under absolute-valued parameters and pass-through normalisation.
///
/// No data enters the computation.
pub fn synflow<M: Model>(model: &M) -> Result<f64> {
    let abs = model.params().map(|p| p.tensor.map(f64::abs));
    let mut tape = Tape::<f64>::new();
    let vars = abs.load(&mut tape);
    let [c, h, w] = model.input_shape();
    let x = tape.constant(Tensor::full(&[1, c, h, w], 1.0));
    let opts = ForwardOpts {
        bn: BnMode::Identity,
    };
    let trace = model.forward(&mut tape, &vars, x, &opts)?;
    let r = tape.sum(trace.logits)?;
    tape.backward(r)?;
    let grads = grads_of(&tape, &vars);
    let score: f64 = abs
        .iter()
        .zip(&grads)
        .filter(|(p, _)| p.kind.is_weight())
        .flat_map(|(p, g)| p.tensor.data().iter().zip(g).map(|(w, g)| (w * g).abs()))
        .sum();
    finite("synflow", score)
}

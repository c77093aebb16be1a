//! Forward and gradient queries against a classifier.

use zcp_core::{Classifier, Tape, Tensor};

use crate::error::{AttackError, Result};

/// Logits of a batch, row-major `(N, K)`.
pub(crate) fn logits<C: Classifier + ?Sized>(model: &C, x: &Tensor) -> Result<(Vec<f64>, usize)> {
    let (z, k, _) = logits_counted(model, x)?;
    Ok((z, k))
}

/// Like [`logits`], also reporting the backward sweeps run on the tape.
pub(crate) fn logits_counted<C: Classifier + ?Sized>(
    model: &C,
    x: &Tensor,
) -> Result<(Vec<f64>, usize, usize)> {
    let mut tape = Tape::<f64>::new();
    let v = tape.constant(x.clone());
    let z = model.logits(&mut tape, v)?;
    let (_, k) = tape.value(z).dims2()?;
    Ok((tape.value(z).data().to_vec(), k, tape.backward_calls()))
}

pub(crate) fn cross_entropy_rows(z: &[f64], k: usize, labels: &[usize]) -> Vec<f64> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = &z[i * k..(i + 1) * k];
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            lse - row[y]
        })
        .collect()
}

/// `z_y - max_{k≠y} z_k` per row; negative means misclassified.
pub(crate) fn margins(z: &[f64], k: usize, labels: &[usize]) -> Vec<f64> {
    labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let row = &z[i * k..(i + 1) * k];
            let other = row
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != y)
                .fold(f64::NEG_INFINITY, |a, (_, &b)| a.max(b));
            row[y] - other
        })
        .collect()
}

pub(crate) fn argmax_rows(z: &[f64], k: usize) -> Vec<usize> {
    z.chunks(k)
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Per-sample cross-entropy and the input gradient of the batch mean.
///
/// With per-sample independent logits the gradient rows are the per-sample
/// gradients scaled by `1/N`; every attack here only uses their sign.
pub(crate) fn loss_and_grad<C: Classifier + ?Sized>(
    model: &C,
    x: &Tensor,
    labels: &[usize],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::<f64>::new();
    let v = tape.leaf(x.clone(), true);
    let z = model.logits(&mut tape, v)?;
    let (_, k) = tape.value(z).dims2()?;
    let losses = cross_entropy_rows(tape.value(z).data(), k, labels);
    let loss = tape.softmax_cross_entropy(z, labels)?;
    tape.backward(loss)?;
    let g = match tape.grad(v) {
        Some(g) => g.to_vec(),
        None => vec![0.0; x.numel()],
    };
    Ok((losses, g))
}

pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clamps `v` into the ε-ball around `x0` and then into `[0, 1]`.
pub(crate) fn project(v: f64, x0: f64, eps: f64) -> f64 {
    v.clamp(x0 - eps, x0 + eps).clamp(0.0, 1.0)
}

pub(crate) fn validate<C: Classifier + ?Sized>(
    model: &C,
    x: &Tensor,
    labels: &[usize],
    eps: f64,
) -> Result<usize> {
    let (n, c, h, w) = x.dims4()?;
    if [c, h, w] != model.input_shape() {
        return Err(AttackError::Input(format!(
            "sample shape {:?} does not match model input {:?}",
            [c, h, w],
            model.input_shape()
        )));
    }
    if labels.len() != n {
        return Err(AttackError::Input(format!("{} labels for {n} samples", labels.len())));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= model.num_classes()) {
        return Err(AttackError::Input(format!("label {l} outside 0..{}", model.num_classes())));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(AttackError::Input(format!("epsilon {eps} outside [0, 1]")));
    }
    if x.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(AttackError::Input("pixels outside [0, 1]".into()));
    }
    Ok(n)
}

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use zcp_core::{ForwardOpts, Model, Tape, Tensor};

use crate::error::{finite, Result};
use crate::stats::{row_correlation, sym_eigenvalues};

/// Gradient of the summed logits with respect to each input, one row per
/// sample.
///
/// Uses a single backward pass over the batch. With batch statistics in the
/// normalisation layers the rows include the cross-sample terms those layers
/// introduce.
pub fn per_sample_jacobian<M: Model>(model: &M, inputs: &Tensor) -> Result<DMatrix<f64>> {
    let mut tape = Tape::<f64>::new();
    let params = model.params().load(&mut tape);
    let x = tape.leaf(inputs.clone(), true);
    let trace = model.forward(&mut tape, &params, x, &ForwardOpts::TRAIN)?;
    let root = tape.sum(trace.logits)?;
    tape.backward(root)?;
    let n = inputs.shape()[0];
    let d = inputs.numel() / n;
    // An output disconnected from the input has a zero Jacobian.
    Ok(match tape.grad(x) {
        Some(g) => DMatrix::from_row_slice(n, d, g),
        None => DMatrix::zeros(n, d),
    })
}

/// `-Σ [ln(λ + k) + 1/(λ + k)]` over the eigenvalues of the row correlation.
pub fn jacov_from_jacobian(jac: &DMatrix<f64>, k: f64) -> Result<f64> {
    let ids: Vec<usize> = (0..jac.nrows()).collect();
    let c = row_correlation(jac, &ids)?;
    let score: f64 = sym_eigenvalues(&c)
        .into_iter()
        .map(|l| {
            let l = l.max(0.0) + k;
            l.ln() + 1.0 / l
        })
        .sum();
    finite("jacov", -score)
}

/// Sum over classes of `|Σ_ij ln(|C_c[i,j]| + k)|`; singleton classes are
/// skipped.
pub fn epe_nas_from_jacobian(jac: &DMatrix<f64>, labels: &[usize], k: f64) -> Result<f64> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut total = 0.0;
    let mut used = 0;
    for rows in by_class.values().filter(|r| r.len() >= 2) {
        let sub = jac.select_rows(rows.iter());
        let c = row_correlation(&sub, rows)?;
        let e: f64 = c.iter().map(|v| (v.abs() + k).ln()).sum();
        total += e.abs();
        used += 1;
    }
    if used == 0 {
        return Err(crate::ProxyError::NoUsableClass);
    }
    finite("epe_nas", total)
}

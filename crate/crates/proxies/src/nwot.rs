use nalgebra::DMatrix;
use zcp_core::{ForwardOpts, Model, Tape, Tensor};

use crate::error::{finite, ProxyError, Result};
use crate::stats::sym_eigenvalues;

/// Binary activation codes: entry `(i, j)` is 1 when unit `j` of
/// the concatenated ReLU outputs is positive for sample `i`.
pub fn activation_codes<M: Model>(model: &M, inputs: &Tensor) -> Result<DMatrix<f64>> {
    let mut tape = Tape::<f64>::new();
    let params = model.params().load(&mut tape);
    let x = tape.constant(inputs.clone());
    let trace = model.forward(&mut tape, &params, x, &ForwardOpts::TRAIN)?;
    if trace.activations.is_empty() {
        return Err(ProxyError::Batch("network has no relu".into()));
    }
    let n = inputs.shape()[0];
    let per: Vec<usize> = trace
        .activations
        .iter()
        .map(|&a| tape.value(a).numel() / n)
        .collect();
    let total: usize = per.iter().sum();
    let mut codes = DMatrix::zeros(n, total);
    let mut off = 0;
    for (&a, &w) in trace.activations.iter().zip(&per) {
        let d = tape.value(a).data();
        for i in 0..n {
            for j in 0..w {
                if d[i * w + j] > 0.0 {
                    codes[(i, off + j)] = 1.0;
                }
            }
        }
        off += w;
    }
    Ok(codes)
}

/// `ln|det K|` with `K[i,j] = N_A - hamming(c_i, c_j)`.
///
/// When `K` is numerically singular, `jitter·N_A` is added to its diagonal.
pub fn nwot_from_codes(codes: &DMatrix<f64>, jitter: f64) -> Result<f64> {
    let na = codes.ncols() as f64;
    let ones = codes.map(|v| 1.0 - v);
    let mut k = codes * codes.transpose() + &ones * ones.transpose();
    let mut ev = sym_eigenvalues(&k);
    let top = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let singular = top == 0.0 || ev.iter().any(|v| v.abs() <= 1e-10 * top);
    if singular {
        for i in 0..k.nrows() {
            k[(i, i)] += jitter * na;
        }
        ev = sym_eigenvalues(&k);
    }
    finite("nwot", ev.iter().map(|v| v.abs().ln()).sum())
}

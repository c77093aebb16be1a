//! Central-difference gradient checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// `(leaf, element, autodiff, finite difference)` of the worst coordinate.
    pub worst: (usize, usize, f64, f64),
}

/// Relative error with a floor so that vanishing gradients compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Compares the tape gradient of `f` at `leaves` with central differences
/// of step `h` on `coords` coordinates drawn uniformly over all leaf entries.
pub fn gradcheck(
    f: impl Fn(&mut Tape, &[Var]) -> Result<Var>,
    leaves: &[Tensor],
    coords: usize,
    h: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    let eval = |ls: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::<f64>::new();
        let vars: Vec<Var> = ls.iter().map(|t| tape.param(t.clone())).collect();
        let root = f(&mut tape, &vars)?;
        Ok(tape.value(root).item())
    };
    let mut tape = Tape::<f64>::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.param(t.clone())).collect();
    let root = f(&mut tape, &vars)?;
    tape.backward(root)?;
    let grads: Vec<Vec<f64>> = vars
        .iter()
        .zip(leaves)
        .map(|(&v, t)| tape.grad(v).map_or(vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();

    let offsets: Vec<usize> = leaves
        .iter()
        .scan(0, |acc, t| {
            let o = *acc;
            *acc += t.numel();
            Some(o)
        })
        .collect();
    let total: usize = leaves.iter().map(Tensor::numel).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks = sample(&mut rng, total, coords.min(total));
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: (0, 0, 0.0, 0.0),
    };
    for flat in picks.iter() {
        let leaf = offsets.partition_point(|&o| o <= flat) - 1;
        let elem = flat - offsets[leaf];
        let mut ls = leaves.to_vec();
        let x0 = ls[leaf].data()[elem];
        ls[leaf].data_mut()[elem] = x0 + h;
        let up = eval(&ls)?;
        ls[leaf].data_mut()[elem] = x0 - h;
        let down = eval(&ls)?;
        let fd = (up - down) / (2.0 * h);
        let ad = grads[leaf][elem];
        let e = rel_err(ad, fd);
        if e >= report.max_rel_err {
            report.max_rel_err = e;
            report.worst = (leaf, elem, ad, fd);
        }
        report.checked += 1;
    }
    Ok(report)
}

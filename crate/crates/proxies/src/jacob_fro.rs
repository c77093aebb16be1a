use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use zcp_core::{ForwardOpts, Model, Tape, Tensor};

use crate::batch::ScoreBatch;
use crate::error::{finite, ProxyError, Result};

/// Which network output the perturbation distance is measured on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputSpace {
    #[default]
    Softmax,
    Logits,
}

/// Mean squared change of the output under `repeats` uniform perturbations
/// in `[-ε, ε]`, averaged over perturbations and samples.
pub fn jacob_fro<M: Model>(
    model: &M,
    batch: &ScoreBatch,
    repeats: usize,
    output: OutputSpace,
) -> Result<f64> {
    let eps = batch.epsilon;
    if eps <= 0.0 {
        return Err(ProxyError::Batch("jacob_fro needs epsilon > 0".into()));
    }
    let n = batch.len();
    let base = outputs(model, &batch.inputs, output)?;
    let mut rng = ChaCha8Rng::seed_from_u64(batch.seed);
    let mut total = 0.0;
    for _ in 0..repeats {
        let data = batch
            .inputs
            .data()
            .iter()
            .map(|v| v + rng.random_range(-eps..=eps))
            .collect();
        let shifted = Tensor::from_vec(batch.inputs.shape(), data)?;
        let out = outputs(model, &shifted, output)?;
        total += out.iter().zip(&base).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    }
    finite("jacob_fro", total / (repeats * n) as f64)
}

fn outputs<M: Model>(model: &M, x: &Tensor, space: OutputSpace) -> Result<Vec<f64>> {
    let mut tape = Tape::<f64>::new();
    let vars = model.params().load(&mut tape);
    let x = tape.constant(x.clone());
    let trace = model.forward(&mut tape, &vars, x, &ForwardOpts::TRAIN)?;
    let z = tape.value(trace.logits);
    let (rows, k) = z.dims2()?;
    let mut out = z.data().to_vec();
    if space == OutputSpace::Softmax {
        for r in 0..rows {
            let row = &mut out[r * k..(r + 1) * k];
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.iter_mut().for_each(|v| *v = (*v - m).exp());
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    Ok(out)
}

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use zcp_core::{BnMode, ForwardOpts, Model, Tape, Tensor};

use crate::error::{finite, ProxyError, Result};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ZenConfig {
    pub alpha: f64,
    pub repeats: usize,
    pub batch: usize,
}

impl Default for ZenConfig {
    fn default() -> Self {
        ZenConfig {
            alpha: 0.01,
            repeats: 8,
            batch: 8,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Expressivity score of a network with Gaussian weights and inputs.
///
/// Draw order from `seed`: every conv/linear weight in parameter order, then
/// for each repeat the input `x` followed by the direction `δ`. Normalisation
/// layers pass inputs through; their input statistics during the `x` pass
/// contribute `Σ ln σ̄`, averaged over repeats.
pub fn zen<M: Model>(model: &M, cfg: &ZenConfig, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = model.params().clone();
    for p in params.iter_mut().filter(|p| p.kind.is_weight()) {
        let data = gaussian(&mut rng, p.tensor.numel());
        p.tensor.data_mut().copy_from_slice(&data);
    }
    let [c, h, w] = model.input_shape();
    let shape = [cfg.batch, c, h, w];
    let n = cfg.batch * c * h * w;
    let opts = ForwardOpts {
        bn: BnMode::Identity,
    };
    let mut delta_sum = 0.0;
    let mut bn_sum = 0.0;
    for _ in 0..cfg.repeats {
        let x = gaussian(&mut rng, n);
        let d = gaussian(&mut rng, n);
        let xp: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + cfg.alpha * b).collect();
        let (f0, stats) = features(model, &params, Tensor::from_vec(&shape, x)?, &opts)?;
        let (f1, _) = features(model, &params, Tensor::from_vec(&shape, xp)?, &opts)?;
        let diff: f64 = f0.iter().zip(&f1).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        delta_sum += diff;
        bn_sum += stats.iter().map(|s| s.ln()).sum::<f64>();
    }
    let delta = delta_sum / cfg.repeats as f64;
    if delta == 0.0 {
        return Err(ProxyError::ZeroDelta);
    }
    finite("zen", delta.ln() + bn_sum / cfg.repeats as f64)
}

fn features<M: Model>(
    model: &M,
    params: &zcp_core::ParamSet,
    x: Tensor,
    opts: &ForwardOpts,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::<f64>::new();
    let vars = params.load(&mut tape);
    let x = tape.constant(x);
    let trace = model.forward(&mut tape, &vars, x, opts)?;
    let stats = trace.bn_stats.iter().map(|s| s.mean_std()).collect();
    Ok((tape.value(trace.features).data().to_vec(), stats))
}

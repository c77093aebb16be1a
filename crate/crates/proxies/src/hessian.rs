use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use zcp_core::{dot, hvp, norm, Model, Objective, ParamSet};

use crate::batch::ScoreBatch;
use crate::error::{finite, Result};
use crate::saliency::cross_entropy;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerConfig {
    pub max_iters: usize,
    /// Stop once `‖Hv - λv‖ / |λ|` falls below this, i.e. once one more step
    /// would change the iterate by less than this fraction. The same bound
    /// holds for the eigenvalue error.
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            max_iters: 30,
            rel_tol: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Eigen {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Dominant Hessian eigenvalue by power iteration, sign preserved.
pub fn power_iteration<O: Objective>(obj: &O, params: &ParamSet, cfg: &PowerConfig) -> Result<Eigen> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v: Vec<f64> = (0..params.numel()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);
    let mut out = Eigen {
        value: 0.0,
        iterations: 0,
        converged: false,
    };
    for it in 1..=cfg.max_iters {
        let hv = hvp(obj, params, &v)?;
        let lambda = finite("hessian_eig", dot(&v, &hv))?;
        out.value = lambda;
        out.iterations = it;
        let hn = norm(&hv);
        if hn == 0.0 {
            out.converged = true;
            break;
        }
        let residual = hv
            .iter()
            .zip(&v)
            .map(|(h, x)| (h - lambda * x).powi(2))
            .sum::<f64>()
            .sqrt();
        v = hv.iter().map(|x| x / hn).collect();
        if residual < cfg.rel_tol * lambda.abs() {
            out.converged = true;
            break;
        }
    }
    Ok(out)
}

pub fn hessian_eig<M: Model>(model: &M, batch: &ScoreBatch, cfg: &PowerConfig) -> Result<Eigen> {
    power_iteration(&cross_entropy(model, batch), model.params(), cfg)
}

//! Short fixed-budget training so attacks meet a non-random classifier.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use zcp_core::{value_and_grad, CrossEntropyObjective, ForwardOpts, Model, Network};

use crate::dataset::ImageSet;
use crate::error::{invalid, Result};

/// Plain minibatch SGD, no momentum or weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            learning_rate: 0.05,
            batch_size: 16,
            seed: 0,
        }
    }
}

/// Trains `net` in place; returns the mean minibatch loss of each epoch.
///
/// Minibatches smaller than two samples are skipped (batch statistics need
/// two).
pub fn train_sgd(net: &mut Network, data: &ImageSet, cfg: &TrainConfig) -> Result<Vec<f64>> {
    if cfg.batch_size < 2 {
        return Err(invalid("batch_size must be at least 2"));
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(invalid("learning_rate must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size).filter(|c| c.len() >= 2) {
            let b = data.select(chunk);
            let obj = CrossEntropyObjective {
                model: &*net,
                inputs: &b.inputs,
                labels: &b.labels,
                opts: ForwardOpts::TRAIN,
            };
            let (loss, g) = value_and_grad(&obj, net.params())?;
            let mut flat = net.params().flat();
            for (w, g) in flat.iter_mut().zip(&g) {
                *w -= cfg.learning_rate * g;
            }
            net.params_mut().set_flat(&flat)?;
            total += loss;
            steps += 1;
        }
        history.push(if steps > 0 { total / steps as f64 } else { f64::NAN });
    }
    Ok(history)
}

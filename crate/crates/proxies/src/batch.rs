use zcp_core::Tensor;

use crate::error::{ProxyError, Result};

/// One labelled mini-batch plus the perturbation scale and seed used by the
/// stochastic proxies.
#[derive(Clone, Debug)]
pub struct ScoreBatch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    /// Perturbation magnitude on the pixel scale.
    pub epsilon: f64,
    pub seed: u64,
}

impl ScoreBatch {
    pub fn new(inputs: Tensor, labels: Vec<usize>, epsilon: f64, seed: u64) -> Result<Self> {
        let b = ScoreBatch {
            inputs,
            labels,
            epsilon,
            seed,
        };
        let n = b.inputs.shape().first().copied().unwrap_or(0);
        if b.inputs.shape().len() != 4 {
            return Err(ProxyError::Batch(format!(
                "inputs must be NCHW, got shape {:?}",
                b.inputs.shape()
            )));
        }
        if n < 2 {
            return Err(ProxyError::Batch(format!("need at least 2 samples, got {n}")));
        }
        if b.labels.len() != n {
            return Err(ProxyError::Batch(format!(
                "{} labels for {n} samples",
                b.labels.len()
            )));
        }
        if !(0.0..=1.0).contains(&b.epsilon) {
            return Err(ProxyError::Batch(format!("epsilon {} outside [0, 1]", b.epsilon)));
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Fails unless every label is below `classes`.
    pub fn check_labels(&self, classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&l| l >= classes) {
            Some(l) => Err(ProxyError::Batch(format!("label {l} outside 0..{classes}"))),
            None => Ok(()),
        }
    }
}

use zcp_core::{Classifier, Tensor};

use crate::error::{AttackError, Result};
use crate::eval::{argmax_rows, cross_entropy_rows, logits};

/// Tolerance on the ε-ball constraint.
pub const BALL_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct AdvBatch {
    pub clean: Tensor,
    pub adversarial: Tensor,
    pub labels: Vec<usize>,
    /// True where the adversarial input is misclassified.
    pub success: Vec<bool>,
    /// Cross-entropy of each adversarial input.
    pub loss: Vec<f64>,
    /// Model evaluations per sample: gradient steps or forward queries.
    pub queries: Vec<usize>,
    /// Backward sweeps run on any tape during the attack.
    pub backward_calls: usize,
    /// Square attack only: margin after the initial query and after each
    /// accepted proposal.
    pub margin_trace: Vec<Vec<f64>>,
}

impl AdvBatch {
    pub(crate) fn finish<C: Classifier + ?Sized>(
        model: &C,
        clean: Tensor,
        adversarial: Tensor,
        labels: Vec<usize>,
        epsilon: f64,
        queries: Vec<usize>,
        backward_calls: usize,
    ) -> Result<AdvBatch> {
        let (z, k) = logits(model, &adversarial)?;
        let pred = argmax_rows(&z, k);
        let b = AdvBatch {
            success: pred.iter().zip(&labels).map(|(p, y)| p != y).collect(),
            loss: cross_entropy_rows(&z, k, &labels),
            clean,
            adversarial,
            labels,
            queries,
            backward_calls,
            margin_trace: Vec::new(),
        };
        b.check(epsilon)?;
        Ok(b)
    }

    /// ε-ball and pixel-range constraints.
    pub fn check(&self, epsilon: f64) -> Result<()> {
        check_ball(self.clean.data(), self.adversarial.data(), epsilon)
    }

    pub fn robust_accuracy(&self) -> f64 {
        let ok = self.success.iter().filter(|s| !**s).count();
        ok as f64 / self.success.len() as f64
    }
}

pub(crate) fn check_ball(clean: &[f64], adv: &[f64], epsilon: f64) -> Result<()> {
    for (i, (&c, &a)) in clean.iter().zip(adv).enumerate() {
        if !(0.0..=1.0).contains(&a) {
            return Err(AttackError::Invariant(format!("pixel {i} = {a} outside [0, 1]")));
        }
        if (a - c).abs() > epsilon + BALL_TOL {
            return Err(AttackError::Invariant(format!(
                "pixel {i} moved {} > epsilon {epsilon}",
                (a - c).abs()
            )));
        }
    }
    Ok(())
}

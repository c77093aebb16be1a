use zcp_core::{Classifier, Tensor};

use crate::batch::AdvBatch;
use crate::config::{AttackConfig, AttackKind};
use crate::error::{AttackError, Result};
use crate::eval::{argmax_rows, logits};
use crate::gradient::{apgd, fgsm, pgd};
use crate::square::square;

/// Runs the attack named by `cfg.kind`.
pub fn attack<C: Classifier + ?Sized>(
    model: &C,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
) -> Result<AdvBatch> {
    match cfg.kind {
        AttackKind::Fgsm => fgsm(model, x, labels, cfg.epsilon),
        AttackKind::Pgd => pgd(model, x, labels, cfg),
        AttackKind::Apgd => apgd(model, x, labels, cfg),
        AttackKind::Square => square(model, x, labels, cfg),
    }
}

/// Fraction of samples still classified correctly after the attack.
pub fn robust_accuracy<C: Classifier + ?Sized>(
    model: &C,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
) -> Result<f64> {
    if labels.is_empty() {
        return Err(AttackError::Empty);
    }
    Ok(attack(model, x, labels, cfg)?.robust_accuracy())
}

pub fn clean_accuracy<C: Classifier + ?Sized>(model: &C, x: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(AttackError::Empty);
    }
    let (z, k) = logits(model, x)?;
    let pred = argmax_rows(&z, k);
    let ok = pred.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(ok as f64 / labels.len() as f64)
}
